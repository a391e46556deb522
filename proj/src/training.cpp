#include "dgct/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dgct {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw FormatError("config: invalid number for " + key + ": '" + v + "'");
  }
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw FormatError("config: invalid integer for " + key + ": '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("config: invalid boolean for " + key + ": '" + v + "'");
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define DGCT_DOUBLE(name, member)                                                        \
  Field {                                                                                \
    name, [](TrainConfig& c, const std::string& v) { c.member = parse_double(name, v); }, \
        [](const TrainConfig& c) { return format_double(c.member); }                     \
  }
#define DGCT_INT(name, member)                                                                  \
  Field {                                                                                       \
    name, [](TrainConfig& c, const std::string& v) { c.member = parse_int<int>(name, v); },      \
        [](const TrainConfig& c) { return std::to_string(c.member); }                           \
  }
#define DGCT_BOOL(name, member)                                                           \
  Field {                                                                                 \
    name, [](TrainConfig& c, const std::string& v) { c.member = parse_bool(name, v); },    \
        [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); }     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DGCT_INT("iters_total", iters_total),
      DGCT_INT("iters_warmup", iters_warmup),
      DGCT_DOUBLE("lr_position", lr.position),
      DGCT_DOUBLE("lr_density", lr.density),
      DGCT_DOUBLE("lr_scale", lr.scale),
      DGCT_DOUBLE("lr_rotation", lr.rotation),
      DGCT_DOUBLE("lr_planes", lr.planes),
      DGCT_DOUBLE("lr_decoder", lr.decoder),
      DGCT_DOUBLE("lr_tau", lr.tau),
      DGCT_DOUBLE("lr_floor", lr_floor),
      DGCT_BOOL("densify", densify.enabled),
      DGCT_INT("densify_interval", densify.interval),
      DGCT_INT("densify_start", densify.start),
      DGCT_DOUBLE("densify_percentile", densify.percentile),
      DGCT_DOUBLE("prune_density", densify.prune_density),
      DGCT_INT("max_kernels", densify.max_kernels),
      Field{"seed",
            [](TrainConfig& c, const std::string& v) {
              c.seed = parse_int<std::uint64_t>("seed", v);
            },
            [](const TrainConfig& c) { return std::to_string(c.seed); }},
      DGCT_DOUBLE("lambda1", weights.lambda1),
      DGCT_DOUBLE("lambda2", weights.lambda2),
      DGCT_DOUBLE("alpha", weights.alpha),
      DGCT_DOUBLE("beta", weights.beta),
      DGCT_DOUBLE("gamma", weights.gamma),
      DGCT_INT("kernels", kernels),
      DGCT_INT("init_grid_res", init_grid_res),
      DGCT_DOUBLE("init_quantile", init_quantile),
      DGCT_INT("levels", planes.levels),
      DGCT_INT("base_res", planes.base_res),
      DGCT_INT("time_res", planes.time_res),
      DGCT_INT("features", planes.features),
      DGCT_INT("decoder_width", decoder_width),
      DGCT_DOUBLE("period_upper_bound", period_upper_bound),
      DGCT_DOUBLE("tau0", tau0),
      DGCT_INT("max_shift", max_shift),
      DGCT_BOOL("dynamic", dynamic),
      DGCT_INT("tv_res", tv_res),
      DGCT_DOUBLE("tv_edge", tv_edge),
  };
  return table;
}

#undef DGCT_DOUBLE
#undef DGCT_INT
#undef DGCT_BOOL

void adam_update(double& p, double& m, double& v, double g, double lr, double bc1, double bc2) {
  m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
  v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
  p -= lr * (m / bc1) / (std::sqrt(v / bc2) + kAdamEps);
}

void adam_span(std::span<double> p, std::span<double> m, std::span<double> v,
               std::span<const double> g, double lr, double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) adam_update(p[i], m[i], v[i], g[i], lr, bc1, bc2);
}

bool finite_terms(const LossTerms& t) {
  return std::isfinite(t.render) && std::isfinite(t.pc) && std::isfinite(t.tv3d) &&
         std::isfinite(t.tv4d) && std::isfinite(t.total);
}

void reset_densify_stats(TrainState& s) {
  const std::size_t k = s.model.gaussians.size();
  s.grad_norm_sum.assign(k, 0.0);
  s.grad_sum.assign(k, Vec3::Zero());
  s.grad_count.assign(k, 0);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(0 < iters_warmup && iters_warmup <= iters_total)) {
    throw InputDomainError("config: need 0 < iters_warmup <= iters_total");
  }
  const double rates[] = {lr.position, lr.density, lr.scale, lr.rotation,
                          lr.planes,   lr.decoder, lr.tau};
  for (double r : rates) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw InputDomainError("config: learning rates must be >= 0");
  }
  if (!(lr_floor > 0.0 && lr_floor <= 1.0)) throw InputDomainError("config: lr_floor must be in (0, 1]");
  weights.validate();
  if (kernels < 1) throw InputDomainError("config: kernels must be >= 1");
  if (init_grid_res < 2) throw InputDomainError("config: init_grid_res must be >= 2");
  if (!(init_quantile >= 0.0 && init_quantile < 1.0)) {
    throw InputDomainError("config: init_quantile must be in [0, 1)");
  }
  if (planes.levels < 1 || planes.base_res < 2 || planes.time_res < 2 || planes.features < 1) {
    throw InputDomainError("config: invalid plane grid shape");
  }
  if (decoder_width < 1) throw InputDomainError("config: decoder_width must be >= 1");
  if (!(period_upper_bound >= 0.0)) throw InputDomainError("config: period_upper_bound must be >= 0");
  if (max_shift < 1) throw InputDomainError("config: max_shift must be >= 1");
  if (tv_res < 2 || !(tv_edge > 0.0)) throw InputDomainError("config: invalid TV sub-grid");
  if (densify.enabled && densify.interval < 1) {
    throw InputDomainError("config: densify_interval must be >= 1");
  }
  if (!(densify.percentile >= 0.0 && densify.percentile <= 1.0)) {
    throw InputDomainError("config: densify_percentile must be in [0, 1]");
  }
}

TrainConfig desk_preset() { return TrainConfig{}; }

TrainConfig paper_preset() {
  TrainConfig c;
  c.iters_total = 30000;
  c.iters_warmup = 5000;
  c.densify.interval = 1000;
  c.densify.start = 1000;
  return c;
}

TrainConfig preset(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw InputDomainError("unknown preset '" + name + "' (expected desk or paper)");
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw FormatError("config: unknown key '" + key + "'");
    it->set(base, value);
  }
  return base;
}

std::string format_train_config(const TrainConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + "=" + f.get(cfg) + "\n";
  return out;
}

double lr_at(double initial, double iteration, double total, double floor) {
  if (total <= 0.0) return initial;
  return initial * std::pow(floor, iteration / total);
}

AdamMoments AdamMoments::zeros_like(const DynamicModel& m) {
  AdamMoments a;
  a.m_gaussians = GaussianSet::zeros(m.gaussians.size());
  a.v_gaussians = GaussianSet::zeros(m.gaussians.size());
  a.m_planes = m.field.planes.zeros_like();
  a.v_planes = m.field.planes.zeros_like();
  a.m_decoder = m.field.decoder.zeros_like();
  a.v_decoder = m.field.decoder.zeros_like();
  return a;
}

NormalizationBounds normalization_for(const ProjectionSet& data, const TrainConfig& cfg) {
  NormalizationBounds b;
  b.space = data.geometry.bounds;
  b.time.start = 0.0;
  b.time.end = data.duration;
  b.time.period_upper_bound = cfg.period_upper_bound;
  return b;
}

TrainState init_state(const ProjectionSet& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InputDomainError("training needs a non-empty projection set");
  BackprojectionInit init;
  init.count = cfg.kernels;
  init.grid_res = cfg.init_grid_res;
  init.threshold_quantile = cfg.init_quantile;
  init.seed = cfg.seed;
  GaussianSet g = init_from_backprojection(data, init);

  TrainState s;
  ModelShape shape;
  shape.planes = cfg.planes;
  shape.decoder_width = cfg.decoder_width;
  s.model = make_model(std::move(g), shape, normalization_for(data, cfg), cfg.tau0, cfg.seed);
  s.moments = AdamMoments::zeros_like(s.model);
  s.rng = Rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  reset_densify_stats(s);
  return s;
}

MetricsRow train_step(TrainState& state, const ProjectionSet& data, const TrainConfig& cfg) {
  if (data.empty()) throw InputDomainError("training needs a non-empty projection set");
  const std::int64_t it = state.iteration;
  const bool joint = cfg.dynamic && it >= cfg.iters_warmup;
  const std::size_t j = static_cast<std::size_t>(state.rng.below(data.size()));
  const int n = joint ? sample_shift(state.rng, cfg.max_shift) : 0;

  TotalLossOptions opts;
  opts.tv_res = cfg.tv_res;
  opts.tv_edge = cfg.tv_edge;
  const TotalLossResult res = total_loss(state.model, data, j, n, cfg.weights,
                                         joint ? Phase::Joint : Phase::Warmup, state.rng, opts);
  if (!finite_terms(res.terms)) {
    std::ostringstream os;
    os << "non-finite loss at iteration " << it << ": render=" << res.terms.render
       << " pc=" << res.terms.pc << " tv3d=" << res.terms.tv3d << " tv4d=" << res.terms.tv4d
       << " total=" << res.terms.total;
    throw TrainingError(os.str());
  }

  const double total = cfg.iters_total;
  const double lr_pos = lr_at(cfg.lr.position, it, total, cfg.lr_floor);

  // Kernel parameters.
  {
    AdamMoments& a = state.moments;
    ++a.gaussian_steps;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(a.gaussian_steps));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(a.gaussian_steps));
    GaussianSet& p = state.model.gaussians;
    const GaussianSet& g = res.grads.gaussians;
    adam_span(p.center_values(), a.m_gaussians.center_values(), a.v_gaussians.center_values(),
              g.center_values(), lr_pos, bc1, bc2);
    adam_span(p.log_scale_values(), a.m_gaussians.log_scale_values(),
              a.v_gaussians.log_scale_values(), g.log_scale_values(),
              lr_at(cfg.lr.scale, it, total, cfg.lr_floor), bc1, bc2);
    adam_span(p.quat_values(), a.m_gaussians.quat_values(), a.v_gaussians.quat_values(),
              g.quat_values(), lr_at(cfg.lr.rotation, it, total, cfg.lr_floor), bc1, bc2);
    adam_span(p.density_values(), a.m_gaussians.density_values(),
              a.v_gaussians.density_values(), g.density_values(),
              lr_at(cfg.lr.density, it, total, cfg.lr_floor), bc1, bc2);
  }

  if (joint) {
    AdamMoments& a = state.moments;
    ++a.field_steps;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(a.field_steps));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(a.field_steps));
    const double rel = static_cast<double>(it - cfg.iters_warmup);
    const double span = static_cast<double>(cfg.iters_total - cfg.iters_warmup);
    const double lr_planes = lr_at(cfg.lr.planes, rel, span, cfg.lr_floor);
    const double lr_decoder = lr_at(cfg.lr.decoder, rel, span, cfg.lr_floor);
    const double lr_tau = lr_at(cfg.lr.tau, rel, span, cfg.lr_floor);

    auto& planes = state.model.field.planes.all_planes();
    auto& mp = a.m_planes.all_planes();
    auto& vp = a.v_planes.all_planes();
    const auto& gp = res.grads.planes.all_planes();
    for (std::size_t i = 0; i < planes.size(); ++i) {
      adam_span(planes[i], mp[i], vp[i], gp[i], lr_planes, bc1, bc2);
    }
    auto pd = state.model.field.decoder.tensors();
    auto md = a.m_decoder.tensors();
    auto vd = a.v_decoder.tensors();
    const auto gd = res.grads.decoder.tensors();
    for (std::size_t i = 0; i < pd.size(); ++i) adam_span(pd[i], md[i], vd[i], gd[i], lr_decoder, bc1, bc2);
    adam_update(state.model.period.tau, a.m_tau, a.v_tau, res.grads.tau, lr_tau, bc1, bc2);
  }

  const bool densify_window = it < cfg.iters_warmup;
  if (cfg.densify.enabled && densify_window) {
    const GaussianSet& g = res.grads.gaussians;
    for (std::size_t k = 0; k < g.size(); ++k) {
      state.grad_norm_sum[k] += g.centers[k].norm();
      state.grad_sum[k] += g.centers[k];
      state.grad_count[k] += 1;
    }
  }

  state.iteration = it + 1;
  if (cfg.densify.enabled && densify_window && state.iteration >= cfg.densify.start &&
      state.iteration < cfg.iters_warmup &&
      (state.iteration - cfg.densify.start) % cfg.densify.interval == 0) {
    densify_and_prune(state, cfg);
  }

  MetricsRow row;
  row.iter = it;
  row.terms = res.terms;
  row.period = state.model.period.seconds();
  row.lr_position = lr_pos;
  return row;
}

void densify_and_prune(TrainState& state, const TrainConfig& cfg) {
  GaussianSet& set = state.model.gaussians;
  const std::size_t k = set.size();
  std::vector<double> mean_norm(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (state.grad_count.size() == k && state.grad_count[i] > 0) {
      mean_norm[i] = state.grad_norm_sum[i] / state.grad_count[i];
    }
  }

  std::vector<std::size_t> clones;
  if (k > 0 && cfg.densify.percentile < 1.0) {
    std::vector<double> sorted = mean_norm;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t q = std::min(
        k - 1, static_cast<std::size_t>(std::floor(cfg.densify.percentile * static_cast<double>(k))));
    const double threshold = sorted[q];
    for (std::size_t i = 0; i < k; ++i) {
      if (mean_norm[i] > threshold && mean_norm[i] > 0.0) clones.push_back(i);
    }
    const std::size_t room =
        cfg.densify.max_kernels > static_cast<int>(k) ? cfg.densify.max_kernels - k : 0;
    if (clones.size() > room) {
      // Keep the strongest gradients, ties broken by index.
      std::stable_sort(clones.begin(), clones.end(),
                       [&](std::size_t a, std::size_t b) { return mean_norm[a] > mean_norm[b]; });
      clones.resize(room);
      std::sort(clones.begin(), clones.end());
    }
  }

  const double shrink = std::log(1.6);
  GaussianSet extra = set.gather(clones);
  for (std::size_t c = 0; c < clones.size(); ++c) {
    const std::size_t i = clones[c];
    Vec3 dir = state.grad_sum[i];
    const double norm = dir.norm();
    if (norm > 0.0) {
      dir /= norm;
      const Mat3 cov = covariance(set.quats[i], set.log_scales[i]);
      const double sd = std::sqrt(dir.dot(cov * dir));
      extra.centers[c] -= sd * dir;
    }
    extra.log_scales[c].array() -= shrink;
    set.log_scales[i].array() -= shrink;
  }
  set.append(extra);
  AdamMoments& a = state.moments;
  a.m_gaussians.append(GaussianSet::zeros(clones.size()));
  a.v_gaussians.append(GaussianSet::zeros(clones.size()));

  std::vector<std::size_t> keep;
  keep.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (softplus(set.densities[i]) >= cfg.densify.prune_density) keep.push_back(i);
  }
  if (keep.empty()) {
    throw TrainingError("densify_and_prune removed every kernel at iteration " +
                        std::to_string(state.iteration));
  }
  if (keep.size() != set.size()) {
    set = set.gather(keep);
    a.m_gaussians = a.m_gaussians.gather(keep);
    a.v_gaussians = a.v_gaussians.gather(keep);
  }
  reset_densify_stats(state);
}

void resume(TrainState& state, const ProjectionSet& data, const TrainConfig& cfg,
            std::vector<MetricsRow>& metrics, const StepCallback& on_step) {
  cfg.validate();
  if (state.grad_count.size() != state.model.gaussians.size()) reset_densify_stats(state);
  while (state.iteration < cfg.iters_total) {
    metrics.push_back(train_step(state, data, cfg));
    if (on_step) on_step(metrics.back());
  }
}

FitResult fit(const ProjectionSet& data, const TrainConfig& cfg, const StepCallback& on_step) {
  FitResult out{init_state(data, cfg), {}};
  out.metrics.reserve(static_cast<std::size_t>(cfg.iters_total));
  resume(out.state, data, cfg, out.metrics, on_step);
  return out;
}

}  // namespace dgct
