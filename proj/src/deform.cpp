#include "dgct/deform.hpp"

#include <algorithm>
#include <cmath>

#include "dgct/parallel.hpp"
#include "dgct/rng.hpp"

namespace dgct {

Vec4 normalize_coords(const Vec3& center, double t, const NormalizationBounds& bounds) {
  Vec4 v;
  const Vec3 ext = bounds.space.extent();
  for (int a = 0; a < 3; ++a) {
    v[a] = std::clamp((center[a] - bounds.space.lo[a]) / ext[a], 0.0, 1.0);
  }
  const double lo = bounds.time.lo();
  v[3] = std::clamp((t - lo) / (bounds.time.hi() - lo), 0.0, 1.0);
  return v;
}

PlaneGrid::PlaneGrid(const PlaneGridConfig& cfg, double fill) : cfg_(cfg) {
  if (cfg.levels < 1 || cfg.base_res < 2 || cfg.time_res < 2 || cfg.features < 1) {
    throw InputDomainError("PlaneGrid: levels >= 1, resolutions >= 2 and features >= 1 required");
  }
  planes_.resize(static_cast<std::size_t>(cfg.levels) * 6);
  for (int l = 0; l < cfg.levels; ++l) {
    for (int p = 0; p < 6; ++p) {
      const std::size_t n = static_cast<std::size_t>(resolution(l, kPlaneAxes[p][0])) *
                            resolution(l, kPlaneAxes[p][1]) * cfg.features;
      plane(l, p).assign(n, fill);
    }
  }
}

PlaneGrid PlaneGrid::initialized(const PlaneGridConfig& cfg, std::uint64_t seed) {
  PlaneGrid g(cfg, 1.0);
  Rng rng(seed);
  for (auto& pl : g.planes_) {
    for (double& x : pl) x = 1.0 + rng.uniform(-0.01, 0.01);
  }
  return g;
}

std::size_t PlaneGrid::parameter_count() const {
  std::size_t n = 0;
  for (const auto& pl : planes_) n += pl.size();
  return n;
}

PlaneGrid& PlaneGrid::operator+=(const PlaneGrid& o) {
  for (std::size_t i = 0; i < planes_.size(); ++i) {
    for (std::size_t j = 0; j < planes_[i].size(); ++j) planes_[i][j] += o.planes_[i][j];
  }
  return *this;
}

namespace {

struct AxisStencil {
  int i;
  double f;
};

AxisStencil axis_stencil(double u, int res) {
  const double pos = u * (res - 1);
  const int i = std::clamp(static_cast<int>(std::floor(pos)), 0, res - 2);
  return {i, pos - i};
}

// Bilinear sample of plane p at level l into out[0..d).
void sample_plane(const PlaneGrid& g, int l, int p, const AxisStencil& sa, const AxisStencil& sb,
                  double* out) {
  const int d = g.features();
  const auto& pl = g.plane(l, p);
  const double* p00 = pl.data() + g.node_offset(l, p, sa.i, sb.i);
  const double* p10 = pl.data() + g.node_offset(l, p, sa.i + 1, sb.i);
  const double* p01 = pl.data() + g.node_offset(l, p, sa.i, sb.i + 1);
  const double* p11 = pl.data() + g.node_offset(l, p, sa.i + 1, sb.i + 1);
  const double w00 = (1 - sa.f) * (1 - sb.f), w10 = sa.f * (1 - sb.f);
  const double w01 = (1 - sa.f) * sb.f, w11 = sa.f * sb.f;
  for (int k = 0; k < d; ++k) out[k] = w00 * p00[k] + w10 * p10[k] + w01 * p01[k] + w11 * p11[k];
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& post) {
  return (post.array() > 0.0).cast<double>().matrix();
}

}  // namespace

std::vector<double> encode(const PlaneGrid& grid, const Vec4& v) {
  const int d = grid.features();
  std::vector<double> out(static_cast<std::size_t>(grid.levels()) * d, 1.0);
  std::vector<double> s(d);
  for (int l = 0; l < grid.levels(); ++l) {
    for (int p = 0; p < 6; ++p) {
      const int a = kPlaneAxes[p][0], b = kPlaneAxes[p][1];
      sample_plane(grid, l, p, axis_stencil(v[a], grid.resolution(l, a)),
                   axis_stencil(v[b], grid.resolution(l, b)), s.data());
      for (int k = 0; k < d; ++k) out[static_cast<std::size_t>(l) * d + k] *= s[k];
    }
  }
  return out;
}

DeformDecoder DeformDecoder::initialized(int in_dim, int width, std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& m, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
    }
  };
  DeformDecoder dec;
  dec.fusion_w.resize(width, in_dim);
  fill(dec.fusion_w, in_dim);
  Eigen::MatrixXd fb(width, 1);
  fill(fb, in_dim);
  dec.fusion_b = fb.col(0);
  for (int h = 0; h < 3; ++h) {
    auto& head = dec.heads[h];
    head.w1.resize(width, width);
    fill(head.w1, width);
    Eigen::MatrixXd b1(width, 1);
    fill(b1, width);
    head.b1 = b1.col(0);
    head.w2 = Eigen::MatrixXd::Zero(kHeadOutputs[h], width);
    head.b2 = Eigen::VectorXd::Zero(kHeadOutputs[h]);
  }
  return dec;
}

DeformDecoder DeformDecoder::zeros_like() const {
  DeformDecoder z;
  z.fusion_w = Eigen::MatrixXd::Zero(fusion_w.rows(), fusion_w.cols());
  z.fusion_b = Eigen::VectorXd::Zero(fusion_b.size());
  for (int h = 0; h < 3; ++h) {
    z.heads[h].w1 = Eigen::MatrixXd::Zero(heads[h].w1.rows(), heads[h].w1.cols());
    z.heads[h].b1 = Eigen::VectorXd::Zero(heads[h].b1.size());
    z.heads[h].w2 = Eigen::MatrixXd::Zero(heads[h].w2.rows(), heads[h].w2.cols());
    z.heads[h].b2 = Eigen::VectorXd::Zero(heads[h].b2.size());
  }
  return z;
}

std::vector<std::span<double>> DeformDecoder::tensors() {
  std::vector<std::span<double>> out;
  auto add = [&out](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  add(fusion_w);
  add(fusion_b);
  for (auto& h : heads) {
    add(h.w1);
    add(h.b1);
    add(h.w2);
    add(h.b2);
  }
  return out;
}

std::vector<std::span<const double>> DeformDecoder::tensors() const {
  std::vector<std::span<const double>> out;
  for (auto s : const_cast<DeformDecoder*>(this)->tensors()) out.emplace_back(s);
  return out;
}

DeformDecoder& DeformDecoder::operator+=(const DeformDecoder& o) {
  fusion_w += o.fusion_w;
  fusion_b += o.fusion_b;
  for (int h = 0; h < 3; ++h) {
    heads[h].w1 += o.heads[h].w1;
    heads[h].b1 += o.heads[h].b1;
    heads[h].w2 += o.heads[h].w2;
    heads[h].b2 += o.heads[h].b2;
  }
  return *this;
}

DeformPass::DeformPass(const GaussianSet& set, const DeformationField& field, double t)
    : set_(&set), field_(&field), t_(t) {
  const PlaneGrid& grid = field.planes;
  const DeformDecoder& dec = field.decoder;
  const auto k_count = static_cast<std::ptrdiff_t>(set.size());
  const int levels = grid.levels();
  const int d = grid.features();
  if (dec.in_dim() != levels * d) {
    throw InputDomainError("DeformPass: decoder input width does not match plane features");
  }

  const double lo = field.bounds.time.lo();
  const double raw_t = (t - lo) / (field.bounds.time.hi() - lo);
  time_clamped_ = raw_t < 0.0 || raw_t > 1.0;

  stencils_.resize(static_cast<std::size_t>(k_count) * levels * 6);
  samples_.resize(static_cast<std::size_t>(k_count) * levels * 6 * d);
  encoded_.resize(k_count, levels * d);

  const Vec3 ext = field.bounds.space.extent();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < k_count; ++i) {
    const Vec3& mu = set.centers[i];
    Vec4 raw;
    for (int a = 0; a < 3; ++a) raw[a] = (mu[a] - field.bounds.space.lo[a]) / ext[a];
    raw[3] = raw_t;
    bool live[4];
    Vec4 v;
    for (int a = 0; a < 4; ++a) {
      live[a] = raw[a] >= 0.0 && raw[a] <= 1.0;
      v[a] = std::clamp(raw[a], 0.0, 1.0);
    }
    for (int l = 0; l < levels; ++l) {
      AxisStencil ax[4];
      for (int a = 0; a < 4; ++a) ax[a] = axis_stencil(v[a], grid.resolution(l, a));
      for (int k = 0; k < d; ++k) encoded_(i, l * d + k) = 1.0;
      for (int p = 0; p < 6; ++p) {
        const int a = kPlaneAxes[p][0], b = kPlaneAxes[p][1];
        const std::size_t slot = (static_cast<std::size_t>(i) * levels + l) * 6 + p;
        stencils_[slot] = {ax[a].i, ax[b].i, ax[a].f, ax[b].f, live[a], live[b]};
        double* s = samples_.data() + slot * d;
        sample_plane(grid, l, p, ax[a], ax[b], s);
        for (int k = 0; k < d; ++k) encoded_(i, l * d + k) *= s[k];
      }
    }
  }

  hidden_ = relu((encoded_ * dec.fusion_w.transpose()).rowwise() + dec.fusion_b.transpose());
  std::array<Eigen::MatrixXd, 3> outputs;
  for (int h = 0; h < 3; ++h) {
    const auto& head = dec.heads[h];
    head_hidden_[h] = relu((hidden_ * head.w1.transpose()).rowwise() + head.b1.transpose());
    outputs[h] = (head_hidden_[h] * head.w2.transpose()).rowwise() + head.b2.transpose();
  }

  deformed_ = set;
  for (std::ptrdiff_t i = 0; i < k_count; ++i) {
    deformed_.centers[i] += outputs[0].row(i).transpose();
    deformed_.quats[i] += outputs[1].row(i).transpose();
    deformed_.log_scales[i] += outputs[2].row(i).transpose();
  }
}

DeformGradients DeformPass::backward(const GaussianSet& upstream) const {
  const GaussianSet& set = *set_;
  const DeformationField& field = *field_;
  const PlaneGrid& grid = field.planes;
  const DeformDecoder& dec = field.decoder;
  const auto k_count = static_cast<std::ptrdiff_t>(set.size());
  const int levels = grid.levels();
  const int d = grid.features();
  if (upstream.size() != set.size()) {
    throw InputDomainError("deform_backward: upstream gradient count does not match the set");
  }

  DeformGradients out;
  out.gaussians = upstream;
  out.planes = grid.zeros_like();
  out.decoder = dec.zeros_like();

  std::array<Eigen::MatrixXd, 3> d_out;
  d_out[0].resize(k_count, 3);
  d_out[1].resize(k_count, 4);
  d_out[2].resize(k_count, 3);
  for (std::ptrdiff_t i = 0; i < k_count; ++i) {
    d_out[0].row(i) = upstream.centers[i].transpose();
    d_out[1].row(i) = upstream.quats[i].transpose();
    d_out[2].row(i) = upstream.log_scales[i].transpose();
  }

  Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(k_count, dec.width());
  for (int h = 0; h < 3; ++h) {
    const auto& head = dec.heads[h];
    auto& g = out.decoder.heads[h];
    const Eigen::MatrixXd& z = head_hidden_[h];
    g.w2.noalias() = d_out[h].transpose() * z;
    g.b2 = d_out[h].colwise().sum().transpose();
    const Eigen::MatrixXd d_z = (d_out[h] * head.w2).cwiseProduct(relu_mask(z));
    g.w1.noalias() = d_z.transpose() * hidden_;
    g.b1 = d_z.colwise().sum().transpose();
    d_hidden.noalias() += d_z * head.w1;
  }
  d_hidden = d_hidden.cwiseProduct(relu_mask(hidden_));
  out.decoder.fusion_w.noalias() = d_hidden.transpose() * encoded_;
  out.decoder.fusion_b = d_hidden.colwise().sum().transpose();
  const Eigen::MatrixXd d_encoded = d_hidden * dec.fusion_w;

  // Per-kernel sample gradients and coordinate gradients.
  std::vector<double> d_samples(samples_.size());
  std::vector<Vec4> d_coords(k_count, Vec4::Zero());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < k_count; ++i) {
    std::vector<double> prefix(static_cast<std::size_t>(7) * d);
    std::vector<double> suffix(static_cast<std::size_t>(7) * d);
    Vec4 dv = Vec4::Zero();
    for (int l = 0; l < levels; ++l) {
      const std::size_t base = (static_cast<std::size_t>(i) * levels + l) * 6;
      const double* s = samples_.data() + base * d;
      for (int k = 0; k < d; ++k) {
        prefix[k] = 1.0;
        suffix[6 * d + k] = 1.0;
      }
      for (int p = 0; p < 6; ++p) {
        for (int k = 0; k < d; ++k) prefix[(p + 1) * d + k] = prefix[p * d + k] * s[p * d + k];
      }
      for (int p = 5; p >= 0; --p) {
        for (int k = 0; k < d; ++k) suffix[p * d + k] = suffix[(p + 1) * d + k] * s[p * d + k];
      }
      for (int p = 0; p < 6; ++p) {
        const Stencil& st = stencils_[base + p];
        double* ds = d_samples.data() + (base + p) * d;
        const auto& pl = grid.plane(l, p);
        const double* p00 = pl.data() + grid.node_offset(l, p, st.ia, st.ib);
        const double* p10 = pl.data() + grid.node_offset(l, p, st.ia + 1, st.ib);
        const double* p01 = pl.data() + grid.node_offset(l, p, st.ia, st.ib + 1);
        const double* p11 = pl.data() + grid.node_offset(l, p, st.ia + 1, st.ib + 1);
        double da = 0.0, db = 0.0;
        for (int k = 0; k < d; ++k) {
          ds[k] = d_encoded(i, l * d + k) * prefix[p * d + k] * suffix[(p + 1) * d + k];
          da += ds[k] * ((1 - st.fb) * (p10[k] - p00[k]) + st.fb * (p11[k] - p01[k]));
          db += ds[k] * ((1 - st.fa) * (p01[k] - p00[k]) + st.fa * (p11[k] - p10[k]));
        }
        const int a = kPlaneAxes[p][0], b = kPlaneAxes[p][1];
        if (st.live_a) dv[a] += da * (grid.resolution(l, a) - 1);
        if (st.live_b) dv[b] += db * (grid.resolution(l, b) - 1);
      }
    }
    d_coords[i] = dv;
  }

  // Scatter sample gradients onto plane nodes.
  auto scatter = [&](std::ptrdiff_t i, bool atomic) {
    for (int l = 0; l < levels; ++l) {
      for (int p = 0; p < 6; ++p) {
        const std::size_t slot = (static_cast<std::size_t>(i) * levels + l) * 6 + p;
        const Stencil& st = stencils_[slot];
        const double* ds = d_samples.data() + slot * d;
        auto& pl = out.planes.plane(l, p);
        const double w[4] = {(1 - st.fa) * (1 - st.fb), st.fa * (1 - st.fb),
                             (1 - st.fa) * st.fb, st.fa * st.fb};
        const std::size_t off[4] = {grid.node_offset(l, p, st.ia, st.ib),
                                    grid.node_offset(l, p, st.ia + 1, st.ib),
                                    grid.node_offset(l, p, st.ia, st.ib + 1),
                                    grid.node_offset(l, p, st.ia + 1, st.ib + 1)};
        for (int c = 0; c < 4; ++c) {
          if (w[c] == 0.0) continue;
          double* node = pl.data() + off[c];
          for (int k = 0; k < d; ++k) {
            if (atomic) {
#pragma omp atomic
              node[k] += w[c] * ds[k];
            } else {
              node[k] += w[c] * ds[k];
            }
          }
        }
      }
    }
  };
  if (execution_policy().deterministic) {
    for (std::ptrdiff_t i = 0; i < k_count; ++i) scatter(i, false);
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < k_count; ++i) scatter(i, true);
  }

  const Vec3 ext = field.bounds.space.extent();
  const double t_span = field.bounds.time.hi() - field.bounds.time.lo();
  double dt = 0.0;
  for (std::ptrdiff_t i = 0; i < k_count; ++i) {
    for (int a = 0; a < 3; ++a) out.gaussians.centers[i][a] += d_coords[i][a] / ext[a];
    dt += d_coords[i][3];
  }
  out.dt = dt / t_span;
  return out;
}

GaussianSet deform(const GaussianSet& set, const DeformationField& field, double t) {
  return DeformPass(set, field, t).deformed();
}

DeformGradients deform_backward(const GaussianSet& set, const DeformationField& field, double t,
                                const GaussianSet& upstream) {
  return DeformPass(set, field, t).backward(upstream);
}

}  // namespace dgct
