#include "dgct/losses.hpp"

#include <array>
#include <cmath>

namespace dgct {

namespace {

constexpr int kWindow = 11;
constexpr int kRadius = kWindow / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& gaussian_window() {
  static const std::array<double, kWindow> w = [] {
    std::array<double, kWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double x = i - kRadius;
      g[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
      sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
  }();
  return w;
}

// Separable window correlation over positions fully inside the image.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
  const auto& g = gaussian_window();
  const int ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += g[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int j = 0; j < kWindow; ++j) s += g[j] * tmp[static_cast<std::size_t>(y + j) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

// Adjoint of filter_valid.
std::vector<double> filter_adjoint(const std::vector<double>& map, int w, int h) {
  const auto& g = gaussian_window();
  const int ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double m = map[static_cast<std::size_t>(y) * ow + x];
      for (int j = 0; j < kWindow; ++j) tmp[static_cast<std::size_t>(y + j) * ow + x] += g[j] * m;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double m = tmp[static_cast<std::size_t>(y) * ow + x];
      for (int i = 0; i < kWindow; ++i) out[static_cast<std::size_t>(y) * w + x + i] += g[i] * m;
    }
  }
  return out;
}

struct SsimMoments {
  std::vector<double> mx, my, exx, eyy, exy;
};

SsimMoments ssim_moments(std::span<const double> a, std::span<const double> b, int w, int h) {
  if (w < kWindow || h < kWindow) {
    throw InputDomainError("ssim: images must be at least 11x11");
  }
  if (a.size() != b.size() || a.size() != static_cast<std::size_t>(w) * h) {
    throw InputDomainError("ssim: image shapes differ");
  }
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  return {filter_valid(x, w, h), filter_valid(y, w, h), filter_valid(xx, w, h),
          filter_valid(yy, w, h), filter_valid(xy, w, h)};
}

double ssim_at(const SsimMoments& m, std::size_t p) {
  const double mx = m.mx[p], my = m.my[p];
  const double sxx = m.exx[p] - mx * mx;
  const double syy = m.eyy[p] - my * my;
  const double sxy = m.exy[p] - mx * my;
  return ((2.0 * mx * my + kC1) * (2.0 * sxy + kC2)) /
         ((mx * mx + my * my + kC1) * (sxx + syy + kC2));
}

}  // namespace

void LossWeights::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || alpha < 0 || beta < 0 || gamma < 0) {
    throw InputDomainError("loss weights must be non-negative");
  }
}

double l1(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InputDomainError("l1: image shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.size());
}

ImageLoss l1_with_grad(const Image& reference, const Image& render) {
  if (!reference.same_shape(render)) throw InputDomainError("l1: image shapes differ");
  ImageLoss out{l1(reference, render), Image(render.nu, render.nv)};
  const double inv_n = 1.0 / static_cast<double>(render.size());
  for (std::size_t i = 0; i < render.size(); ++i) {
    const double diff = render.data[i] - reference.data[i];
    out.grad.data[i] = diff > 0 ? inv_n : (diff < 0 ? -inv_n : 0.0);
  }
  return out;
}

double ssim(std::span<const double> a, std::span<const double> b, int width, int height) {
  const SsimMoments m = ssim_moments(a, b, width, height);
  double s = 0.0;
  for (std::size_t p = 0; p < m.mx.size(); ++p) s += ssim_at(m, p);
  return s / static_cast<double>(m.mx.size());
}

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw InputDomainError("ssim: image shapes differ");
  return ssim(a.data, b.data, a.nu, a.nv);
}

double dssim(const Image& a, const Image& b) { return 1.0 - ssim(a, b); }

ImageLoss dssim_with_grad(const Image& reference, const Image& render) {
  if (!reference.same_shape(render)) throw InputDomainError("ssim: image shapes differ");
  const int w = render.nu, h = render.nv;
  const SsimMoments m = ssim_moments(reference.data, render.data, w, h);
  const std::size_t n = m.mx.size();
  std::vector<double> alpha(n), beta(n), gamma(n);
  double mean = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double mx = m.mx[p], my = m.my[p];
    const double sxx = m.exx[p] - mx * mx;
    const double syy = m.eyy[p] - my * my;
    const double sxy = m.exy[p] - mx * my;
    const double a1 = 2.0 * mx * my + kC1, a2 = 2.0 * sxy + kC2;
    const double b1 = mx * mx + my * my + kC1, b2 = sxx + syy + kC2;
    const double s = (a1 * a2) / (b1 * b2);
    mean += s;
    alpha[p] = 2.0 * mx * (a2 - a1) / (b1 * b2) - 2.0 * my * s * (1.0 / b1 - 1.0 / b2);
    beta[p] = 2.0 * a1 / (b1 * b2);
    gamma[p] = -s / b2;
  }
  mean /= static_cast<double>(n);

  const auto fa = filter_adjoint(alpha, w, h);
  const auto fb = filter_adjoint(beta, w, h);
  const auto fc = filter_adjoint(gamma, w, h);
  ImageLoss out{1.0 - mean, Image(w, h)};
  const double scale = -1.0 / static_cast<double>(n);
  for (std::size_t q = 0; q < render.size(); ++q) {
    out.grad.data[q] =
        scale * (fa[q] + reference.data[q] * fb[q] + 2.0 * render.data[q] * fc[q]);
  }
  return out;
}

double tv3d(const Volume& vol) {
  Volume unused;
  return tv3d_with_grad(vol, unused);
}

double tv3d_with_grad(const Volume& vol, Volume& grad) {
  grad = Volume(vol.spec);
  const auto& r = vol.spec.res;
  double total = 0.0;
  int axes = 0;
  for (int a = 0; a < 3; ++a) {
    if (r[a] < 2) continue;
    ++axes;
  }
  if (axes == 0) return 0.0;
  for (int a = 0; a < 3; ++a) {
    if (r[a] < 2) continue;
    const int step[3] = {a == 0, a == 1, a == 2};
    const double pairs = static_cast<double>(r[0] - step[0]) * (r[1] - step[1]) * (r[2] - step[2]);
    const double w = 1.0 / (pairs * axes);
    double sum = 0.0;
    for (int k = 0; k + step[2] < r[2]; ++k) {
      for (int j = 0; j + step[1] < r[1]; ++j) {
        for (int i = 0; i + step[0] < r[0]; ++i) {
          const std::size_t p0 = vol.index(i, j, k);
          const std::size_t p1 = vol.index(i + step[0], j + step[1], k + step[2]);
          const double diff = vol.data[p1] - vol.data[p0];
          sum += diff * diff;
          grad.data[p1] += 2.0 * w * diff;
          grad.data[p0] -= 2.0 * w * diff;
        }
      }
    }
    total += sum * w;
  }
  return total;
}

double tv4d(const PlaneGrid& grid) {
  PlaneGrid unused;
  return tv4d_with_grad(grid, unused);
}

double tv4d_with_grad(const PlaneGrid& grid, PlaneGrid& grad) {
  grad = grid.zeros_like();
  const int d = grid.features();
  const double planes = 6.0 * grid.levels();
  double total = 0.0;
  for (int l = 0; l < grid.levels(); ++l) {
    for (int p = 0; p < 6; ++p) {
      const int ra = grid.resolution(l, kPlaneAxes[p][0]);
      const int rb = grid.resolution(l, kPlaneAxes[p][1]);
      const auto& pl = grid.plane(l, p);
      auto& gp = grad.plane(l, p);
      for (int axis = 0; axis < 2; ++axis) {
        const int sa = axis == 0, sb = axis == 1;
        const double count = static_cast<double>(ra - sa) * (rb - sb) * d;
        const double w = 1.0 / (2.0 * count * planes);
        double sum = 0.0;
        for (int ib = 0; ib + sb < rb; ++ib) {
          for (int ia = 0; ia + sa < ra; ++ia) {
            const std::size_t o0 = grid.node_offset(l, p, ia, ib);
            const std::size_t o1 = grid.node_offset(l, p, ia + sa, ib + sb);
            for (int k = 0; k < d; ++k) {
              const double diff = pl[o1 + k] - pl[o0 + k];
              sum += diff * diff;
              gp[o1 + k] += 2.0 * w * diff;
              gp[o0 + k] -= 2.0 * w * diff;
            }
          }
        }
        total += sum * w;
      }
    }
  }
  return total;
}

VolumeSpec random_subgrid(const Box& bounds, int res, double edge, Rng& rng) {
  VolumeSpec spec;
  spec.res = {res, res, res};
  for (int a = 0; a < 3; ++a) {
    const double span = std::max(bounds.extent()[a] - edge, 0.0);
    spec.bounds.lo[a] = bounds.lo[a] + rng.uniform() * span;
    spec.bounds.hi[a] = spec.bounds.lo[a] + std::min(edge, bounds.extent()[a]);
  }
  return spec;
}

namespace {

// Render loss L1 + lambda2 * DSSIM and its pixel gradient.
ImageLoss render_loss(const Image& reference, const Image& render, double lambda2) {
  ImageLoss out = l1_with_grad(reference, render);
  if (lambda2 != 0.0) {
    const ImageLoss s = dssim_with_grad(reference, render);
    out.value += lambda2 * s.value;
    for (std::size_t p = 0; p < out.grad.size(); ++p) out.grad.data[p] += lambda2 * s.grad.data[p];
  }
  return out;
}

void add_scaled(GaussianSet& dst, const GaussianSet& src, double s) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst.centers[i] += s * src.centers[i];
    dst.log_scales[i] += s * src.log_scales[i];
    dst.quats[i] += s * src.quats[i];
    dst.densities[i] += s * src.densities[i];
  }
}

}  // namespace

TotalLossResult total_loss(const DynamicModel& model, const ProjectionSet& data, std::size_t j,
                           int n, const LossWeights& weights, Phase phase, Rng& rng,
                           const TotalLossOptions& opts) {
  const Projection& proj = data.items.at(j);
  const ConeBeamGeometry& geom = data.geometry;
  TotalLossResult out;
  out.grads = ModelGradients::zeros_like(model);
  const VolumeSpec sub = random_subgrid(geom.bounds, opts.tv_res, opts.tv_edge, rng);

  if (phase == Phase::Warmup) {
    const ProjectionRenderer renderer(model.gaussians, geom, proj.angle, opts.render);
    const ImageLoss rl = render_loss(proj.image, renderer.forward(), weights.lambda2);
    out.terms.render = rl.value;
    out.grads.gaussians = renderer.backward(rl.grad);
    if (weights.beta != 0.0) {
      Volume tv_grad;
      out.terms.tv3d = tv3d_with_grad(voxelize(model.gaussians, sub), tv_grad);
      add_scaled(out.grads.gaussians, voxelize_backward(model.gaussians, sub, tv_grad),
                 weights.beta);
    }
    out.terms.total = out.terms.render + weights.beta * out.terms.tv3d;
    return out;
  }

  const DeformPass pass(model.gaussians, model.field, proj.timestamp);
  const GaussianSet& deformed = pass.deformed();
  const ProjectionRenderer renderer(deformed, geom, proj.angle, opts.render);
  const ImageLoss rl = render_loss(proj.image, renderer.forward(), weights.lambda2);
  out.terms.render = rl.value;
  GaussianSet upstream = renderer.backward(rl.grad);
  if (weights.beta != 0.0) {
    Volume tv_grad;
    out.terms.tv3d = tv3d_with_grad(voxelize(deformed, sub), tv_grad);
    add_scaled(upstream, voxelize_backward(deformed, sub, tv_grad), weights.beta);
  }
  DeformGradients dg = pass.backward(upstream);
  out.grads.gaussians = std::move(dg.gaussians);
  out.grads.planes = std::move(dg.planes);
  out.grads.decoder = std::move(dg.decoder);

  if (weights.alpha != 0.0) {
    PeriodicLossResult pc =
        periodic_consistency_loss(model, geom, proj, n, weights.lambda1, opts.render);
    out.terms.pc = pc.value;
    out.terms.time_clamped = pc.time_clamped;
    out.grads += pc.grads.scale(weights.alpha);
  }

  if (weights.gamma != 0.0) {
    PlaneGrid tv_grad;
    out.terms.tv4d = tv4d_with_grad(model.field.planes, tv_grad);
    auto& dst = out.grads.planes.all_planes();
    const auto& src = tv_grad.all_planes();
    for (std::size_t p = 0; p < dst.size(); ++p) {
      for (std::size_t i = 0; i < dst[p].size(); ++i) dst[p][i] += weights.gamma * src[p][i];
    }
  }

  out.terms.total = out.terms.render + weights.alpha * out.terms.pc +
                    weights.beta * out.terms.tv3d + weights.gamma * out.terms.tv4d;
  return out;
}

}  // namespace dgct
