#include "dgct/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dgct {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

double ray_integral(const Vec3& center, const Mat3& inv_cov, double density, const Ray& ray) {
  const Vec3 delta = ray.origin - center;
  const Vec3 ad = inv_cov * ray.direction;
  const double a = ray.direction.dot(ad);
  if (!(a > 0.0)) throw std::logic_error("ray_integral: covariance is not positive definite");
  const double b = ad.dot(delta);
  const double c = delta.dot(inv_cov * delta);
  return density * std::sqrt(kTwoPi / a) * std::exp(-0.5 * (c - b * b / a));
}

ProjectionRenderer::ProjectionRenderer(const GaussianSet& set, const ConeBeamGeometry& geom,
                                       double angle, RenderOptions opts)
    : set_(&set), geom_(geom), opts_(opts) {
  const ViewFrame frame = view_frame(geom, angle);
  source_ = frame.source;
  const auto rays = detector_rays(geom, angle);
  directions_.reserve(rays.size());
  for (const auto& r : rays) directions_.push_back(r.direction);

  kernels_ = activate_all(set);
  footprints_.resize(kernels_.size());
  rows_.assign(geom.nv, {});
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    footprints_[i] = footprint(kernels_[i], frame);
    const Footprint& f = footprints_[i];
    if (f.u0 > f.u1) continue;
    for (int v = f.v0; v <= f.v1; ++v) rows_[v].push_back(static_cast<std::uint32_t>(i));
  }
}

ProjectionRenderer::Footprint ProjectionRenderer::footprint(const ActiveKernel& k,
                                                            const ViewFrame& frame) const {
  const Footprint full{0, geom_.nu - 1, 0, geom_.nv - 1};
  if (!opts_.cull) return full;
  // Rays within the cull radius cross the ball around the centre, so they
  // hit the detector inside the projection of the enclosing cube.
  double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner = k.center + k.cull_radius * Vec3(c & 1 ? 1 : -1, c & 2 ? 1 : -1,
                                                        c & 4 ? 1 : -1);
    const auto uv = project_to_detector(geom_, frame, corner);
    if (!uv) return full;
    umin = std::min(umin, uv->first);
    umax = std::max(umax, uv->first);
    vmin = std::min(vmin, uv->second);
    vmax = std::max(vmax, uv->second);
  }
  Footprint f;
  f.u0 = static_cast<int>(std::max(0.0, std::ceil(umin)));
  f.u1 = static_cast<int>(std::min<double>(geom_.nu - 1, std::floor(umax)));
  f.v0 = static_cast<int>(std::max(0.0, std::ceil(vmin)));
  f.v1 = static_cast<int>(std::min<double>(geom_.nv - 1, std::floor(vmax)));
  if (f.u0 > f.u1 || f.v0 > f.v1) f.u0 = 1, f.u1 = 0, f.v0 = 1, f.v1 = 0;
  return f;
}

Image ProjectionRenderer::forward() const {
  Image img(geom_.nu, geom_.nv);
  const int nu = geom_.nu;
#pragma omp parallel for schedule(dynamic, 1)
  for (int v = 0; v < geom_.nv; ++v) {
    double* row = img.data.data() + static_cast<std::size_t>(v) * nu;
    for (std::uint32_t i : rows_[v]) {
      const ActiveKernel& k = kernels_[i];
      const Footprint& f = footprints_[i];
      const Vec3 delta = source_ - k.center;
      const Vec3 a_delta = k.inv_cov * delta;
      const double c = delta.dot(a_delta);
      const double delta2 = delta.squaredNorm();
      const double r2 = k.cull_radius * k.cull_radius;
      for (int u = f.u0; u <= f.u1; ++u) {
        const Vec3& d = directions_[static_cast<std::size_t>(v) * nu + u];
        const double along = delta.dot(d);
        if (opts_.cull && delta2 - along * along > r2) continue;
        const double a = d.dot(k.inv_cov * d);
        const double b = d.dot(a_delta);
        row[u] += k.density * std::sqrt(kTwoPi / a) * std::exp(-0.5 * (c - b * b / a));
      }
    }
  }
  return img;
}

GaussianSet ProjectionRenderer::backward(const Image& pixel_grads) const {
  if (pixel_grads.nu != geom_.nu || pixel_grads.nv != geom_.nv) {
    throw InputDomainError("render_backward: pixel gradient shape does not match detector");
  }
  GaussianSet grads = GaussianSet::zeros(kernels_.size());
  const int nu = geom_.nu;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(kernels_.size()); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const ActiveKernel& k = kernels_[i];
    const Footprint& f = footprints_[i];
    const Vec3 delta = source_ - k.center;
    const Vec3 a_delta = k.inv_cov * delta;
    const double c = delta.dot(a_delta);
    const double delta2 = delta.squaredNorm();
    const double r2 = k.cull_radius * k.cull_radius;

    // Per-kernel sums; dL/dA = sum_p G_p (alpha_p d d^T + beta_p d delta^T - 1/2 delta delta^T)
    Mat3 dd = Mat3::Zero();
    Vec3 d_sum = Vec3::Zero();
    double g_sum = 0.0;
    double rho_sum = 0.0;
    bool touched = false;
    for (int v = f.v0; v <= f.v1; ++v) {
      for (int u = f.u0; u <= f.u1; ++u) {
        const std::size_t p = static_cast<std::size_t>(v) * nu + u;
        const double g = pixel_grads.data[p];
        if (g == 0.0) continue;
        const Vec3& d = directions_[p];
        const double along = delta.dot(d);
        if (opts_.cull && delta2 - along * along > r2) continue;
        const double a = d.dot(k.inv_cov * d);
        const double b = d.dot(a_delta);
        const double unit = std::sqrt(kTwoPi / a) * std::exp(-0.5 * (c - b * b / a));
        const double gi = g * k.density * unit;  // g * I
        const double alpha = -0.5 / a - 0.5 * b * b / (a * a);
        const double beta = b / a;
        dd.noalias() += (gi * alpha) * d * d.transpose();
        d_sum += (gi * beta) * d;
        g_sum += gi;
        rho_sum += g * unit;
        touched = true;
      }
    }
    if (!touched) continue;
    const Mat3 d_inv_cov = dd + d_sum * delta.transpose() - 0.5 * g_sum * delta * delta.transpose();
    const Vec3 d_center = k.inv_cov * (g_sum * delta - d_sum);
    accumulate_raw_gradients(*set_, i, k, d_inv_cov, d_center, rho_sum, grads);
  }
  return grads;
}

Image render_image(const GaussianSet& set, const ConeBeamGeometry& geom, double angle,
                   const RenderOptions& opts) {
  return ProjectionRenderer(set, geom, angle, opts).forward();
}

GaussianSet render_backward(const GaussianSet& set, const ConeBeamGeometry& geom, double angle,
                            const Image& pixel_grads, const RenderOptions& opts) {
  return ProjectionRenderer(set, geom, angle, opts).backward(pixel_grads);
}

}  // namespace dgct
