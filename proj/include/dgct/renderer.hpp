#pragma once

#include <cstdint>
#include <vector>

#include "dgct/gaussians.hpp"
#include "dgct/geometry.hpp"

namespace dgct {

/// Closed-form integral of rho * exp(-1/2 (x - mu)^T A (x - mu)) over the
/// full line x = o + s d, s in (-inf, inf):
///   rho * sqrt(2 pi / a) * exp(-1/2 (c - b^2 / a))
/// with delta = o - mu, a = d^T A d, b = d^T A delta, c = delta^T A delta.
double ray_integral(const Vec3& center, const Mat3& inv_cov, double density, const Ray& ray);

struct RenderOptions {
  bool cull = true;  // skip kernels farther than 3 * max scale from the ray
};

/// Forward projector and its adjoint for one view of one kernel set.
/// Building it activates kernels and bins them by detector footprint; the
/// set must outlive the renderer.
class ProjectionRenderer {
 public:
  ProjectionRenderer(const GaussianSet& set, const ConeBeamGeometry& geom, double angle,
                     RenderOptions opts = {});

  Image forward() const;

  /// d(sum_p g_p I_p)/d(raw parameters) for pixel weights g.
  GaussianSet backward(const Image& pixel_grads) const;

 private:
  struct Footprint {
    int u0, u1, v0, v1;  // inclusive pixel bounds, empty when u0 > u1
  };

  Footprint footprint(const ActiveKernel& k, const ViewFrame& frame) const;

  const GaussianSet* set_;
  ConeBeamGeometry geom_;
  RenderOptions opts_;
  Vec3 source_;
  std::vector<Vec3> directions_;  // row-major per pixel
  std::vector<ActiveKernel> kernels_;
  std::vector<Footprint> footprints_;
  std::vector<std::vector<std::uint32_t>> rows_;
};

Image render_image(const GaussianSet& set, const ConeBeamGeometry& geom, double angle,
                   const RenderOptions& opts = {});

GaussianSet render_backward(const GaussianSet& set, const ConeBeamGeometry& geom, double angle,
                            const Image& pixel_grads, const RenderOptions& opts = {});

}  // namespace dgct
