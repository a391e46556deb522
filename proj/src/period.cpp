#include "dgct/period.hpp"

#include <cmath>

#include "dgct/losses.hpp"

namespace dgct {

int sample_shift(Rng& rng) { return rng.sign(); }

int sample_shift(Rng& rng, int max_shift) {
  if (max_shift <= 1) return rng.sign();
  const int magnitude = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_shift)));
  return rng.sign() * magnitude;
}

double period_estimate(const LearnablePeriod& p) { return std::exp(p.tau); }

PeriodicLossResult periodic_consistency_loss(const DynamicModel& model,
                                             const ConeBeamGeometry& geom,
                                             const Projection& projection, int n, double lambda1,
                                             const RenderOptions& render) {
  PeriodicLossResult out;
  const double period = std::exp(model.period.tau);
  out.shifted_time = projection.timestamp + n * period;

  const DeformPass pass(model.gaussians, model.field, out.shifted_time);
  out.time_clamped = pass.time_clamped();
  const ProjectionRenderer renderer(pass.deformed(), geom, projection.angle, render);
  const Image shifted = renderer.forward();

  ImageLoss l1_term = l1_with_grad(projection.image, shifted);
  out.l1 = l1_term.value;
  Image pixel_grads = std::move(l1_term.grad);
  if (lambda1 != 0.0) {
    const ImageLoss ssim_term = dssim_with_grad(projection.image, shifted);
    out.dssim = ssim_term.value;
    for (std::size_t p = 0; p < pixel_grads.size(); ++p) {
      pixel_grads.data[p] += lambda1 * ssim_term.grad.data[p];
    }
  }
  out.value = out.l1 + lambda1 * out.dssim;

  const GaussianSet upstream = renderer.backward(pixel_grads);
  DeformGradients dg = pass.backward(upstream);
  out.grads.gaussians = std::move(dg.gaussians);
  out.grads.planes = std::move(dg.planes);
  out.grads.decoder = std::move(dg.decoder);
  out.grads.tau = dg.dt * n * period;
  return out;
}

}  // namespace dgct
