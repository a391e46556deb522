#pragma once

#include "dgct/model.hpp"
#include "dgct/phantom.hpp"
#include "dgct/renderer.hpp"
#include "dgct/rng.hpp"

namespace dgct {

/// Bounded cycle shift: -1 or +1 with equal probability.
int sample_shift(Rng& rng);

/// Widened shift used by the ablation: uniform over {-max, ..., -1, 1, ..., max}.
int sample_shift(Rng& rng, int max_shift);

double period_estimate(const LearnablePeriod& p);

struct PeriodicLossResult {
  double value = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;
  double shifted_time = 0.0;
  bool time_clamped = false;
  ModelGradients grads;
};

/// L1(I_j, R(t_j + n T)) + lambda1 * DSSIM(I_j, R(t_j + n T)), T = exp(tau),
/// where R renders the deformed model from the view of projection j. The
/// measured image is the fixed reference; gradients reach every model
/// parameter, and tau through dt'/dtau = n exp(tau).
PeriodicLossResult periodic_consistency_loss(const DynamicModel& model,
                                             const ConeBeamGeometry& geom,
                                             const Projection& projection, int n, double lambda1,
                                             const RenderOptions& render = {});

}  // namespace dgct
