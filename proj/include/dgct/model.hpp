#pragma once

#include <cmath>
#include <cstdint>

#include "dgct/deform.hpp"
#include "dgct/gaussians.hpp"

namespace dgct {

/// Log-space breathing period: T = exp(tau), positive for every finite tau.
struct LearnablePeriod {
  double tau = 1.0296;

  double seconds() const { return std::exp(tau); }
};

/// Canonical kernels, deformation field and learnable period.
struct DynamicModel {
  GaussianSet gaussians;
  DeformationField field;
  LearnablePeriod period;
};

struct ModelGradients {
  GaussianSet gaussians;
  PlaneGrid planes;
  DeformDecoder decoder;
  double tau = 0.0;

  static ModelGradients zeros_like(const DynamicModel& m);
  ModelGradients& operator+=(const ModelGradients& o);
  ModelGradients& scale(double s);
};

struct ModelShape {
  PlaneGridConfig planes;
  int decoder_width = 64;
};

/// Wraps an initial kernel set with a freshly initialized deformation field
/// (near-one planes, zero-output heads) and the given log-period.
DynamicModel make_model(GaussianSet gaussians, const ModelShape& shape,
                        const NormalizationBounds& bounds, double tau0, std::uint64_t seed);

}  // namespace dgct
