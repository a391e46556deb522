#include "dgct/model.hpp"

namespace dgct {

ModelGradients ModelGradients::zeros_like(const DynamicModel& m) {
  ModelGradients g;
  g.gaussians = GaussianSet::zeros(m.gaussians.size());
  g.planes = m.field.planes.zeros_like();
  g.decoder = m.field.decoder.zeros_like();
  return g;
}

ModelGradients& ModelGradients::operator+=(const ModelGradients& o) {
  gaussians += o.gaussians;
  planes += o.planes;
  decoder += o.decoder;
  tau += o.tau;
  return *this;
}

ModelGradients& ModelGradients::scale(double s) {
  for (double& x : gaussians.center_values()) x *= s;
  for (double& x : gaussians.log_scale_values()) x *= s;
  for (double& x : gaussians.quat_values()) x *= s;
  for (double& x : gaussians.density_values()) x *= s;
  for (auto& pl : planes.all_planes()) {
    for (double& x : pl) x *= s;
  }
  for (auto t : decoder.tensors()) {
    for (double& x : t) x *= s;
  }
  tau *= s;
  return *this;
}

DynamicModel make_model(GaussianSet gaussians, const ModelShape& shape,
                        const NormalizationBounds& bounds, double tau0, std::uint64_t seed) {
  DynamicModel m;
  m.gaussians = std::move(gaussians);
  m.field.planes = PlaneGrid::initialized(shape.planes, seed * 2 + 1);
  m.field.decoder = DeformDecoder::initialized(shape.planes.levels * shape.planes.features,
                                               shape.decoder_width, seed * 2 + 2);
  m.field.bounds = bounds;
  m.period.tau = tau0;
  return m;
}

}  // namespace dgct
