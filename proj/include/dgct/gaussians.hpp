#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dgct/phantom.hpp"
#include "dgct/types.hpp"
#include "dgct/volume.hpp"

namespace dgct {

/// K radiative Gaussian kernels in raw (pre-activation) form.
///
/// Activations: scale = exp(log_scale), density = softplus(raw density),
/// rotation = R(normalize(quat)). The same layout doubles as gradient and
/// optimizer-moment storage.
struct GaussianSet {
  std::vector<Vec3> centers;
  std::vector<Vec3> log_scales;
  std::vector<Quat> quats;
  std::vector<double> densities;

  std::size_t size() const { return centers.size(); }
  bool empty() const { return centers.empty(); }

  void resize(std::size_t k);
  static GaussianSet zeros(std::size_t k);

  /// Keeps the kernels listed in `indices`, in that order (duplicates allowed).
  GaussianSet gather(std::span<const std::size_t> indices) const;
  void append(const GaussianSet& other);
  GaussianSet& operator+=(const GaussianSet& other);

  std::span<double> center_values() { return {centers.data()->data(), 3 * size()}; }
  std::span<double> log_scale_values() { return {log_scales.data()->data(), 3 * size()}; }
  std::span<double> quat_values() { return {quats.data()->data(), 4 * size()}; }
  std::span<double> density_values() { return {densities.data(), size()}; }
  std::span<const double> center_values() const { return {centers.data()->data(), 3 * size()}; }
  std::span<const double> log_scale_values() const {
    return {log_scales.data()->data(), 3 * size()};
  }
  std::span<const double> quat_values() const { return {quats.data()->data(), 4 * size()}; }
  std::span<const double> density_values() const { return {densities.data(), size()}; }
};

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

/// Rotation matrix of a raw quaternion. Throws InputDomainError for q = 0.
Mat3 rotation_from_quaternion(const Quat& q);

/// Sigma = R S S^T R^T with S = diag(exp(log_scales)).
Mat3 covariance(const Quat& q, const Vec3& log_scales);

/// Sigma^-1 = R diag(exp(-2 log_scales)) R^T, built from the factors.
Mat3 inverse_covariance(const Quat& q, const Vec3& log_scales);

/// Activated kernel ready for evaluation.
struct ActiveKernel {
  Vec3 center;
  Mat3 inv_cov;
  Mat3 rotation;
  Vec3 scales;
  double density = 0.0;
  double cull_radius = 0.0;  // 3 * max scale
};

ActiveKernel activate(const GaussianSet& set, std::size_t i);
std::vector<ActiveKernel> activate_all(const GaussianSet& set);

/// Maps gradients with respect to an activated kernel (inverse covariance,
/// centre, activated density) onto the raw parameters of kernel i and adds
/// them to `grads`. `d_inv_cov` holds dL/dA_kl for every entry.
void accumulate_raw_gradients(const GaussianSet& set, std::size_t i, const ActiveKernel& k,
                              const Mat3& d_inv_cov, const Vec3& d_center, double d_density,
                              GaussianSet& grads);

/// sigma(x) = sum_i rho_i exp(-1/2 (x - mu_i)^T Sigma_i^-1 (x - mu_i)).
double evaluate_density(const GaussianSet& set, const Vec3& x);

struct VoxelizeOptions {
  // Skip voxels farther than 3 * max scale from a kernel, and voxels past
  // Mahalanobis distance sqrt(60) where the kernel is below 1e-13 of its peak.
  bool cull = true;
};

Volume voxelize(const GaussianSet& set, const VolumeSpec& spec, const VoxelizeOptions& opts = {});

/// Gradient of sum(voxel_grads * voxelize(set)) with respect to the raw
/// parameters, with the same culling as voxelize.
GaussianSet voxelize_backward(const GaussianSet& set, const VolumeSpec& spec,
                              const Volume& voxel_grads, const VoxelizeOptions& opts = {});

struct BackprojectionInit {
  int count = 2000;
  int grid_res = 32;
  double threshold_quantile = 0.8;
  std::uint64_t seed = 0;
};

/// Seeds kernels from an unfiltered backprojection of the data: voxel values
/// are the mean over projections of the pixel each voxel centre projects to;
/// centres are drawn from voxels above the quantile with probability
/// proportional to value, then jittered inside the voxel.
GaussianSet init_from_backprojection(const ProjectionSet& data, const BackprojectionInit& opts);

/// Unfiltered backprojection used by init_from_backprojection.
Volume backproject(const ProjectionSet& data, const VolumeSpec& spec);

}  // namespace dgct
