#pragma once

#include <functional>
#include <vector>

#include "dgct/model.hpp"
#include "dgct/phantom.hpp"
#include "dgct/volume.hpp"

namespace dgct {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(range^2 / MSE) over all voxels, capped at 99 dB.
double psnr3d(const Volume& vol, const Volume& gt, double data_range = 1.0);

/// Mean SSIM over every 2D slice along each of the three axes.
double ssim_slices(const Volume& vol, const Volume& gt);

/// |estimate - truth| in milliseconds.
double period_error_ms(double estimate, double truth);

/// Voxelized model at time t (deformed through the field).
Volume reconstruct(const DynamicModel& model, double t, const VolumeSpec& spec);

struct EllipsoidMask {
  Vec3 center = Vec3::Zero();
  Vec3 semi_axes = Vec3::Ones();
  bool contains(const Vec3& x) const {
    return ((x - center).cwiseQuotient(semi_axes)).squaredNorm() <= 1.0;
  }
};

/// Body ellipsoid of the default phantom in its rest state.
EllipsoidMask default_body_mask();

struct CurvePoint {
  double t = 0.0;
  double volume = 0.0;
};

/// Air-like volume: voxel volume times the number of masked voxels whose
/// density is below the threshold.
double low_density_volume(const Volume& vol, double threshold, const EllipsoidMask& mask);

std::vector<CurvePoint> volume_curve(const std::function<Volume(double)>& volume_at,
                                     const std::vector<double>& times, double threshold,
                                     const EllipsoidMask& mask);
std::vector<CurvePoint> volume_curve(const DynamicModel& model, const std::vector<double>& times,
                                     const VolumeSpec& spec, double threshold,
                                     const EllipsoidMask& mask = default_body_mask());

/// t0, t0 + dt, ... up to t1 inclusive (within half a step).
std::vector<double> time_grid(double t0, double t1, double dt);

/// Period of the strongest spectral peak of the linearly detrended curve.
/// The curve must be uniformly sampled with at least 4 points.
double dominant_period(const std::vector<CurvePoint>& curve);

/// Ten times spanning one true period, starting mid-acquisition.
std::vector<double> evaluation_times(double duration, double period);

struct QualityReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
};

/// Mean psnr3d and ssim_slices of reconstructions against the phantom.
QualityReport evaluate_against_phantom(const DynamicModel& model, const BreathingPhantom& phantom,
                                       const std::vector<double>& times, const VolumeSpec& spec);

}  // namespace dgct
