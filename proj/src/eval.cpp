#include "dgct/eval.hpp"

#include <cmath>
#include <numbers>

#include "dgct/deform.hpp"
#include "dgct/losses.hpp"

namespace dgct {

double psnr3d(const Volume& vol, const Volume& gt, double data_range) {
  if (!vol.same_shape(gt)) throw InputDomainError("psnr3d: volume shapes differ");
  if (!(data_range > 0.0)) throw InputDomainError("psnr3d: data_range must be > 0");
  if (vol.data.empty()) throw InputDomainError("psnr3d: empty volume");
  double se = 0.0;
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    const double d = vol.data[i] - gt.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(vol.data.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(data_range * data_range / mse));
}

double ssim_slices(const Volume& vol, const Volume& gt) {
  if (!vol.same_shape(gt)) throw InputDomainError("ssim_slices: volume shapes differ");
  const auto& r = vol.spec.res;
  double sum = 0.0;
  int count = 0;
  std::vector<double> a, b;
  for (int axis = 0; axis < 3; ++axis) {
    // Slice plane axes, in increasing order.
    const int p = axis == 0 ? 1 : 0;
    const int q = axis == 2 ? 1 : 2;
    const int w = r[p], h = r[q];
    if (w < 11 || h < 11) throw InputDomainError("ssim_slices: slices must be at least 11x11");
    a.resize(static_cast<std::size_t>(w) * h);
    b.resize(a.size());
    for (int s = 0; s < r[axis]; ++s) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          int idx[3];
          idx[axis] = s;
          idx[p] = x;
          idx[q] = y;
          const std::size_t src = vol.index(idx[0], idx[1], idx[2]);
          a[static_cast<std::size_t>(y) * w + x] = vol.data[src];
          b[static_cast<std::size_t>(y) * w + x] = gt.data[src];
        }
      }
      sum += ssim(a, b, w, h);
      ++count;
    }
  }
  return sum / count;
}

double period_error_ms(double estimate, double truth) { return std::abs(estimate - truth) * 1000.0; }

Volume reconstruct(const DynamicModel& model, double t, const VolumeSpec& spec) {
  return voxelize(deform(model.gaussians, model.field, t), spec);
}

EllipsoidMask default_body_mask() {
  const BreathingPhantom p = default_phantom(3.0);
  const PhantomComponent& body = p.components.front();
  return {body.center, body.semi_axes};
}

double low_density_volume(const Volume& vol, double threshold, const EllipsoidMask& mask) {
  if (!(threshold >= 0.0)) throw InputDomainError("volume_curve: threshold must be >= 0");
  std::size_t count = 0;
  const auto& r = vol.spec.res;
  for (int k = 0; k < r[2]; ++k) {
    for (int j = 0; j < r[1]; ++j) {
      for (int i = 0; i < r[0]; ++i) {
        if (vol.at(i, j, k) < threshold && mask.contains(vol.spec.voxel_center(i, j, k))) ++count;
      }
    }
  }
  return static_cast<double>(count) * vol.spec.voxel_volume();
}

std::vector<CurvePoint> volume_curve(const std::function<Volume(double)>& volume_at,
                                     const std::vector<double>& times, double threshold,
                                     const EllipsoidMask& mask) {
  if (!(threshold >= 0.0)) throw InputDomainError("volume_curve: threshold must be >= 0");
  std::vector<CurvePoint> out;
  out.reserve(times.size());
  for (double t : times) out.push_back({t, low_density_volume(volume_at(t), threshold, mask)});
  return out;
}

std::vector<CurvePoint> volume_curve(const DynamicModel& model, const std::vector<double>& times,
                                     const VolumeSpec& spec, double threshold,
                                     const EllipsoidMask& mask) {
  return volume_curve([&](double t) { return reconstruct(model, t, spec); }, times, threshold,
                      mask);
}

std::vector<double> time_grid(double t0, double t1, double dt) {
  if (!(dt > 0.0) || !(t1 >= t0)) throw InputDomainError("time grid needs dt > 0 and t1 >= t0");
  const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / dt + 0.5)) + 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = t0 + static_cast<double>(i) * dt;
  return out;
}

double dominant_period(const std::vector<CurvePoint>& curve) {
  const std::size_t n = curve.size();
  if (n < 4) throw InputDomainError("dominant_period: need at least 4 samples");
  const double dt = (curve.back().t - curve.front().t) / static_cast<double>(n - 1);
  if (!(dt > 0.0)) throw InputDomainError("dominant_period: times must increase");

  // Least-squares line through the samples.
  double st = 0, sv = 0, stt = 0, stv = 0;
  for (const auto& p : curve) {
    st += p.t;
    sv += p.volume;
    stt += p.t * p.t;
    stv += p.t * p.volume;
  }
  const double dn = static_cast<double>(n);
  const double denom = dn * stt - st * st;
  const double slope = (dn * stv - st * sv) / denom;
  const double icept = (sv - slope * st) / dn;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = curve[i].volume - (icept + slope * curve[i].t);

  // Dense scan between one cycle per record and Nyquist.
  const double span = dt * dn;
  const double f_lo = 1.0 / span;
  const double f_hi = 0.5 / dt;
  const int steps = 64 * static_cast<int>(n);
  double best_f = f_lo, best_p = -1.0;
  for (int s = 0; s <= steps; ++s) {
    const double f = f_lo + (f_hi - f_lo) * s / steps;
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ph = 2.0 * std::numbers::pi * f * (curve[i].t - curve.front().t);
      re += y[i] * std::cos(ph);
      im += y[i] * std::sin(ph);
    }
    const double power = re * re + im * im;
    if (power > best_p) {
      best_p = power;
      best_f = f;
    }
  }
  return 1.0 / best_f;
}

std::vector<double> evaluation_times(double duration, double period) {
  std::vector<double> out(10);
  for (int k = 0; k < 10; ++k) out[k] = 0.5 * duration + period * k / 10.0;
  return out;
}

QualityReport evaluate_against_phantom(const DynamicModel& model, const BreathingPhantom& phantom,
                                       const std::vector<double>& times, const VolumeSpec& spec) {
  QualityReport r;
  if (times.empty()) return r;
  for (double t : times) {
    const Volume rec = reconstruct(model, t, spec);
    const Volume gt = phantom_volume(phantom, spec, t);
    r.psnr_db += psnr3d(rec, gt);
    r.ssim += ssim_slices(rec, gt);
  }
  r.psnr_db /= static_cast<double>(times.size());
  r.ssim /= static_cast<double>(times.size());
  return r;
}

}  // namespace dgct
