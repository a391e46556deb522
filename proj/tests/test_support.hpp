#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dgct/deform.hpp"
#include "dgct/gaussians.hpp"
#include "dgct/geometry.hpp"
#include "dgct/types.hpp"
#include "dgct/volume.hpp"

namespace testing {

/// splitmix64, mirrored by tests/oracles/reference_metrics.py.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

inline dgct::Image random_image(std::uint64_t seed, int nu, int nv) {
  SplitMix64 g(seed);
  dgct::Image img(nu, nv);
  for (double& v : img.data) v = g.uniform();
  return img;
}

/// (vol, gt) generated exactly like the Python oracle.
inline std::pair<dgct::Volume, dgct::Volume> volume_pair(std::uint64_t seed, int nx, int ny,
                                                         int nz) {
  dgct::VolumeSpec spec;
  spec.res = {nx, ny, nz};
  dgct::Volume gt(spec), vol(spec);
  SplitMix64 g(seed);
  for (double& v : gt.data) v = g.uniform();
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    vol.data[i] = gt.data[i] + 0.1 * static_cast<double>(seed + 1) * (g.uniform() - 0.5);
  }
  return {vol, gt};
}

/// Random kernels inside [-0.3, 0.3]^3 with moderate anisotropy.
inline dgct::GaussianSet random_gaussians(SplitMix64& g, std::size_t k, double scale_lo = 0.05,
                                          double scale_hi = 0.15) {
  dgct::GaussianSet s;
  s.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    s.centers[i] = dgct::Vec3(g.uniform(-0.3, 0.3), g.uniform(-0.3, 0.3), g.uniform(-0.3, 0.3));
    for (int a = 0; a < 3; ++a) s.log_scales[i][a] = std::log(g.uniform(scale_lo, scale_hi));
    s.quats[i] = dgct::Quat(g.uniform(0.5, 1.0), g.uniform(-0.5, 0.5), g.uniform(-0.5, 0.5),
                            g.uniform(-0.5, 0.5));
    s.densities[i] = g.uniform(-1.0, 1.0);
  }
  return s;
}

/// ||a - b|| / ||b|| with a zero reference treated as absolute error.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  if (den == 0.0) return std::sqrt(num);
  return std::sqrt(num / den);
}

/// Central differences of f over every entry of `params`.
inline std::vector<double> central_differences(std::span<double> params,
                                               const std::function<double()>& f, double step) {
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + step;
    const double fp = f();
    params[i] = keep - step;
    const double fm = f();
    params[i] = keep;
    out[i] = (fp - fm) / (2.0 * step);
  }
  return out;
}

/// Adaptive Simpson quadrature of f over [a, b].
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol, int depth = 50) {
  struct Rec {
    const std::function<double(double)>& f;
    double step(double a, double fa, double m, double fm, double b, double fb, double whole,
                double tol, int depth) const {
      const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      const double flm = f(lm), frm = f(rm);
      const double left = (m - a) / 6 * (fa + 4 * flm + fm);
      const double right = (b - m) / 6 * (fm + 4 * frm + fb);
      const double diff = left + right - whole;
      if (depth <= 0 || std::abs(diff) <= 15 * tol) return left + right + diff / 15;
      return step(a, fa, lm, flm, m, fm, left, tol / 2, depth - 1) +
             step(m, fm, rm, frm, b, fb, right, tol / 2, depth - 1);
    }
  } rec{f};
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  return rec.step(a, fa, m, fm, b, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, depth);
}

/// True when some detector ray passes within `margin` of a kernel's cull
/// radius, where finite differences would straddle the cutoff.
inline bool near_cull_boundary(const dgct::GaussianSet& set, const dgct::ConeBeamGeometry& geom,
                               double angle, double margin) {
  for (int v = 0; v < geom.nv; ++v) {
    for (int u = 0; u < geom.nu; ++u) {
      const dgct::Ray r = dgct::make_ray(geom, angle, u, v);
      for (std::size_t i = 0; i < set.size(); ++i) {
        const double radius = 3.0 * std::exp(set.log_scales[i].maxCoeff());
        const double dist = (set.centers[i] - r.origin).cross(r.direction).norm();
        if (std::abs(dist - radius) < margin) return true;
      }
    }
  }
  return false;
}

/// Small deformation field with every weight randomized, including the
/// final head layers, so that offsets are nonzero.
inline dgct::DeformationField random_field(SplitMix64& g, const dgct::PlaneGridConfig& cfg,
                                           int width, double duration = 10.0,
                                           double period_bound = 5.0) {
  dgct::DeformationField f;
  f.planes = dgct::PlaneGrid(cfg);
  for (auto& pl : f.planes.all_planes()) {
    for (double& x : pl) x = g.uniform(0.7, 1.3);
  }
  f.decoder = dgct::DeformDecoder::initialized(cfg.levels * cfg.features, width, 1);
  for (auto t : f.decoder.tensors()) {
    for (double& x : t) x = g.uniform(-0.4, 0.4);
  }
  f.bounds.time.end = duration;
  f.bounds.time.period_upper_bound = period_bound;
  return f;
}

/// Distance of a normalized coordinate from the nearest grid node.
inline double grid_line_distance(double v, int res) {
  const double x = v * (res - 1);
  return std::abs(x - std::round(x)) / (res - 1);
}

/// Smallest |pre-activation| over every hidden unit of the decoder for the
/// kernels of `set` at time t.
inline double min_preactivation(const dgct::GaussianSet& set, const dgct::DeformationField& f,
                                double t) {
  double m = 1e300;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const dgct::Vec4 v = dgct::normalize_coords(set.centers[i], t, f.bounds);
    const auto e = dgct::encode(f.planes, v);
    const Eigen::VectorXd fe = Eigen::Map<const Eigen::VectorXd>(e.data(), e.size());
    const Eigen::VectorXd z = f.decoder.fusion_w * fe + f.decoder.fusion_b;
    m = std::min(m, z.cwiseAbs().minCoeff());
    const Eigen::VectorXd h = z.cwiseMax(0.0);
    for (const auto& head : f.decoder.heads) {
      m = std::min(m, (head.w1 * h + head.b1).cwiseAbs().minCoeff());
    }
  }
  return m;
}

/// True when every kernel sits at least `margin` (normalized units) from
/// the grid lines of every level and axis, spatially and in time.
inline bool clear_of_grid_lines(const dgct::GaussianSet& set, const dgct::DeformationField& f,
                                const std::vector<double>& times, double margin) {
  for (double t : times) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      const dgct::Vec4 v = dgct::normalize_coords(set.centers[i], t, f.bounds);
      for (int l = 0; l < f.planes.levels(); ++l) {
        for (int a = 0; a < 4; ++a) {
          if (v[a] <= 0.0 || v[a] >= 1.0) return false;
          if (grid_line_distance(v[a], f.planes.resolution(l, a)) < margin) return false;
        }
      }
    }
  }
  return true;
}

}  // namespace testing
