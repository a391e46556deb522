#include "dgct/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dgct/rng.hpp"

namespace dgct {

namespace {

double oscillation(double t, double period) {
  return std::sin(2.0 * std::numbers::pi * t / period);
}

double smootherstep(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * x * (x * (6.0 * x - 15.0) + 10.0);
}

double ramp_half_width(const BreathingPhantom& p, const Vec3& semi_axes) {
  return p.edge_width / (2.0 * semi_axes.minCoeff());
}

double indicator_of_radius(double r, double h) {
  return 1.0 - smootherstep((r - (1.0 - h)) / (2.0 * h));
}

double simpson(const BreathingPhantom& p, const Ray& ray, double a, double b, int n, double t) {
  const double step = (b - a) / n;
  double sum = phantom_density(p, ray.at(a), t) + phantom_density(p, ray.at(b), t);
  for (int i = 1; i < n; ++i) {
    sum += (i % 2 ? 4.0 : 2.0) * phantom_density(p, ray.at(a + i * step), t);
  }
  return sum * step / 3.0;
}

}  // namespace

Vec3 BreathingPhantom::center_at(const PhantomComponent& c, double t) const {
  return c.center + c.center_amplitude * oscillation(t, period);
}

Vec3 BreathingPhantom::semi_axes_at(const PhantomComponent& c, double t) const {
  return c.semi_axes + c.semi_axes_amplitude * oscillation(t, period);
}

BreathingPhantom default_phantom(double period) {
  if (!(period > 0.0)) throw InputDomainError("default_phantom: period must be positive");
  BreathingPhantom p;
  p.period = period;
  p.edge_width = 0.01;

  PhantomComponent body;
  body.semi_axes = Vec3(0.35, 0.25, 0.45);
  body.density_delta = 0.30;
  p.components.push_back(body);

  for (double side : {-1.0, 1.0}) {
    PhantomComponent lung;
    lung.center = Vec3(0.15 * side, 0.0, 0.05);
    lung.semi_axes = Vec3(0.12, 0.10, 0.18);
    lung.semi_axes_amplitude = Vec3(0.0, 0.0, 0.03);
    lung.density_delta = -0.25;
    p.components.push_back(lung);
  }

  PhantomComponent tumor;
  tumor.shape = ComponentShape::Sphere;
  tumor.center = Vec3(0.15, 0.0, 0.05);
  tumor.center_amplitude = Vec3(0.0, 0.0, 0.02);
  tumor.semi_axes = Vec3::Constant(0.03);
  tumor.density_delta = 0.40;
  p.components.push_back(tumor);
  return p;
}

double component_indicator(const BreathingPhantom& p, const PhantomComponent& c, const Vec3& x,
                           double t) {
  const Vec3 axes = p.semi_axes_at(c, t);
  const double r = (x - p.center_at(c, t)).cwiseQuotient(axes).norm();
  return indicator_of_radius(r, ramp_half_width(p, axes));
}

double phantom_density(const BreathingPhantom& p, const Vec3& x, double t) {
  double sigma = 0.0;
  for (const auto& c : p.components) sigma += c.density_delta * component_indicator(p, c, x, t);
  return std::max(sigma, 0.0);
}

double phantom_line_integral(const BreathingPhantom& p, const Ray& ray, const Box& bounds,
                             double t, const QuadratureOptions& quad) {
  const auto clip = clip_to_box(ray, bounds);
  if (!clip) return 0.0;
  const auto [s0, s1] = *clip;

  std::vector<double> cuts{s0, s1};
  for (const auto& c : p.components) {
    const Vec3 axes = p.semi_axes_at(c, t);
    const Vec3 dn = ray.direction.cwiseQuotient(axes);
    const Vec3 on = (ray.origin - p.center_at(c, t)).cwiseQuotient(axes);
    const double qa = dn.squaredNorm();
    const double qb = dn.dot(on);
    const double qc = on.squaredNorm();
    const double h = ramp_half_width(p, axes);
    for (double r : {1.0 - h, 1.0 + h}) {
      if (r <= 0.0) continue;
      const double disc = qb * qb - qa * (qc - r * r);
      if (disc <= 0.0) continue;
      const double root = std::sqrt(disc);
      for (double s : {(-qb - root) / qa, (-qb + root) / qa}) {
        if (s > s0 && s < s1) cuts.push_back(s);
      }
    }
  }
  std::sort(cuts.begin(), cuts.end());

  const double max_step = quad.max_step > 0.0 ? quad.max_step : 0.5 * p.edge_width;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i];
    const double b = cuts[i + 1];
    if (!(b > a)) continue;
    int n = std::max(quad.min_subintervals, static_cast<int>(std::ceil((b - a) / max_step)));
    n += n % 2;
    total += simpson(p, ray, a, b, n, t);
  }
  return std::max(total, 0.0);
}

Image simulate_projection(const BreathingPhantom& p, const ConeBeamGeometry& geom, double angle,
                          double t, const QuadratureOptions& quad) {
  const auto rays = detector_rays(geom, angle);
  Image img(geom.nu, geom.nv);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rays.size()); ++i) {
    img.data[i] = phantom_line_integral(p, rays[i], geom.bounds, t, quad);
  }
  return img;
}

Volume phantom_volume(const BreathingPhantom& p, const VolumeSpec& spec, double t) {
  Volume vol(spec);
#pragma omp parallel for
  for (int k = 0; k < spec.res[2]; ++k) {
    for (int j = 0; j < spec.res[1]; ++j) {
      for (int i = 0; i < spec.res[0]; ++i) {
        vol.at(i, j, k) = phantom_density(p, spec.voxel_center(i, j, k), t);
      }
    }
  }
  return vol;
}

ProjectionSet generate_dataset(const BreathingPhantom& p, const ConeBeamGeometry& geom,
                               int n_proj, double duration, std::uint64_t seed,
                               const QuadratureOptions& quad) {
  if (n_proj < 1) throw InputDomainError("generate_dataset: n_proj must be >= 1");
  if (!(duration > 0.0)) throw InputDomainError("generate_dataset: duration must be positive");
  geom.validate();

  ProjectionSet set;
  set.geometry = geom;
  set.duration = duration;
  set.true_period = p.period;
  Rng rng(seed);
  set.items.resize(n_proj);
  for (int j = 0; j < n_proj; ++j) {
    set.items[j].timestamp = (j + 0.5) * duration / n_proj;
    set.items[j].angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  for (auto& item : set.items) {
    item.image = simulate_projection(p, geom, item.angle, item.timestamp, quad);
  }
  return set;
}

}  // namespace dgct
