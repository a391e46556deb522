#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dgct/geometry.hpp"
#include "dgct/types.hpp"
#include "dgct/volume.hpp"

namespace dgct {

enum class ComponentShape { Ellipsoid, Sphere };

/// One ellipsoidal component whose centre and semi-axes oscillate as
/// base + amplitude * sin(2 pi t / T).
struct PhantomComponent {
  ComponentShape shape = ComponentShape::Ellipsoid;
  Vec3 center = Vec3::Zero();
  Vec3 center_amplitude = Vec3::Zero();
  Vec3 semi_axes = Vec3::Ones();
  Vec3 semi_axes_amplitude = Vec3::Zero();
  double density_delta = 0.0;
};

/// Analytic, exactly periodic density field.
///
/// Each component contributes density_delta times a smooth indicator. The
/// indicator depends on the normalized radius r = |(x - c) / a| and falls
/// from 1 to 0 over r in [1 - h, 1 + h] with h = edge_width / (2 min(a)),
/// following the quintic smootherstep. Along the shortest semi-axis the
/// ramp is therefore exactly edge_width wide.
struct BreathingPhantom {
  double period = 3.0;
  std::vector<PhantomComponent> components;
  double edge_width = 0.01;

  Vec3 center_at(const PhantomComponent& c, double t) const;
  Vec3 semi_axes_at(const PhantomComponent& c, double t) const;
};

BreathingPhantom default_phantom(double period);

/// Smooth indicator of one component at time t, in [0, 1].
double component_indicator(const BreathingPhantom& p, const PhantomComponent& c, const Vec3& x,
                           double t);

double phantom_density(const BreathingPhantom& p, const Vec3& x, double t);

struct QuadratureOptions {
  double max_step = 0.0;       // 0 = edge_width / 2
  int min_subintervals = 128;  // per smooth segment, rounded up to even
};

/// Line integral of the phantom along every detector ray, by composite
/// Simpson quadrature on the ray segment inside the scene bounds. The
/// segment is split at every component's ramp boundaries so each piece is
/// smooth.
Image simulate_projection(const BreathingPhantom& p, const ConeBeamGeometry& geom, double angle,
                          double t, const QuadratureOptions& quad = {});

/// Line integral along a single ray (same quadrature as simulate_projection).
double phantom_line_integral(const BreathingPhantom& p, const Ray& ray, const Box& bounds,
                             double t, const QuadratureOptions& quad = {});

/// Ground-truth volume sampled at voxel centres.
Volume phantom_volume(const BreathingPhantom& p, const VolumeSpec& spec, double t);

struct Projection {
  double timestamp = 0.0;
  double angle = 0.0;
  Image image;
};

struct ProjectionSet {
  ConeBeamGeometry geometry;
  std::vector<Projection> items;
  double duration = 0.0;
  std::optional<double> true_period;

  bool empty() const { return items.empty(); }
  std::size_t size() const { return items.size(); }
};

/// Timestamps (j + 0.5) * duration / n_proj; angles uniform in [0, 2 pi)
/// from a generator seeded with `seed`, assigned in acquisition order.
ProjectionSet generate_dataset(const BreathingPhantom& p, const ConeBeamGeometry& geom,
                               int n_proj, double duration, std::uint64_t seed,
                               const QuadratureOptions& quad = {});

}  // namespace dgct
