#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dgct/types.hpp"

namespace dgct {

/// Axis-aligned box.
struct Box {
  Vec3 lo = Vec3::Constant(-0.5);
  Vec3 hi = Vec3::Constant(0.5);

  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return 0.5 * (lo + hi); }
  double diagonal() const { return extent().norm(); }
  bool has_positive_extent() const { return (hi.array() > lo.array()).all(); }
};

/// Circular cone-beam scanner. The source orbits the +z axis in the z = 0
/// plane at radius `dso`; the flat detector sits `dsd` from the source,
/// perpendicular to the source-to-origin axis.
struct ConeBeamGeometry {
  double dso = 1.5;
  double dsd = 3.0;
  double det_w = 2.0;
  double det_h = 2.0;
  int nu = 64;
  int nv = 64;
  Box bounds;

  /// Throws InputDomainError if any invariant is violated.
  void validate() const;

  double pixel_w() const { return det_w / nu; }
  double pixel_h() const { return det_h / nv; }
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length

  Vec3 at(double s) const { return origin + s * direction; }
};

/// Orthonormal frame of one view: source position, central axis (source
/// towards the rotation centre), detector u axis (tangential) and v axis (+z).
struct ViewFrame {
  Vec3 source;
  Vec3 axis;
  Vec3 e_u;
  Vec3 e_v;
};

/// Reduces an angle to [0, 2 pi) on a lattice of 2^32 steps per turn so that
/// views that differ by whole turns are bit-identical.
double canonical_angle(double angle);

ViewFrame view_frame(const ConeBeamGeometry& geom, double angle);

/// Ray from the source through the centre of detector pixel (u, v).
Ray make_ray(const ConeBeamGeometry& geom, double angle, int u, int v);

/// All detector rays of one view, row-major (index v * nu + u).
std::vector<Ray> detector_rays(const ConeBeamGeometry& geom, double angle);

/// Continuous pixel coordinates (u, v) of the perspective projection of
/// `point`, such that pixel centres land on integers. Empty when the point
/// is not in front of the source.
std::optional<std::pair<double, double>> project_to_detector(const ConeBeamGeometry& geom,
                                                             const ViewFrame& frame,
                                                             const Vec3& point);

/// Parameter interval [s0, s1] of the ray inside `box`, if any.
std::optional<std::pair<double, double>> clip_to_box(const Ray& ray, const Box& box);

}  // namespace dgct
