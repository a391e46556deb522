#include "dgct/geometry.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

namespace dgct {

void ConeBeamGeometry::validate() const {
  if (!bounds.has_positive_extent()) {
    throw InputDomainError("geometry: scene bounds must have positive extent");
  }
  if (nu < 2 || nv < 2) {
    throw InputDomainError("geometry: detector resolution must be at least 2x2");
  }
  if (!(det_w > 0.0) || !(det_h > 0.0)) {
    throw InputDomainError("geometry: detector size must be positive");
  }
  const double half_extent =
      std::max(bounds.lo.cwiseAbs().maxCoeff(), bounds.hi.cwiseAbs().maxCoeff());
  if (!(dsd > dso) || !(dso > half_extent)) {
    throw InputDomainError("geometry: need dsd > dso > scene half-extent (got dso=" +
                           std::to_string(dso) + ", dsd=" + std::to_string(dsd) + ")");
  }
}

double canonical_angle(double angle) {
  // Index on a lattice of 2^32 steps per turn; the wrap is exact in integers.
  constexpr double kSteps = 4294967296.0;
  const double turns = angle / (2.0 * std::numbers::pi);
  const double index = std::nearbyint((turns - std::floor(turns)) * kSteps);
  const auto k = static_cast<std::uint64_t>(index) % 4294967296ull;
  return static_cast<double>(k) * (2.0 * std::numbers::pi / kSteps);
}

ViewFrame view_frame(const ConeBeamGeometry& geom, double angle) {
  const double a = canonical_angle(angle);
  const double c = std::cos(a);
  const double s = std::sin(a);
  ViewFrame f;
  f.source = Vec3(geom.dso * c, geom.dso * s, 0.0);
  f.axis = Vec3(-c, -s, 0.0);
  f.e_u = Vec3(-s, c, 0.0);
  f.e_v = Vec3(0.0, 0.0, 1.0);
  return f;
}

namespace {

Ray ray_through(const ConeBeamGeometry& geom, const ViewFrame& f, int u, int v) {
  const double off_u = ((u + 0.5) / geom.nu - 0.5) * geom.det_w;
  const double off_v = ((v + 0.5) / geom.nv - 0.5) * geom.det_h;
  const Vec3 dir = geom.dsd * f.axis + off_u * f.e_u + off_v * f.e_v;
  return Ray{f.source, dir.normalized()};
}

}  // namespace

Ray make_ray(const ConeBeamGeometry& geom, double angle, int u, int v) {
  if (u < 0 || u >= geom.nu || v < 0 || v >= geom.nv) {
    throw InputDomainError("make_ray: pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                           ") outside detector");
  }
  return ray_through(geom, view_frame(geom, angle), u, v);
}

std::vector<Ray> detector_rays(const ConeBeamGeometry& geom, double angle) {
  const ViewFrame f = view_frame(geom, angle);
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(geom.nu) * geom.nv);
  for (int v = 0; v < geom.nv; ++v) {
    for (int u = 0; u < geom.nu; ++u) rays.push_back(ray_through(geom, f, u, v));
  }
  return rays;
}

std::optional<std::pair<double, double>> project_to_detector(const ConeBeamGeometry& geom,
                                                             const ViewFrame& frame,
                                                             const Vec3& point) {
  const Vec3 q = point - frame.source;
  const double depth = q.dot(frame.axis);
  if (depth <= 1e-9) return std::nullopt;
  const double off_u = geom.dsd * q.dot(frame.e_u) / depth;
  const double off_v = geom.dsd * q.dot(frame.e_v) / depth;
  // Inverse of off = ((i + 0.5) / n - 0.5) * size.
  const double pu = (off_u / geom.det_w + 0.5) * geom.nu - 0.5;
  const double pv = (off_v / geom.det_h + 0.5) * geom.nv - 0.5;
  return std::make_pair(pu, pv);
}

std::optional<std::pair<double, double>> clip_to_box(const Ray& ray, const Box& box) {
  double s0 = -std::numeric_limits<double>::infinity();
  double s1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const double d = ray.direction[k];
    const double o = ray.origin[k];
    if (std::abs(d) < 1e-300) {
      if (o < box.lo[k] || o > box.hi[k]) return std::nullopt;
      continue;
    }
    double a = (box.lo[k] - o) / d;
    double b = (box.hi[k] - o) / d;
    if (a > b) std::swap(a, b);
    s0 = std::max(s0, a);
    s1 = std::min(s1, b);
  }
  if (!(s1 > s0)) return std::nullopt;
  return std::make_pair(s0, s1);
}

}  // namespace dgct
