#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "dgct/geometry.hpp"

namespace dgct {

/// Regular grid over a box. Voxel (i, j, k) is centred at
/// lo + (index + 0.5) * spacing.
struct VolumeSpec {
  std::array<int, 3> res{64, 64, 64};
  Box bounds;

  Vec3 spacing() const {
    return bounds.extent().cwiseQuotient(Vec3(res[0], res[1], res[2]));
  }
  Vec3 voxel_center(int i, int j, int k) const {
    const Vec3 h = spacing();
    return bounds.lo + Vec3((i + 0.5) * h.x(), (j + 0.5) * h.y(), (k + 0.5) * h.z());
  }
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(res[0]) * res[1] * res[2];
  }
  double voxel_volume() const { return spacing().prod(); }
};

/// Densities on a VolumeSpec grid, x-fastest.
struct Volume {
  VolumeSpec spec;
  std::vector<double> data;

  Volume() = default;
  explicit Volume(const VolumeSpec& s, double fill = 0.0) : spec(s), data(s.voxel_count(), fill) {}

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * spec.res[1] + j) * spec.res[0] + i;
  }
  double& at(int i, int j, int k) { return data[index(i, j, k)]; }
  double at(int i, int j, int k) const { return data[index(i, j, k)]; }
  bool same_shape(const Volume& o) const { return spec.res == o.spec.res; }

  /// Trilinear interpolation between voxel centres, clamped at the border.
  double sample_trilinear(const Vec3& x) const;
};

}  // namespace dgct
