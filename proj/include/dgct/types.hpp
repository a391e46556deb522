#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dgct {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Raw quaternion stored as (w, x, y, z); normalized at use sites.
using Quat = Eigen::Vector4d;

/// A caller passed a value outside an operation's domain.
class InputDomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file, config or dataset directory.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Detector image, row-major with nv rows of nu columns.
struct Image {
  int nu = 0;
  int nv = 0;
  std::vector<double> data;

  Image() = default;
  Image(int nu_, int nv_, double fill = 0.0)
      : nu(nu_), nv(nv_), data(static_cast<std::size_t>(nu_) * nv_, fill) {}

  double& at(int u, int v) { return data[static_cast<std::size_t>(v) * nu + u]; }
  double at(int u, int v) const { return data[static_cast<std::size_t>(v) * nu + u]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const { return nu == o.nu && nv == o.nv; }
};

}  // namespace dgct
