#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dgct/gaussians.hpp"
#include "dgct/geometry.hpp"

namespace dgct {

/// Acquisition time span, padded by the period upper bound on both sides so
/// that times shifted by one period still fall on the temporal grid.
struct TimeDomain {
  double start = 0.0;
  double end = 40.0;
  double period_upper_bound = 5.0;

  double lo() const { return start - period_upper_bound; }
  double hi() const { return end + period_upper_bound; }
};

struct NormalizationBounds {
  Box space;
  TimeDomain time;
};

/// Maps (x, y, z) from the scene box and t from [lo, hi] of the time domain
/// onto [0, 1]^4, clamping out-of-range inputs.
Vec4 normalize_coords(const Vec3& center, double t, const NormalizationBounds& bounds);

struct PlaneGridConfig {
  int levels = 2;
  int base_res = 32;  // spatial resolution of level 1
  int time_res = 32;  // temporal resolution of level 1
  int features = 32;
};

/// Coordinate pairs of the six planes: xy, xz, yz, xt, yt, zt.
inline constexpr std::array<std::array<int, 2>, 6> kPlaneAxes{
    {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

/// Six feature planes per level. Level l (1-based) has l * base_res nodes
/// along spatial axes and l * time_res nodes along time. Nodes sit on the
/// unit interval at i / (res - 1); features are stored node-major
/// ([row b][column a][feature]).
class PlaneGrid {
 public:
  PlaneGrid() = default;
  explicit PlaneGrid(const PlaneGridConfig& cfg, double fill = 0.0);

  /// Features 1 + uniform(-0.01, 0.01) from a seeded generator.
  static PlaneGrid initialized(const PlaneGridConfig& cfg, std::uint64_t seed);

  PlaneGrid zeros_like() const { return PlaneGrid(cfg_, 0.0); }

  const PlaneGridConfig& config() const { return cfg_; }
  int levels() const { return cfg_.levels; }
  int features() const { return cfg_.features; }
  int resolution(int level, int axis) const {
    return (level + 1) * (axis == 3 ? cfg_.time_res : cfg_.base_res);
  }

  std::vector<double>& plane(int level, int p) { return planes_[level * 6 + p]; }
  const std::vector<double>& plane(int level, int p) const { return planes_[level * 6 + p]; }

  std::size_t node_offset(int level, int p, int ia, int ib) const {
    const int ra = resolution(level, kPlaneAxes[p][0]);
    return (static_cast<std::size_t>(ib) * ra + ia) * cfg_.features;
  }

  std::size_t parameter_count() const;
  std::vector<std::vector<double>>& all_planes() { return planes_; }
  const std::vector<std::vector<double>>& all_planes() const { return planes_; }

  PlaneGrid& operator+=(const PlaneGrid& o);

 private:
  PlaneGridConfig cfg_;
  std::vector<std::vector<double>> planes_;
};

/// f_e: per level the Hadamard product of the six bilinear samples, levels
/// concatenated (length levels * features).
std::vector<double> encode(const PlaneGrid& grid, const Vec4& v);

struct DecoderHead {
  Eigen::MatrixXd w1;  // width x width
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // out x width
  Eigen::VectorXd b2;
};

/// Fusion layer (affine + ReLU) followed by three heads producing offsets
/// for centre (3), raw quaternion (4) and raw log-scale (3).
struct DeformDecoder {
  Eigen::MatrixXd fusion_w;  // width x in_dim
  Eigen::VectorXd fusion_b;
  std::array<DecoderHead, 3> heads;

  static constexpr std::array<int, 3> kHeadOutputs{3, 4, 3};

  /// Hidden layers use uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); final
  /// layers of every head start at exactly zero.
  static DeformDecoder initialized(int in_dim, int width, std::uint64_t seed);
  DeformDecoder zeros_like() const;

  int in_dim() const { return static_cast<int>(fusion_w.cols()); }
  int width() const { return static_cast<int>(fusion_w.rows()); }

  /// Every parameter tensor in a fixed order.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  DeformDecoder& operator+=(const DeformDecoder& o);
};

struct DeformationField {
  PlaneGrid planes;
  DeformDecoder decoder;
  NormalizationBounds bounds;
};

struct DeformGradients {
  GaussianSet gaussians;
  PlaneGrid planes;
  DeformDecoder decoder;
  double dt = 0.0;
};

/// One evaluation of the deformation field at time t, keeping the
/// intermediates needed for the backward pass. The set and field must
/// outlive the pass.
class DeformPass {
 public:
  DeformPass(const GaussianSet& set, const DeformationField& field, double t);

  const GaussianSet& deformed() const { return deformed_; }

  /// True when t fell outside the padded time domain and was clamped.
  bool time_clamped() const { return time_clamped_; }

  /// Chain rule from gradients on the deformed set to every input.
  DeformGradients backward(const GaussianSet& upstream) const;

 private:
  struct Stencil {
    int ia, ib;
    double fa, fb;
    bool live_a, live_b;  // coordinate not clamped
  };

  const GaussianSet* set_;
  const DeformationField* field_;
  double t_;
  bool time_clamped_ = false;
  std::vector<Stencil> stencils_;   // [kernel][level][plane]
  std::vector<double> samples_;     // [kernel][level][plane][feature]
  Eigen::MatrixXd encoded_;         // K x in_dim
  Eigen::MatrixXd hidden_;          // K x width (post-ReLU)
  std::array<Eigen::MatrixXd, 3> head_hidden_;  // K x width (post-ReLU)
  GaussianSet deformed_;
};

GaussianSet deform(const GaussianSet& set, const DeformationField& field, double t);

DeformGradients deform_backward(const GaussianSet& set, const DeformationField& field, double t,
                                const GaussianSet& upstream);

}  // namespace dgct
