#pragma once

#include <span>

#include "dgct/deform.hpp"
#include "dgct/model.hpp"
#include "dgct/period.hpp"
#include "dgct/rng.hpp"
#include "dgct/volume.hpp"

namespace dgct {

struct LossWeights {
  double lambda1 = 0.25;  // D-SSIM mix-in of the periodic consistency loss
  double lambda2 = 0.25;  // D-SSIM mix-in of the render loss
  double alpha = 1.0;     // periodic consistency
  double beta = 0.05;     // 3D TV
  double gamma = 0.001;   // plane TV

  void validate() const;
};

/// Loss value with its gradient with respect to the second (rendered) image.
struct ImageLoss {
  double value = 0.0;
  Image grad;
};

/// Mean absolute difference.
double l1(const Image& a, const Image& b);
ImageLoss l1_with_grad(const Image& reference, const Image& render);

/// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = (0.01 L)^2,
/// C2 = (0.03 L)^2, L = 1, averaged over window positions fully inside the
/// image. Inputs must be at least 11x11.
double ssim(const Image& a, const Image& b);

/// ssim on row-major width x height arrays.
double ssim(std::span<const double> a, std::span<const double> b, int width, int height);

/// 1 - ssim(a, b).
double dssim(const Image& a, const Image& b);
ImageLoss dssim_with_grad(const Image& reference, const Image& render);

/// Mean over axes of the mean squared forward difference between
/// neighbouring voxels; axes of length 1 are skipped.
double tv3d(const Volume& vol);
double tv3d_with_grad(const Volume& vol, Volume& grad);

/// For every level and plane, the mean squared difference of neighbouring
/// feature vectors along each plane axis (per channel), averaged over the
/// two axes, then over planes and levels.
double tv4d(const PlaneGrid& grid);
double tv4d_with_grad(const PlaneGrid& grid, PlaneGrid& grad);

enum class Phase { Warmup, Joint };

struct TotalLossOptions {
  int tv_res = 32;          // voxels per side of the random TV sub-grid
  double tv_edge = 0.25;    // sub-grid edge length, scene units
  RenderOptions render;
};

struct LossTerms {
  double render = 0.0;
  double pc = 0.0;
  double tv3d = 0.0;
  double tv4d = 0.0;
  double total = 0.0;
  bool time_clamped = false;
};

struct TotalLossResult {
  LossTerms terms;
  ModelGradients grads;
};

/// Random cube of edge `edge` inside `bounds` with `res` voxels per side.
VolumeSpec random_subgrid(const Box& bounds, int res, double edge, Rng& rng);

/// Warm-up: L1 + lambda2 DSSIM of the static render plus beta * TV3D.
/// Joint: render loss through the deformation field at t_j, plus
/// alpha * periodic consistency (shift n), beta * TV3D of the deformed
/// kernels on a random sub-grid and gamma * TV4D of the planes.
TotalLossResult total_loss(const DynamicModel& model, const ProjectionSet& data, std::size_t j,
                           int n, const LossWeights& weights, Phase phase, Rng& rng,
                           const TotalLossOptions& opts = {});

}  // namespace dgct
