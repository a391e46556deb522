#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dgct/losses.hpp"
#include "dgct/model.hpp"
#include "dgct/phantom.hpp"
#include "dgct/rng.hpp"

namespace dgct {

struct LearningRates {
  double position = 2e-4;
  double density = 1e-2;
  double scale = 5e-3;
  double rotation = 1e-3;
  double planes = 2e-3;
  double decoder = 2e-4;
  double tau = 2e-4;
};

struct DensifyConfig {
  bool enabled = true;
  int interval = 500;
  int start = 500;             // first iteration eligible for densification
  double percentile = 0.9;     // clone kernels above this gradient quantile
  double prune_density = 1e-3; // remove kernels with activated density below
  int max_kernels = 6000;
};

struct TrainConfig {
  int iters_total = 10000;
  int iters_warmup = 2000;
  LearningRates lr;
  double lr_floor = 0.1;
  DensifyConfig densify;
  std::uint64_t seed = 0;
  LossWeights weights;
  int kernels = 2000;
  int init_grid_res = 32;
  double init_quantile = 0.8;
  PlaneGridConfig planes;
  int decoder_width = 64;
  double period_upper_bound = 5.0;
  double tau0 = 1.0296;
  int max_shift = 1;      // largest |n| of the cycle shift
  bool dynamic = true;    // false trains a static model for every iteration
  int tv_res = 32;
  double tv_edge = 0.25;

  void validate() const;
};

TrainConfig desk_preset();
TrainConfig paper_preset();
/// "desk" or "paper"; throws InputDomainError otherwise.
TrainConfig preset(const std::string& name);

/// Applies key=value lines to `base`. Blank lines and lines starting with
/// '#' are skipped; unknown keys and malformed values throw FormatError.
TrainConfig parse_train_config(const std::string& text, TrainConfig base);
/// Every field as key=value lines, readable by parse_train_config.
std::string format_train_config(const TrainConfig& cfg);

/// initial * floor^(iteration / total).
double lr_at(double initial, double iteration, double total, double floor);

/// Adam first and second moments shaped like the model parameters.
struct AdamMoments {
  GaussianSet m_gaussians, v_gaussians;
  PlaneGrid m_planes, v_planes;
  DeformDecoder m_decoder, v_decoder;
  double m_tau = 0.0, v_tau = 0.0;
  std::int64_t gaussian_steps = 0;
  std::int64_t field_steps = 0;

  static AdamMoments zeros_like(const DynamicModel& m);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

struct MetricsRow {
  std::int64_t iter = 0;
  LossTerms terms;
  double period = 0.0;
  double lr_position = 0.0;
};

struct TrainState {
  std::int64_t iteration = 0;
  DynamicModel model;
  AdamMoments moments;
  Rng rng;
  // Densification statistics since the last densify call.
  std::vector<double> grad_norm_sum;
  std::vector<Vec3> grad_sum;
  std::vector<int> grad_count;
};

/// Backprojection initialization plus a fresh deformation field.
TrainState init_state(const ProjectionSet& data, const TrainConfig& cfg);

NormalizationBounds normalization_for(const ProjectionSet& data, const TrainConfig& cfg);

/// One optimization step. Returns the logged metrics of that step.
MetricsRow train_step(TrainState& state, const ProjectionSet& data, const TrainConfig& cfg);

/// Clones high-gradient kernels and prunes low-density ones, keeping the
/// optimizer moments aligned. Throws TrainingError if nothing survives.
void densify_and_prune(TrainState& state, const TrainConfig& cfg);

struct FitResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
};

using StepCallback = std::function<void(const MetricsRow&)>;

FitResult fit(const ProjectionSet& data, const TrainConfig& cfg, const StepCallback& on_step = {});

/// Continues an existing state until cfg.iters_total.
void resume(TrainState& state, const ProjectionSet& data, const TrainConfig& cfg,
            std::vector<MetricsRow>& metrics, const StepCallback& on_step = {});

}  // namespace dgct
