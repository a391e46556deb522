#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dgct/eval.hpp"
#include "dgct/phantom.hpp"
#include "dgct/training.hpp"

namespace dgct {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);

/// Acquisition settings for the synthetic phantom.
struct SimulationConfig {
  double period = 3.0;
  int n_proj = 120;
  double duration = 40.0;
  std::uint64_t seed = 0;
  double edge_width = 0.01;
  ConeBeamGeometry geometry;

  void validate() const;
  BreathingPhantom phantom() const;
};

/// key=value lines; unknown keys and malformed values throw FormatError.
SimulationConfig parse_simulation_config(const std::string& text, SimulationConfig base = {});
std::string format_simulation_config(const SimulationConfig& cfg);

/// geometry.txt, meta.csv and proj_%04d.raw (float32, little-endian).
void write_dataset(const fs::path& dir, const ProjectionSet& data);
ProjectionSet read_dataset(const fs::path& dir);

/// Headerless little-endian float32 image, nv rows of nu columns.
void write_image_raw(const fs::path& path, const Image& img);
Image read_image_raw(const fs::path& path, int nu, int nv);

/// "DTVL", u32 nx, ny, nz, then float32 densities x-fastest. The grid
/// bounds are not stored; readers get the default scene box.
void write_volume(const fs::path& path, const Volume& vol);
Volume read_volume(const fs::path& path, const Box& bounds = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  TrainState state;
};

/// Byte image of a checkpoint ("DTCK", version, tagged sections).
std::vector<std::uint8_t> encode_checkpoint(const TrainState& state, const TrainConfig& cfg);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const fs::path& path, const TrainState& state, const TrainConfig& cfg);
Checkpoint load_checkpoint(const fs::path& path);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string curve_csv(const std::vector<CurvePoint>& curve);

}  // namespace dgct
