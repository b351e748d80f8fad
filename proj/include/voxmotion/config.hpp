#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "voxmotion/denoiser.hpp"
#include "voxmotion/losses.hpp"
#include "voxmotion/volume.hpp"

namespace voxmotion {

/// Every knob a command needs, resolvable from a named profile, a JSON file,
/// and flag overrides (in that order).
struct RunConfig {
  std::string profile = "desk";
  VolumeSpec spec;
  double sigma = 3.0;          // gaussian width in voxels
  int frames = 40;             // T
  int joints = 8;              // K
  int diffusion_steps = 1000;  // N
  int ddim_steps = 50;
  LossWeights weights;
  int train_steps = 500000;
  int batch = 32;
  double lr = 3e-5;
  int trunk_dim = 12;
  int width = 64;
  int embed_dim = 16;
  std::uint64_t seed = 0;
  std::array<int, 3> mix{1, 1, 1};  // human : object : scene draw ratio
  double fps = 10.0;

  bool operator==(const RunConfig&) const = default;

  /// Throws InvariantError on nonpositive sizes, rates, or sigma.
  void validate() const;
};

/// Paper-scale constants: 48^3 grid at (0.05, 0.10, 0.10) m pitch, sigma 3,
/// 40 frames, batch 32, lr 3e-5, 500k steps. Shape and format work only;
/// training at this scale is out of budget.
RunConfig full_profile();

/// CPU-trainable profile: 16^3 grid at (0.15, 0.30, 0.30) m pitch covering
/// the same space, sigma 2, 8 frames, batch 16, lr 1e-3, 3000 steps.
RunConfig desk_profile();

/// "full" or "desk"; throws InvariantError otherwise.
RunConfig profile_by_name(const std::string& name);

/// The model-shape slice of the config.
DenoiserConfig denoiser_config(const RunConfig& config);

/// Flat JSON document with every field; parse rejects unknown keys.
std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);

void save_config(const std::filesystem::path& path, const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace voxmotion
