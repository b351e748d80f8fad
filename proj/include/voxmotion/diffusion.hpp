#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "voxmotion/heatmap.hpp"
#include "voxmotion/rng.hpp"

namespace voxmotion {

/// Timesteps are 1-based; index 0 is the clean-signal sentinel with
/// alpha_bar[0] = 1, which makes the terminal sampling step exact.
struct DiffusionSchedule {
  int steps = 0;                  // N
  std::vector<double> beta;       // N+1 entries, beta[0] = 0
  std::vector<double> alpha;     // 1 - beta
  std::vector<double> alpha_bar;  // running products, alpha_bar[0] = 1

  /// Throws InvariantError unless beta in (0,1) non-decreasing and alpha_bar
  /// is strictly decreasing within (0, 1].
  void validate() const;
};

/// Linear beta schedule over N steps, endpoints inclusive.
DiffusionSchedule make_schedule(int n, double beta_start = 1e-4, double beta_end = 0.02);

/// x_i = sqrt(alpha_bar_i) * x0 + sqrt(1 - alpha_bar_i) * noise. i = 0 returns
/// x0 untouched. Shapes must match.
HeatmapField forward_noise(const HeatmapField& x0, int i, const HeatmapField& noise,
                           const DiffusionSchedule& sched);

/// Deterministic update from timestep i to i_prev < i given the model's clean
/// estimate: recovers the implied noise
/// eps = (x_i - sqrt(ab_i) * x0_hat) / sqrt(1 - ab_i) and re-corrupts x0_hat
/// to level i_prev. Stepping to 0 returns x0_hat exactly.
HeatmapField ddim_step(const HeatmapField& x_i, const HeatmapField& x0_hat, int i, int i_prev,
                       const DiffusionSchedule& sched);

/// Evenly spaced increasing subsequence round(j*N/S), j = 1..S; always ends
/// at N. Requires 1 <= S <= N.
std::vector<int> ddim_timesteps(int n, int step_count);

/// The model hook: given a noisy field and its timestep, estimate x0.
using DenoiseFn = std::function<HeatmapField(const HeatmapField&, int)>;

/// Draws x_N from a seeded standard normal and walks the DDIM subsequence
/// down to the clean signal. Deterministic in (seed, denoise).
HeatmapField sample(const DenoiseFn& denoise, const VolumeSpec& spec, int frames, int joints,
                    const DiffusionSchedule& sched, int step_count, std::uint64_t seed);

}  // namespace voxmotion
