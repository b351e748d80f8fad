#include "voxmotion/diffusion.hpp"

#include <cmath>
#include <cstddef>

#include "voxmotion/error.hpp"

namespace voxmotion {

void DiffusionSchedule::validate() const {
  if (steps < 1) throw InvariantError("schedule needs at least one step");
  const std::size_t n = static_cast<std::size_t>(steps) + 1;
  if (beta.size() != n || alpha.size() != n || alpha_bar.size() != n) {
    throw InvariantError("schedule arrays must hold steps + 1 entries");
  }
  if (alpha_bar[0] != 1.0) throw InvariantError("alpha_bar[0] must be the clean sentinel 1");
  for (int i = 1; i <= steps; ++i) {
    if (!(beta[i] > 0.0 && beta[i] < 1.0)) throw InvariantError("beta out of (0, 1)");
    if (i > 1 && beta[i] < beta[i - 1]) throw InvariantError("beta must be non-decreasing");
    if (alpha[i] != 1.0 - beta[i]) throw InvariantError("alpha must equal 1 - beta");
    if (!(alpha_bar[i] > 0.0 && alpha_bar[i] < alpha_bar[i - 1])) {
      throw InvariantError("alpha_bar must decrease strictly within (0, 1]");
    }
  }
}

DiffusionSchedule make_schedule(int n, double beta_start, double beta_end) {
  if (n < 1) throw InvariantError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvariantError("beta range must satisfy 0 < start <= end < 1");
  }
  DiffusionSchedule sched;
  sched.steps = n;
  sched.beta.assign(static_cast<std::size_t>(n) + 1, 0.0);
  sched.alpha.assign(static_cast<std::size_t>(n) + 1, 1.0);
  sched.alpha_bar.assign(static_cast<std::size_t>(n) + 1, 1.0);
  for (int i = 1; i <= n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i - 1) / (n - 1);
    sched.beta[i] = beta_start + frac * (beta_end - beta_start);
    sched.alpha[i] = 1.0 - sched.beta[i];
    sched.alpha_bar[i] = sched.alpha_bar[i - 1] * sched.alpha[i];
  }
  sched.validate();
  return sched;
}

namespace {

void check_timestep(const DiffusionSchedule& sched, int i, int lo) {
  if (i < lo || i > sched.steps) throw InvariantError("timestep out of range");
}

}  // namespace

HeatmapField forward_noise(const HeatmapField& x0, int i, const HeatmapField& noise,
                           const DiffusionSchedule& sched) {
  check_timestep(sched, i, 0);
  if (!x0.same_shape(noise)) throw InvariantError("noise shape must match the signal");
  HeatmapField out = x0;
  out.mode = FieldMode::Raw;
  if (i == 0) return out;
  const double a = std::sqrt(sched.alpha_bar[i]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[i]);
  for (std::size_t v = 0; v < out.values.size(); ++v) {
    out.values[v] = a * x0.values[v] + b * noise.values[v];
  }
  return out;
}

HeatmapField ddim_step(const HeatmapField& x_i, const HeatmapField& x0_hat, int i, int i_prev,
                       const DiffusionSchedule& sched) {
  check_timestep(sched, i, 1);
  if (i_prev < 0 || i_prev >= i) throw InvariantError("ddim must step to an earlier timestep");
  if (!x_i.same_shape(x0_hat)) throw InvariantError("estimate shape must match the state");
  const double ab_i = sched.alpha_bar[i];
  const double sqrt_ab_i = std::sqrt(ab_i);
  const double inv_noise_i = 1.0 / std::sqrt(1.0 - ab_i);
  HeatmapField out = x0_hat;
  out.mode = FieldMode::Raw;
  if (i_prev == 0) return out;  // alpha_bar sentinel 1: the estimate passes through exactly
  const double sqrt_ab_p = std::sqrt(sched.alpha_bar[i_prev]);
  const double noise_p = std::sqrt(1.0 - sched.alpha_bar[i_prev]);
  for (std::size_t v = 0; v < out.values.size(); ++v) {
    const double eps = (x_i.values[v] - sqrt_ab_i * x0_hat.values[v]) * inv_noise_i;
    out.values[v] = sqrt_ab_p * x0_hat.values[v] + noise_p * eps;
  }
  return out;
}

std::vector<int> ddim_timesteps(int n, int step_count) {
  if (n < 1) throw InvariantError("schedule needs at least one step");
  if (step_count < 1 || step_count > n) {
    throw InvariantError("step count must lie in [1, steps]");
  }
  std::vector<int> taus(static_cast<std::size_t>(step_count));
  for (int j = 1; j <= step_count; ++j) {
    taus[static_cast<std::size_t>(j) - 1] =
        static_cast<int>(std::llround(static_cast<double>(j) * n / step_count));
  }
  return taus;
}

HeatmapField sample(const DenoiseFn& denoise, const VolumeSpec& spec, int frames, int joints,
                    const DiffusionSchedule& sched, int step_count, std::uint64_t seed) {
  if (frames < 1 || joints < 1) throw InvariantError("sample needs at least one channel");
  const std::vector<int> taus = ddim_timesteps(sched.steps, step_count);
  Rng rng(seed);
  HeatmapField x(spec, frames, joints, FieldMode::Raw);
  fill_standard_normal(rng, x.values);
  for (std::size_t j = taus.size(); j-- > 0;) {
    const int i = taus[j];
    const int i_prev = j == 0 ? 0 : taus[j - 1];
    const HeatmapField x0_hat = denoise(x, i);
    x = ddim_step(x, x0_hat, i, i_prev, sched);
  }
  return x;
}

}  // namespace voxmotion
