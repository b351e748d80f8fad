#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxmotion/diffusion.hpp"
#include "voxmotion/heatmap.hpp"
#include "voxmotion/losses.hpp"
#include "voxmotion/rng.hpp"
#include "voxmotion/volume.hpp"

namespace voxmotion {

enum class TaskId : std::uint8_t {
  HumanHuman = 0,
  HumanObject = 1,
  HumanScene = 2,
  Compound = 3,
};

constexpr int kTaskCount = 4;

const char* task_name(TaskId id);
TaskId parse_task(const std::string& name);

/// Conditioning observation for generation: the semantic volume of the scene
/// so far, which task to perform, and an optional goal point in meters.
struct TaskCondition {
  TaskId task_id = TaskId::HumanObject;
  SemanticVolume uiv;
  std::optional<Eigen::Vector3d> goal;
};

struct DenoiserConfig {
  VolumeSpec spec;       // field grid the model operates on
  int frames = 8;        // T
  int joints = 8;        // K
  int trunk_dim = 4;     // cubic trunk grid edge; must divide every grid dim
  int width = 64;        // hidden layer width
  int embed_dim = 16;    // task and timestep embedding size, even

  bool operator==(const DenoiserConfig&) const = default;

  int pooled_dim() const { return frames * joints * trunk_dim * trunk_dim * trunk_dim; }
  /// Pyramid cells (4^3 + 2^3 + 1^3) times the 3 semantic channels, then the
  /// task embedding and the goal slot.
  int cond_dim() const { return 73 * 3 + embed_dim + 3; }

  /// Throws InvariantError unless dims are cubic-poolable (divisible by 4 and
  /// by trunk_dim) and sizes are positive with even embed_dim.
  void validate() const;
};

/// The learned tensors, row-major [rows x cols] unless it is a bias.
struct ParamTensors {
  std::vector<double> task_embed;     // [kTaskCount x embed]
  std::vector<double> time_proj;      // [width x embed]
  std::vector<double> cond_proj;      // [width x cond_dim]
  std::vector<double> in_weight;      // [width x pooled]
  std::vector<double> in_bias;        // [width]
  std::vector<double> hidden_weight;  // [width x width]
  std::vector<double> hidden_bias;    // [width]
  std::vector<double> out_weight;     // [pooled x width]
  std::vector<double> out_bias;       // [pooled]
};

struct NamedTensor {
  const char* name;
  std::vector<double>* data;
};
struct ConstNamedTensor {
  const char* name;
  const std::vector<double>* data;
};

/// Canonical tensor order shared by init, the optimizer walk, checkpoints,
/// and gradient checks.
std::array<NamedTensor, 9> tensor_refs(ParamTensors& t);
std::array<ConstNamedTensor, 9> tensor_refs(const ParamTensors& t);

/// Shapes each tensor for the config, zero filled.
ParamTensors zero_tensors(const DenoiserConfig& config);
std::size_t param_count(const DenoiserConfig& config);

struct AdamState {
  std::int64_t step = 0;
  std::vector<double> m;  // first moments, flat over the canonical tensor order
  std::vector<double> v;  // second moments
};

struct DenoiserParams {
  DenoiserConfig config;
  ParamTensors tensors;
  AdamState opt;

  /// Throws InvariantError on any shape mismatch or non-finite value.
  void validate() const;
};

/// Random weight init: matrices scale as 1/sqrt(fan_in), biases start at zero,
/// embeddings unit normal. Optimizer state starts empty (lazily sized).
DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed);

struct CondFeatures {
  std::vector<double> values;  // cond_dim entries
  int task_index = 0;
};

/// Average-pooled semantic occupancy at cell resolutions 4^3, 2^3, 1^3 (three
/// one-hot channels each, averaged over frames and cell voxels), then the task
/// embedding row, then the goal in meters (zeros when absent). Deterministic.
CondFeatures encode_condition(const TaskCondition& cond, const DenoiserParams& params);

/// Intermediate activations retained for the reverse pass.
struct ForwardCache {
  std::vector<double> pooled;   // block-averaged input, pooled_dim
  std::vector<double> t_embed;  // sinusoidal timestep features, embed_dim
  std::vector<double> cond;     // condition feature vector
  int task_index = 0;
  std::vector<double> a1;       // first hidden activation
  std::vector<double> a2;       // second hidden activation
};

/// Clean-signal estimate: block-average each (t,k) channel to the trunk grid,
/// run two tanh layers with timestep and condition features injected into the
/// first preactivation, then trilinearly upsample the head output back to the
/// field grid. Output shape equals input shape.
HeatmapField predict_x0(const HeatmapField& x_i, int timestep, const CondFeatures& cond,
                        const DenoiserParams& params, ForwardCache* cache = nullptr);

/// Exact reverse-mode gradients of predict_x0 with respect to every parameter
/// tensor, given dL/d(output values). The task embedding gradient lands on the
/// row the cache saw.
ParamTensors backward(const DenoiserParams& params, const ForwardCache& cache,
                      std::span<const double> output_grad);

/// One optimizer step: moment-based adaptive update with bias correction.
/// grads must be shaped like params; lr 0 leaves the tensors untouched.
void adam_update(DenoiserParams& params, const ParamTensors& grads, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// One training example: the clean field in diffusion amplitude space, the
/// joints it encodes, and the conditioning observation.
struct TrainItem {
  HeatmapField x0;
  MotionSequence motion;
  TaskCondition cond;
};

/// Draws dataset indices so the three primary task types appear in the given
/// ratio (default 1:1:1), cycling task buckets and picking uniformly inside
/// each bucket. Compound items are left out of the rotation.
class MixSampler {
 public:
  MixSampler(std::span<const TrainItem> items, std::array<int, 3> ratio = {1, 1, 1});
  int draw(Rng& rng);

 private:
  std::array<std::vector<int>, 3> pools_;
  std::vector<int> cycle_;  // task index pattern realizing the ratio
  std::size_t cursor_ = 0;
};

/// Noises each item at a uniformly drawn timestep, predicts the clean field,
/// scores the five-term objective against the item, averages parameter
/// gradients over the batch, and applies one optimizer step. Throws
/// NumericalError with a diagnostic if any loss term goes non-finite.
LossReport train_step(std::span<const TrainItem> batch, const SkeletonTopology& topo,
                      DenoiserParams& params, const DiffusionSchedule& sched,
                      const LossWeights& weights, double lr, Rng& rng);

/// base scaled by (1 - step/total): full rate at step 0, approaching zero at
/// the end.
double linear_decay_lr(double base, std::int64_t step, std::int64_t total_steps);

struct TrainOptions {
  int steps = 1000;
  int batch = 16;
  double lr = 3e-5;
  std::uint64_t seed = 0;
  std::array<int, 3> mix{1, 1, 1};
};

/// Full training loop: mixes batches per `mix`, decays the learning rate
/// linearly, and reports each step's losses through the callback.
std::vector<LossReport> train_loop(
    std::span<const TrainItem> dataset, const SkeletonTopology& topo, DenoiserParams& params,
    const DiffusionSchedule& sched, const LossWeights& weights, const TrainOptions& opts,
    const std::function<void(int, const LossReport&)>& on_step = nullptr);

/// Wraps the model as the sampler hook for a fixed condition.
DenoiseFn make_denoise_fn(const DenoiserParams& params, const TaskCondition& cond);

}  // namespace voxmotion
