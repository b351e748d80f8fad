#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "voxmotion/denoiser.hpp"
#include "voxmotion/geometry.hpp"
#include "voxmotion/volume.hpp"

namespace voxmotion {

/// Hands count as touching an object when the nearest object point is closer
/// than this, both when labels are built and when they are scored.
constexpr double kContactThreshold = 0.10;

/// Feet below this height above the floor count as in ground contact.
constexpr double kFootHeightThreshold = 0.05;

/// Per-frame ground-truth contact flags for each hand.
struct ContactLabels {
  std::vector<std::uint8_t> lhand;
  std::vector<std::uint8_t> rhand;
};

/// One procedurally generated interaction example: the conditioning entities
/// frame by frame, the actor's ground-truth motion, contact flags derived
/// from the same threshold the metrics use, and an optional goal point.
struct ToySample {
  TaskId task_id = TaskId::HumanObject;
  std::vector<std::vector<EntitySnapshot>> entities;  // per frame
  MotionSequence gt_motion;
  ContactLabels contact;
  std::optional<Eigen::Vector3d> goal;
  std::uint64_t seed = 0;

  /// Throws InvariantError unless every joint's voxel lies in the grid, the
  /// label lengths match the frame count, and every true contact flag really
  /// is within the contact threshold of an object point.
  void validate(const VolumeSpec& spec, const SkeletonTopology& topo) const;
};

/// Smoothstep polynomial 10s^3 - 15s^4 + 6s^5: 0 at 0, 1 at 1, zero first and
/// second derivatives at both ends.
double min_jerk(double s);

/// Human-object task: a static standing body reaches its right hand along a
/// straight min-jerk path to a small object point cluster, arriving at 3/4 of
/// the clip and holding contact after. The goal is the cluster center.
ToySample gen_reach(std::uint64_t seed, const VolumeSpec& spec, int frames,
                    const SkeletonTopology& topo);

/// Human-scene task: floor lattice plus 1-3 obstacle clusters placed off the
/// path; the root walks straight to a free-space goal at constant speed while
/// the feet alternate a 4-frame gait whose stance frames are pinned to the
/// floor exactly (zero horizontal drift at height zero).
ToySample gen_goalwalk(std::uint64_t seed, const VolumeSpec& spec, int frames,
                       const SkeletonTopology& topo);

/// Human-human task: a static partner body (rendered into the condition as
/// surface points) is approached head-on; the actor stops 0.6 m in front,
/// facing the partner, and raises a hand over the final quarter.
ToySample gen_approach(std::uint64_t seed, const VolumeSpec& spec, int frames,
                       const SkeletonTopology& topo);

/// Qualitative combined task: walk toward a goal in an obstacle scene that
/// also contains an object cluster, extending a hand toward it at the end.
ToySample gen_compound(std::uint64_t seed, const VolumeSpec& spec, int frames,
                       const SkeletonTopology& topo);

/// Dispatch by task id.
ToySample generate_sample(TaskId task, std::uint64_t seed, const VolumeSpec& spec, int frames,
                          const SkeletonTopology& topo);

/// Rasterizes the sample's conditioning entities into a semantic volume.
SemanticVolume sample_condition_volume(const ToySample& sample, const VolumeSpec& spec);

/// Packages a sample for the trainer: the motion encoded at `sigma` and
/// rescaled so peaks sit near one, plus the condition volume and goal.
TrainItem make_train_item(const ToySample& sample, const VolumeSpec& spec, double sigma);

}  // namespace voxmotion
