#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "voxmotion/geometry.hpp"
#include "voxmotion/heatmap.hpp"

namespace voxmotion {

struct LossWeights {
  double pos = 0.1;
  double vel = 0.1;
  double sk = 0.1;
  double ori = 1.0;

  bool operator==(const LossWeights&) const = default;
};

struct LossReport {
  double total = 0.0;
  double rec = 0.0;
  double pos = 0.0;
  double vel = 0.0;
  double sk = 0.0;
  double ori = 0.0;
  std::vector<double> field_grad;  // dtotal/dpred values; empty unless requested
};

/// Mean squared error over every field entry. When grad is nonempty it must
/// match the field size and receives 2*(pred - target)/count.
double loss_rec(const HeatmapField& pred, const HeatmapField& target,
                std::span<double> grad = {});

/// Mean over (t,k) of squared distance between predicted and ground-truth
/// joints. grad, when given, is resized to T*K and assigned.
double loss_pos(const MotionSequence& pred, const MotionSequence& gt,
                std::vector<Eigen::Vector3d>* grad = nullptr);

/// Mean over (t,k), t in [0, T-2], of squared forward-difference mismatch.
/// A single-frame sequence scores 0.
double loss_vel(const MotionSequence& pred, const MotionSequence& gt,
                std::vector<Eigen::Vector3d>* grad = nullptr);

/// Mean over (t, bone) of squared bone-vector mismatch.
double loss_sk(const MotionSequence& pred, const MotionSequence& gt,
               const SkeletonTopology& topo, std::vector<Eigen::Vector3d>* grad = nullptr);

/// 1 - cos(angle) between the initial heading directions of the two first
/// frames. Throws InvariantError when either heading is degenerate. grad, when
/// given, is resized to K (nonzero only at root and the hips).
double loss_ori(std::span<const Eigen::Vector3d> pred_frame0,
                std::span<const Eigen::Vector3d> gt_frame0, const SkeletonTopology& topo,
                std::vector<Eigen::Vector3d>* grad = nullptr);

/// Evaluates all five terms on a predicted field: rec against the target
/// field directly, the joint-space terms on the clamped-ratio decode of pred
/// against the ground-truth motion. total = rec + w.pos*pos + w.vel*vel +
/// w.sk*sk + w.ori*ori. With with_grad, field_grad carries the full chain.
LossReport total_loss(const HeatmapField& pred, const HeatmapField& target,
                      const MotionSequence& gt, const SkeletonTopology& topo,
                      const LossWeights& w = {}, bool with_grad = false);

}  // namespace voxmotion
