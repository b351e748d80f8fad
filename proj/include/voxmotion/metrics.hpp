#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "voxmotion/geometry.hpp"
#include "voxmotion/synthdata.hpp"

namespace voxmotion {

/// Binary classification scores for hand-object contact, pooled over both
/// hands and all frames.
struct ContactScores {
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Motion-quality summary. Goal distance applies only to goal-directed
/// tasks, and the set-level scores (diversity, ffd) need enough samples, so
/// those three are optional.
struct MetricReport {
  double mpjpe_cm = 0.0;
  double troot_cm = 0.0;
  double fs = 0.0;
  ContactScores contact;
  std::optional<double> goal_dist_cm;
  std::optional<double> diversity;
  std::optional<double> ffd;

  /// Throws InvariantError when a score leaves [0,1] or a distance is
  /// negative or non-finite.
  void validate() const;
};

/// Mean per-joint position error in centimeters.
double mpjpe(const MotionSequence& pred, const MotionSequence& gt);

/// Mean root-joint position error in centimeters.
double t_root(const MotionSequence& pred, const MotionSequence& gt, const SkeletonTopology& topo);

/// Mean horizontal displacement (cm) of feet over their floor-contact frames:
/// a foot lower than floor_y + h_thresh at frame t < T-1 contributes its
/// horizontal motion to frame t+1. Zero when no foot ever touches down.
double foot_sliding(const MotionSequence& pred, const SkeletonTopology& topo, double floor_y = 0.0,
                    double h_thresh = kFootHeightThreshold);

/// Scores predicted contact (hand within `threshold` of the nearest object
/// point) against the labels, pooled over both hands and all frames. With no
/// positive labels and no positive predictions, precision and recall are 1.
ContactScores contact_metrics(const MotionSequence& pred, const SkeletonTopology& topo,
                              std::span<const Eigen::Vector3d> object_points,
                              const ContactLabels& gt_labels,
                              double threshold = kContactThreshold);

/// Floor-plane distance (cm) from the final-frame root to the goal.
double goal_distance(const MotionSequence& pred, const Eigen::Vector3d& goal,
                     const SkeletonTopology& topo);

/// Spread of a sample set: sequences are flattened to root-relative joint
/// coordinates, shuffled with `seed`, split into two halves, and the mean
/// Euclidean distance across the resulting pairs is returned. Needs at least
/// two samples; an odd straggler is dropped.
double diversity(std::span<const MotionSequence> samples, const SkeletonTopology& topo,
                 std::uint64_t seed = 0);

/// Fixed random descriptor for distribution comparison: root-relative
/// positions plus per-frame velocities, projected to `dim` components by a
/// seeded N(0,1)/sqrt(D) matrix. One row per sample.
Eigen::MatrixXd motion_features(std::span<const MotionSequence> samples,
                                const SkeletonTopology& topo, int dim = 32,
                                std::uint64_t seed = 0);

/// A = vectors * values.asDiagonal() * vectors.transpose(), values ascending.
struct EigenDecomposition {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Sweeps until the
/// off-diagonal Frobenius norm drops below 1e-10 * max(1, |A|_F); throws
/// NumericalError if 100 sweeps are not enough.
EigenDecomposition symmetric_eigen(const Eigen::MatrixXd& a);

/// Frechet distance between Gaussian fits of two feature sets (rows are
/// samples): |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}), covariance
/// unbiased, matrix square root by eigendecomposition with negative
/// eigenvalues clamped to zero. Each set needs at least dim + 1 rows and at
/// most 64 columns; throws InvariantError otherwise.
double frechet_feature_distance(const Eigen::MatrixXd& set_a, const Eigen::MatrixXd& set_b);

}  // namespace voxmotion
