#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace voxmotion {

enum class EntityClass : std::uint8_t { Human = 1, Object = 2, Scene = 3 };

/// Indices of the joints referenced by name elsewhere (losses, metrics, gait).
struct NamedJoints {
  int root = -1;
  int lhip = -1;
  int rhip = -1;
  int lfoot = -1;
  int rfoot = -1;
  int lhand = -1;
  int rhand = -1;
  int head = -1;
};

/// A bone connects a parent joint to a child joint.
struct Bone {
  int parent = -1;
  int child = -1;
};

/// Joint tree plus capsule radii used for body-surface sampling.
///
/// Axis convention throughout the project: right-handed, y-up. Heights are
/// measured along +y and the floor sits at y = 0.
struct SkeletonTopology {
  int joint_count = 0;
  std::vector<std::string> joint_names;
  std::vector<int> parent;  // -1 marks the root
  std::vector<Bone> bones;  // joint_count - 1 entries, child-index order
  NamedJoints named;
  std::vector<double> capsule_radii;  // one per bone, meters

  /// Throws InvariantError unless the parent links form a single-rooted tree,
  /// every named index is valid, lhip != rhip, and all radii are positive.
  void validate() const;

  int bone_count() const { return static_cast<int>(bones.size()); }
};

/// Builds the bone list from parent links (one bone per non-root joint).
std::vector<Bone> bones_from_parents(const std::vector<int>& parent);

/// The default 8-joint toy skeleton: root, lhip, rhip, lfoot, rfoot, lhand,
/// rhand, head; 7 bones, capsule radius 0.05 m (0.10 m for root->head).
SkeletonTopology default_topology();

/// Rest pose for default_topology(), facing +z, root at (0, 0.9, 0):
///   root (0, 0.90, 0), lhip (-0.10, 0.85, 0), rhip (0.10, 0.85, 0),
///   lfoot (-0.10, 0, 0), rfoot (0.10, 0, 0), lhand (-0.35, 0.95, 0),
///   rhand (0.35, 0.95, 0), head (0, 1.55, 0).
std::vector<Eigen::Vector3d> default_rest_pose();

/// World-space joint positions over time, frame-major storage.
struct MotionSequence {
  int frames = 0;  // T
  int joints = 0;  // K
  double fps = 10.0;
  std::vector<Eigen::Vector3d> positions;  // frames * joints entries

  MotionSequence() = default;
  MotionSequence(int t, int k, double frames_per_second = 10.0)
      : frames(t), joints(k), fps(frames_per_second),
        positions(static_cast<std::size_t>(t) * k, Eigen::Vector3d::Zero()) {}

  Eigen::Vector3d& at(int t, int k) { return positions[static_cast<std::size_t>(t) * joints + k]; }
  const Eigen::Vector3d& at(int t, int k) const {
    return positions[static_cast<std::size_t>(t) * joints + k];
  }
  std::span<const Eigen::Vector3d> frame(int t) const {
    return {positions.data() + static_cast<std::size_t>(t) * joints, static_cast<std::size_t>(joints)};
  }

  /// Throws InvariantError if T < 1, K < 1, or any coordinate is non-finite.
  void validate() const;
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Rotation must be orthonormal with determinant 1 within `tol`.
  bool is_valid(double tol = 1e-6) const;

  static RigidTransform about_y(double angle_rad, const Eigen::Vector3d& t = Eigen::Vector3d::Zero());
};

/// A set of world-space points tagged with the entity type they belong to.
struct EntitySnapshot {
  std::vector<Eigen::Vector3d> points;
  EntityClass entity_class = EntityClass::Scene;

  void validate() const;
};

/// rotation * p + translation per point. Throws InvariantError on an invalid
/// transform or non-finite input.
std::vector<Eigen::Vector3d> apply_transform(std::span<const Eigen::Vector3d> points,
                                             const RigidTransform& xf);

/// Samples points on the capsule surface around each bone: samples_per_bone
/// points per bone, split area-proportionally between the cylindrical side
/// (spread along the segment, displaced by the bone radius perpendicular to
/// the axis) and the two hemispherical end caps. Every point sits exactly one
/// radius from the bone segment. A degenerate bone (parent == child within
/// 1e-9 m) falls back to a sphere of the same radius. Deterministic in `seed`.
EntitySnapshot sample_body_surface(std::span<const Eigen::Vector3d> frame,
                                   const SkeletonTopology& topo, int samples_per_bone,
                                   std::uint64_t seed = 0);

/// Row n = position(parent(n)) - position(child(n)).
std::vector<Eigen::Vector3d> bone_vectors(std::span<const Eigen::Vector3d> frame,
                                          const SkeletonTopology& topo);

struct OrientationResult {
  Eigen::Vector3d direction = Eigen::Vector3d::Zero();  // raw cross product, not re-normalized
  bool degenerate = false;                              // hips parallel
};

/// Heading from the hip bone vectors: normalize(s_lhip) x normalize(s_rhip)
/// with s = root - hip. Throws InvariantError when either hip bone vector has
/// norm < 1e-9; parallel hips yield a zero vector with the degenerate flag.
OrientationResult initial_orientation(std::span<const Eigen::Vector3d> frame0,
                                      const SkeletonTopology& topo);

/// Poses the default rest pose at `root_xz` with yaw `heading_rad` about +y
/// (0 faces +z). Root height keeps the rest-pose value.
std::vector<Eigen::Vector3d> pose_at(const SkeletonTopology& topo,
                                     const Eigen::Vector3d& root_position, double heading_rad);

}  // namespace voxmotion
