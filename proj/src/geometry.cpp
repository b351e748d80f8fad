#include "voxmotion/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <cmath>
#include <numbers>

#include "voxmotion/error.hpp"
#include "voxmotion/rng.hpp"

namespace voxmotion {

void SkeletonTopology::validate() const {
  if (joint_count <= 0) throw InvariantError("skeleton: joint_count must be positive");
  if (static_cast<int>(parent.size()) != joint_count)
    throw InvariantError("skeleton: parent list size mismatch");
  if (static_cast<int>(joint_names.size()) != joint_count)
    throw InvariantError("skeleton: joint_names size mismatch");

  int roots = 0;
  for (int p : parent) {
    if (p == -1) {
      ++roots;
    } else if (p < 0 || p >= joint_count) {
      throw InvariantError("skeleton: parent index out of range");
    }
  }
  if (roots != 1) throw InvariantError("skeleton: expected exactly one root joint");

  // walking up from every joint must terminate at the root without cycles
  for (int j = 0; j < joint_count; ++j) {
    int cur = j;
    int hops = 0;
    while (parent[cur] != -1) {
      cur = parent[cur];
      if (++hops > joint_count) throw InvariantError("skeleton: cycle in parent links");
    }
  }

  if (static_cast<int>(bones.size()) != joint_count - 1)
    throw InvariantError("skeleton: expected joint_count - 1 bones");
  if (capsule_radii.size() != bones.size())
    throw InvariantError("skeleton: capsule_radii size mismatch");
  for (double r : capsule_radii)
    if (!(r > 0.0)) throw InvariantError("skeleton: capsule radii must be positive");

  auto check_index = [&](int idx, const char* what) {
    if (idx < 0 || idx >= joint_count)
      throw InvariantError(std::string("skeleton: invalid named index: ") + what);
  };
  check_index(named.root, "root");
  check_index(named.lhip, "lhip");
  check_index(named.rhip, "rhip");
  check_index(named.lfoot, "lfoot");
  check_index(named.rfoot, "rfoot");
  check_index(named.lhand, "lhand");
  check_index(named.rhand, "rhand");
  check_index(named.head, "head");
  if (named.lhip == named.rhip) throw InvariantError("skeleton: lhip and rhip must differ");
}

std::vector<Bone> bones_from_parents(const std::vector<int>& parent) {
  std::vector<Bone> bones;
  bones.reserve(parent.size() > 0 ? parent.size() - 1 : 0);
  for (int child = 0; child < static_cast<int>(parent.size()); ++child) {
    if (parent[child] != -1) bones.push_back({parent[child], child});
  }
  return bones;
}

SkeletonTopology default_topology() {
  SkeletonTopology topo;
  topo.joint_count = 8;
  topo.joint_names = {"root", "lhip", "rhip", "lfoot", "rfoot", "lhand", "rhand", "head"};
  topo.parent = {-1, 0, 0, 1, 2, 0, 0, 0};
  topo.bones = bones_from_parents(topo.parent);
  topo.named = {0, 1, 2, 3, 4, 5, 6, 7};
  topo.capsule_radii.assign(topo.bones.size(), 0.05);
  for (std::size_t n = 0; n < topo.bones.size(); ++n) {
    if (topo.bones[n].child == topo.named.head) topo.capsule_radii[n] = 0.10;  // torso
  }
  topo.validate();
  return topo;
}

std::vector<Eigen::Vector3d> default_rest_pose() {
  return {
      {0.0, 0.90, 0.0},    // root
      {-0.10, 0.85, 0.0},  // lhip
      {0.10, 0.85, 0.0},   // rhip
      {-0.10, 0.00, 0.0},  // lfoot
      {0.10, 0.00, 0.0},   // rfoot
      {-0.35, 0.95, 0.0},  // lhand
      {0.35, 0.95, 0.0},   // rhand
      {0.0, 1.55, 0.0},    // head
  };
}

void MotionSequence::validate() const {
  if (frames < 1) throw InvariantError("motion: frame count must be >= 1");
  if (joints < 1) throw InvariantError("motion: joint count must be >= 1");
  if (positions.size() != static_cast<std::size_t>(frames) * joints)
    throw InvariantError("motion: position storage size mismatch");
  for (const auto& p : positions)
    if (!p.allFinite()) throw InvariantError("motion: non-finite joint position");
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

RigidTransform RigidTransform::about_y(double angle_rad, const Eigen::Vector3d& t) {
  RigidTransform xf;
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  xf.rotation << c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c;
  xf.translation = t;
  return xf;
}

void EntitySnapshot::validate() const {
  if (points.empty()) throw InvariantError("entity: point set must be nonempty");
  for (const auto& p : points)
    if (!p.allFinite()) throw InvariantError("entity: non-finite point");
}

std::vector<Eigen::Vector3d> apply_transform(std::span<const Eigen::Vector3d> points,
                                             const RigidTransform& xf) {
  if (!xf.is_valid()) throw InvariantError("apply_transform: rotation not orthonormal");
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (!p.allFinite()) throw InvariantError("apply_transform: non-finite point");
    out.emplace_back(xf.rotation * p + xf.translation);
  }
  return out;
}

namespace {

// Any unit vector perpendicular to `axis`.
Eigen::Vector3d perpendicular_unit(const Eigen::Vector3d& axis) {
  const Eigen::Vector3d ref =
      std::abs(axis.y()) < 0.9 ? Eigen::Vector3d::UnitY() : Eigen::Vector3d::UnitX();
  return axis.cross(ref).normalized();
}

}  // namespace

EntitySnapshot sample_body_surface(std::span<const Eigen::Vector3d> frame,
                                   const SkeletonTopology& topo, int samples_per_bone,
                                   std::uint64_t seed) {
  if (static_cast<int>(frame.size()) != topo.joint_count)
    throw InvariantError("sample_body_surface: frame size does not match topology");
  if (samples_per_bone < 1) throw InvariantError("sample_body_surface: samples_per_bone must be >= 1");

  constexpr double golden_angle = 2.399963229728653;  // pi * (3 - sqrt 5)
  EntitySnapshot snap;
  snap.entity_class = EntityClass::Human;
  snap.points.reserve(topo.bones.size() * static_cast<std::size_t>(samples_per_bone));

  for (std::size_t n = 0; n < topo.bones.size(); ++n) {
    const Eigen::Vector3d a = frame[topo.bones[n].parent];
    const Eigen::Vector3d b = frame[topo.bones[n].child];
    const double radius = topo.capsule_radii[n];
    const Eigen::Vector3d seg = b - a;
    const double len = seg.norm();

    Rng rng(derive_seed(seed, n));
    const double phase = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);

    if (len < 1e-9) {
      // sphere fallback: evenly spiralled directions
      for (int s = 0; s < samples_per_bone; ++s) {
        const double z = samples_per_bone == 1 ? 0.0 : -1.0 + 2.0 * (s + 0.5) / samples_per_bone;
        const double r_xy = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double theta = golden_angle * s + phase;
        const Eigen::Vector3d dir(r_xy * std::cos(theta), r_xy * std::sin(theta), z);
        snap.points.emplace_back(a + radius * dir);
      }
      continue;
    }

    const Eigen::Vector3d axis = seg / len;
    const Eigen::Vector3d e1 = perpendicular_unit(axis);
    const Eigen::Vector3d e2 = axis.cross(e1);

    // split between the cylinder side and the two hemispherical end caps in
    // proportion to surface area (2*pi*r*len vs 4*pi*r^2)
    const int cap_total = static_cast<int>(
        std::llround(samples_per_bone * 2.0 * radius / (len + 2.0 * radius)));
    const int side = samples_per_bone - cap_total;
    const int cap_a = cap_total / 2;
    const int cap_b = cap_total - cap_a;

    for (int s = 0; s < side; ++s) {
      const double t = (s + 0.5) / side;
      const double theta = golden_angle * s + phase;
      const Eigen::Vector3d center = a + t * seg;
      snap.points.emplace_back(center + radius * (std::cos(theta) * e1 + std::sin(theta) * e2));
    }
    for (int end = 0; end < 2; ++end) {
      const int count = end == 0 ? cap_a : cap_b;
      const Eigen::Vector3d tip = end == 0 ? a : b;
      const Eigen::Vector3d out = end == 0 ? Eigen::Vector3d(-axis) : axis;
      for (int s = 0; s < count; ++s) {
        const double height = (s + 0.5) / count;  // along the outward direction
        const double r_xy = std::sqrt(std::max(0.0, 1.0 - height * height));
        const double theta = golden_angle * s + phase + (end == 0 ? 1.0 : 2.0);
        const Eigen::Vector3d dir =
            height * out + r_xy * (std::cos(theta) * e1 + std::sin(theta) * e2);
        snap.points.emplace_back(tip + radius * dir);
      }
    }
  }
  return snap;
}

std::vector<Eigen::Vector3d> bone_vectors(std::span<const Eigen::Vector3d> frame,
                                          const SkeletonTopology& topo) {
  if (static_cast<int>(frame.size()) != topo.joint_count)
    throw InvariantError("bone_vectors: frame size does not match topology");
  std::vector<Eigen::Vector3d> out;
  out.reserve(topo.bones.size());
  for (const Bone& bone : topo.bones) out.emplace_back(frame[bone.parent] - frame[bone.child]);
  return out;
}

OrientationResult initial_orientation(std::span<const Eigen::Vector3d> frame0,
                                      const SkeletonTopology& topo) {
  if (static_cast<int>(frame0.size()) != topo.joint_count)
    throw InvariantError("initial_orientation: frame size does not match topology");
  const Eigen::Vector3d s_lhip = frame0[topo.named.root] - frame0[topo.named.lhip];
  const Eigen::Vector3d s_rhip = frame0[topo.named.root] - frame0[topo.named.rhip];
  const double nl = s_lhip.norm();
  const double nr = s_rhip.norm();
  if (nl < 1e-9 || nr < 1e-9)
    throw InvariantError("initial_orientation: degenerate hip bone vector");

  OrientationResult result;
  result.direction = (s_lhip / nl).cross(s_rhip / nr);
  if (result.direction.norm() < 1e-9) {
    result.direction.setZero();
    result.degenerate = true;
  }
  return result;
}

std::vector<Eigen::Vector3d> pose_at(const SkeletonTopology& topo,
                                     const Eigen::Vector3d& root_position, double heading_rad) {
  const std::vector<Eigen::Vector3d> rest = default_rest_pose();
  if (static_cast<int>(rest.size()) != topo.joint_count)
    throw InvariantError("pose_at: topology does not match the default rest pose");
  const Eigen::Vector3d rest_root = rest[topo.named.root];
  const RigidTransform yaw = RigidTransform::about_y(heading_rad);
  std::vector<Eigen::Vector3d> frame(rest.size());
  for (std::size_t j = 0; j < rest.size(); ++j) {
    const Eigen::Vector3d offset = rest[j] - rest_root;
    frame[j] = root_position + yaw.rotation * offset;
  }
  return frame;
}

}  // namespace voxmotion
