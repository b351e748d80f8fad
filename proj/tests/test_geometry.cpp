#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

#include "voxmotion/error.hpp"
#include "voxmotion/geometry.hpp"
#include "voxmotion/rng.hpp"

using namespace voxmotion;

namespace {

double point_to_segment(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                        const Eigen::Vector3d& b) {
  const Eigen::Vector3d d = b - a;
  const double len2 = d.squaredNorm();
  if (len2 < 1e-18) return (p - a).norm();
  const double t = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
  return (p - (a + t * d)).norm();
}

}  // namespace

TEST_CASE("default topology is a valid single-rooted tree with 7 bones") {
  const SkeletonTopology topo = default_topology();
  CHECK(topo.joint_count == 8);
  CHECK(topo.bone_count() == 7);
  CHECK(topo.parent[topo.named.root] == -1);
  CHECK(topo.joint_names[topo.named.lfoot] == "lfoot");
  CHECK_NOTHROW(topo.validate());

  const auto rest = default_rest_pose();
  REQUIRE(rest.size() == 8);
  CHECK(rest[topo.named.lfoot].y() == 0.0);
  CHECK(rest[topo.named.rfoot].y() == 0.0);
  CHECK(rest[topo.named.lhip].x() < rest[topo.named.rhip].x());
}

TEST_CASE("skeleton validation rejects malformed trees") {
  SkeletonTopology topo = default_topology();

  SUBCASE("two roots") {
    topo.parent[1] = -1;
    topo.bones = bones_from_parents(topo.parent);
    topo.capsule_radii.assign(topo.bones.size(), 0.05);
    CHECK_THROWS_AS(topo.validate(), InvariantError);
  }
  SUBCASE("cycle") {
    topo.parent[0] = 3;  // root now points into its own subtree
    CHECK_THROWS_AS(topo.validate(), InvariantError);
  }
  SUBCASE("named index out of range") {
    topo.named.head = 42;
    CHECK_THROWS_AS(topo.validate(), InvariantError);
  }
  SUBCASE("nonpositive capsule radius") {
    topo.capsule_radii[0] = 0.0;
    CHECK_THROWS_AS(topo.validate(), InvariantError);
  }
}

TEST_CASE("apply_transform matches hand-computed rigid motions") {
  const std::vector<Eigen::Vector3d> pts = {{1.0, 0.0, 0.0}, {0.0, 2.0, -1.0}};

  SUBCASE("identity plus translation") {
    RigidTransform xf;
    xf.translation = {0.5, -1.0, 2.0};
    const auto out = apply_transform(pts, xf);
    CHECK((out[0] - Eigen::Vector3d(1.5, -1.0, 2.0)).norm() == doctest::Approx(0.0));
    CHECK((out[1] - Eigen::Vector3d(0.5, 1.0, 1.0)).norm() == doctest::Approx(0.0));
  }
  SUBCASE("90 degree yaw sends +x to -z") {
    const RigidTransform xf = RigidTransform::about_y(std::numbers::pi / 2.0);
    const auto out = apply_transform(pts, xf);
    CHECK((out[0] - Eigen::Vector3d(0.0, 0.0, -1.0)).norm() < 1e-12);
  }
  SUBCASE("invalid rotation throws") {
    RigidTransform xf;
    xf.rotation(0, 0) = 2.0;
    CHECK_THROWS_AS(apply_transform(pts, xf), InvariantError);
  }
}

TEST_CASE("rigid transforms preserve pairwise distances") {
  Rng rng(7);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 20; ++i)
    pts.emplace_back(standard_normal(rng), standard_normal(rng), standard_normal(rng));

  const Eigen::Vector3d axis = Eigen::Vector3d(0.3, 1.0, -0.2).normalized();
  RigidTransform xf;
  xf.rotation = Eigen::AngleAxisd(1.1, axis).toRotationMatrix();
  xf.translation = {4.0, -2.0, 0.5};
  REQUIRE(xf.is_valid());

  const auto out = apply_transform(pts, xf);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double before = (pts[i] - pts[j]).norm();
      const double after = (out[i] - out[j]).norm();
      CHECK(std::abs(before - after) < 1e-9);
    }
}

TEST_CASE("bone vectors are translation invariant and parent minus child") {
  const SkeletonTopology topo = default_topology();
  const auto rest = default_rest_pose();
  const auto bv = bone_vectors(rest, topo);
  REQUIRE(bv.size() == 7);

  // root -> lhip bone
  CHECK((bv[0] - (rest[0] - rest[1])).norm() == doctest::Approx(0.0));

  RigidTransform shift;
  shift.translation = {10.0, 3.0, -7.0};
  const auto moved = apply_transform(rest, shift);
  const auto bv2 = bone_vectors(moved, topo);
  for (std::size_t n = 0; n < bv.size(); ++n) CHECK((bv[n] - bv2[n]).norm() < 1e-12);
}

TEST_CASE("initial orientation reproduces the hand-computed cross product") {
  SkeletonTopology topo = default_topology();
  auto frame = default_rest_pose();
  frame[topo.named.root] = {0.0, 0.0, 0.0};
  frame[topo.named.lhip] = {-1.0, 0.0, 0.0};  // s_lhip = (1, 0, 0)
  frame[topo.named.rhip] = {0.0, 0.0, -1.0};  // s_rhip = (0, 0, 1)

  const OrientationResult res = initial_orientation(frame, topo);
  CHECK_FALSE(res.degenerate);
  CHECK((res.direction - Eigen::Vector3d(0.0, -1.0, 0.0)).norm() < 1e-12);

  SUBCASE("swapping hips flips the direction") {
    std::swap(frame[topo.named.lhip], frame[topo.named.rhip]);
    const OrientationResult flipped = initial_orientation(frame, topo);
    CHECK((flipped.direction + res.direction).norm() < 1e-12);
  }
}

TEST_CASE("initial orientation of the rest pose faces +z and rotates with the body") {
  const SkeletonTopology topo = default_topology();
  const auto rest = default_rest_pose();
  const OrientationResult res = initial_orientation(rest, topo);
  REQUIRE_FALSE(res.degenerate);
  const Eigen::Vector3d dir = res.direction.normalized();
  CHECK((dir - Eigen::Vector3d(0.0, 0.0, 1.0)).norm() < 1e-12);

  const double yaw = 0.8;
  const RigidTransform xf = RigidTransform::about_y(yaw, {1.0, 0.0, 2.0});
  const auto moved = apply_transform(rest, xf);
  const OrientationResult res2 = initial_orientation(moved, topo);
  const Eigen::Vector3d expect = xf.rotation * dir;
  CHECK((res2.direction.normalized() - expect).norm() < 1e-9);
}

TEST_CASE("initial orientation flags parallel hips and rejects zero-length hip bones") {
  const SkeletonTopology topo = default_topology();
  auto frame = default_rest_pose();

  SUBCASE("collinear hips are degenerate, not an error") {
    frame[topo.named.root] = {0.0, 1.0, 0.0};
    frame[topo.named.lhip] = {0.0, 0.5, 0.0};
    frame[topo.named.rhip] = {0.0, 0.0, 0.0};
    const OrientationResult res = initial_orientation(frame, topo);
    CHECK(res.degenerate);
    CHECK(res.direction.norm() == 0.0);
  }
  SUBCASE("hip coincident with root throws") {
    frame[topo.named.lhip] = frame[topo.named.root];
    CHECK_THROWS_AS(initial_orientation(frame, topo), InvariantError);
  }
}

TEST_CASE("body surface sampling puts every point exactly one radius off its bone") {
  const SkeletonTopology topo = default_topology();
  const auto rest = default_rest_pose();
  const int per_bone = 16;
  const EntitySnapshot snap = sample_body_surface(rest, topo, per_bone, 99);

  CHECK(snap.entity_class == EntityClass::Human);
  REQUIRE(snap.points.size() == static_cast<std::size_t>(topo.bone_count()) * per_bone);

  for (std::size_t n = 0; n < topo.bones.size(); ++n) {
    const Eigen::Vector3d& pa = rest[topo.bones[n].parent];
    const Eigen::Vector3d& pb = rest[topo.bones[n].child];
    const Eigen::Vector3d mid = 0.5 * (pa + pb);
    const double reach = 0.5 * (pb - pa).norm() + topo.capsule_radii[n];
    for (int s = 0; s < per_bone; ++s) {
      const Eigen::Vector3d& p = snap.points[n * per_bone + s];
      const double d = point_to_segment(p, pa, pb);
      CHECK(std::abs(d - topo.capsule_radii[n]) < 1e-12);
      CHECK((p - mid).norm() <= reach + 1e-12);
    }
  }

  SUBCASE("deterministic per seed") {
    const EntitySnapshot again = sample_body_surface(rest, topo, per_bone, 99);
    const EntitySnapshot other = sample_body_surface(rest, topo, per_bone, 100);
    bool identical = true;
    bool differs = false;
    for (std::size_t i = 0; i < snap.points.size(); ++i) {
      identical = identical && snap.points[i] == again.points[i];
      differs = differs || (snap.points[i] - other.points[i]).norm() > 1e-12;
    }
    CHECK(identical);
    CHECK(differs);
  }
}

TEST_CASE("surface samples of a zero-length bone fall on a sphere") {
  SkeletonTopology topo = default_topology();
  auto frame = default_rest_pose();
  frame[topo.named.lfoot] = frame[topo.named.lhip];  // collapse the lhip->lfoot bone

  const EntitySnapshot snap = sample_body_surface(frame, topo, 8, 3);
  REQUIRE(snap.points.size() == 7u * 8u);
  // bone index 2 is lhip -> lfoot in child-index order (children 1..7 skip root)
  const std::size_t base = 2 * 8;
  for (int s = 0; s < 8; ++s) {
    const double r = (snap.points[base + s] - frame[topo.named.lhip]).norm();
    CHECK(std::abs(r - topo.capsule_radii[2]) < 1e-12);
  }
}

TEST_CASE("pose_at places the rest shape at a heading and position") {
  const SkeletonTopology topo = default_topology();
  const Eigen::Vector3d root(2.0, 0.90, -1.0);

  const auto frame = pose_at(topo, root, 0.0);
  CHECK((frame[topo.named.root] - root).norm() < 1e-12);
  const OrientationResult face = initial_orientation(frame, topo);
  CHECK((face.direction.normalized() - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);

  const auto turned = pose_at(topo, root, std::numbers::pi / 2.0);
  const OrientationResult face2 = initial_orientation(turned, topo);
  // yaw of +pi/2 about +y sends +z to +x
  CHECK((face2.direction.normalized() - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
  CHECK(turned[topo.named.lfoot].y() == doctest::Approx(0.0));
}

TEST_CASE("motion sequence storage is frame major and validates shape") {
  MotionSequence motion(3, 2);
  motion.at(1, 1) = {1.0, 2.0, 3.0};
  CHECK(motion.positions[3] == Eigen::Vector3d(1.0, 2.0, 3.0));
  CHECK(motion.frame(1)[1] == Eigen::Vector3d(1.0, 2.0, 3.0));
  CHECK_NOTHROW(motion.validate());

  motion.positions.pop_back();
  CHECK_THROWS_AS(motion.validate(), InvariantError);

  MotionSequence bad(2, 1);
  bad.at(0, 0) = {0.0, std::numeric_limits<double>::quiet_NaN(), 0.0};
  CHECK_THROWS_AS(bad.validate(), InvariantError);
}

TEST_CASE("seed derivation separates streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 3) == derive_seed(5, 3));
}
