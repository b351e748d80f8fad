#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "testutil.hpp"
#include "voxmotion/error.hpp"
#include "voxmotion/losses.hpp"
#include "voxmotion/rng.hpp"

using namespace voxmotion;
using voxmotion::testutil::FdAccum;

namespace {

VolumeSpec tiny_spec() {
  VolumeSpec spec;
  spec.dims = {4, 4, 4};
  spec.pitch = {0.2, 0.2, 0.2};
  spec.origin = {0.0, -0.4, -0.4};
  return spec;
}

MotionSequence random_motion(int t, int k, Rng& rng, double scale = 1.0) {
  MotionSequence m(t, k);
  for (auto& p : m.positions)
    p = {scale * standard_normal(rng), scale * standard_normal(rng),
         scale * standard_normal(rng)};
  return m;
}

/// Three joints: root and the two hips, enough for every loss term.
SkeletonTopology three_joint_topology() {
  SkeletonTopology topo;
  topo.joint_count = 3;
  topo.joint_names = {"root", "lhip", "rhip"};
  topo.parent = {-1, 0, 0};
  topo.bones = bones_from_parents(topo.parent);
  topo.named = {0, 1, 2, 1, 2, 1, 2, 0};
  topo.capsule_radii.assign(topo.bones.size(), 0.05);
  topo.validate();
  return topo;
}

}  // namespace

TEST_CASE("reconstruction loss is the mean squared error with its gradient") {
  const VolumeSpec spec = tiny_spec();
  HeatmapField target(spec, 2, 2, FieldMode::Raw);
  Rng rng(3);
  for (double& v : target.values) v = standard_normal(rng);

  SUBCASE("identical fields score zero") {
    CHECK(loss_rec(target, target) == 0.0);
  }
  SUBCASE("constant offset c scores c squared") {
    HeatmapField pred = target;
    for (double& v : pred.values) v += 0.3;
    CHECK(loss_rec(pred, target) == doctest::Approx(0.09).epsilon(1e-12));
  }
  SUBCASE("gradient matches finite differences") {
    HeatmapField pred = target;
    for (double& v : pred.values) v += 0.1 * standard_normal(rng);
    std::vector<double> grad(pred.values.size(), 0.0);
    loss_rec(pred, target, grad);

    FdAccum acc;
    const double step = 1e-4;
    for (std::size_t v = 0; v < pred.values.size(); v += 3) {
      HeatmapField plus = pred, minus = pred;
      plus.values[v] += step;
      minus.values[v] -= step;
      acc.add((loss_rec(plus, target) - loss_rec(minus, target)) / (2 * step), grad[v]);
    }
    CHECK(acc.rel() < 1e-6);
  }
  SUBCASE("shape mismatch throws") {
    HeatmapField other(spec, 2, 3, FieldMode::Raw);
    CHECK_THROWS_AS(loss_rec(other, target), InvariantError);
  }
}

TEST_CASE("position loss averages squared joint distances") {
  Rng rng(4);
  const MotionSequence gt = random_motion(3, 4, rng);

  CHECK(loss_pos(gt, gt) == 0.0);

  MotionSequence pred = gt;
  for (auto& p : pred.positions) p += Eigen::Vector3d(0.03, 0.0, 0.04);
  CHECK(loss_pos(pred, gt) == doctest::Approx(0.0025).epsilon(1e-12));

  std::vector<Eigen::Vector3d> grad;
  pred = random_motion(3, 4, rng);
  const double base = loss_pos(pred, gt, &grad);
  CHECK(base > 0.0);

  FdAccum acc;
  const double step = 1e-5;
  for (std::size_t i = 0; i < pred.positions.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      MotionSequence plus = pred, minus = pred;
      plus.positions[i][a] += step;
      minus.positions[i][a] -= step;
      acc.add((loss_pos(plus, gt) - loss_pos(minus, gt)) / (2 * step), grad[i][a]);
    }
  CHECK(acc.rel() < 1e-6);
}

TEST_CASE("velocity loss compares forward differences") {
  Rng rng(5);

  SUBCASE("constant sequences and constant offsets score zero") {
    MotionSequence still(4, 2);
    for (auto& p : still.positions) p = {1.0, 2.0, 3.0};
    CHECK(loss_vel(still, still) == 0.0);

    const MotionSequence gt = random_motion(4, 2, rng);
    MotionSequence shifted = gt;
    for (auto& p : shifted.positions) p += Eigen::Vector3d(0.5, -0.25, 1.0);
    CHECK(loss_vel(shifted, gt) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("hand-computed drift") {
    MotionSequence gt(2, 1), pred(2, 1);
    pred.at(1, 0) = {0.01, 0.0, 0.0};  // drifts 1 cm on x; gt static
    CHECK(loss_vel(pred, gt) == doctest::Approx(1e-4).epsilon(1e-12));
  }
  SUBCASE("single frame scores zero") {
    const MotionSequence gt = random_motion(1, 3, rng);
    const MotionSequence pred = random_motion(1, 3, rng);
    std::vector<Eigen::Vector3d> grad;
    CHECK(loss_vel(pred, gt, &grad) == 0.0);
    for (const auto& g : grad) CHECK(g.norm() == 0.0);
  }
  SUBCASE("gradient matches finite differences") {
    const MotionSequence gt = random_motion(5, 3, rng);
    const MotionSequence pred = random_motion(5, 3, rng);
    std::vector<Eigen::Vector3d> grad;
    loss_vel(pred, gt, &grad);

    FdAccum acc;
    const double step = 1e-5;
    for (std::size_t i = 0; i < pred.positions.size(); ++i)
      for (int a = 0; a < 3; ++a) {
        MotionSequence plus = pred, minus = pred;
        plus.positions[i][a] += step;
        minus.positions[i][a] -= step;
        acc.add((loss_vel(plus, gt) - loss_vel(minus, gt)) / (2 * step), grad[i][a]);
      }
    CHECK(acc.rel() < 1e-6);
  }
}

TEST_CASE("skeleton loss penalizes bone-vector mismatch only") {
  const SkeletonTopology topo = default_topology();
  Rng rng(6);
  MotionSequence gt(2, topo.joint_count);
  const auto rest = default_rest_pose();
  for (int t = 0; t < 2; ++t)
    for (int k = 0; k < topo.joint_count; ++k) gt.at(t, k) = rest[k];

  CHECK(loss_sk(gt, gt, topo) == 0.0);

  SUBCASE("global translation of the prediction is free") {
    MotionSequence pred = gt;
    for (auto& p : pred.positions) p += Eigen::Vector3d(3.0, -1.0, 2.0);
    CHECK(loss_sk(pred, gt, topo) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("displacing one joint charges every bone touching it") {
    MotionSequence pred = gt;
    pred.at(0, topo.named.lhip) += Eigen::Vector3d(0.1, 0.0, 0.0);
    // brute force over bones
    double expect = 0.0;
    for (const Bone& bone : topo.bones) {
      const Eigen::Vector3d sp = pred.at(0, bone.parent) - pred.at(0, bone.child);
      const Eigen::Vector3d sg = gt.at(0, bone.parent) - gt.at(0, bone.child);
      expect += (sp - sg).squaredNorm();
    }
    for (const Bone& bone : topo.bones) {
      const Eigen::Vector3d sp = pred.at(1, bone.parent) - pred.at(1, bone.child);
      const Eigen::Vector3d sg = gt.at(1, bone.parent) - gt.at(1, bone.child);
      expect += (sp - sg).squaredNorm();
    }
    expect /= 2.0 * topo.bones.size();
    CHECK(loss_sk(pred, gt, topo) == doctest::Approx(expect).epsilon(1e-12));
    // lhip touches bones root->lhip and lhip->lfoot, so two terms of 0.01 in frame 0
    CHECK(loss_sk(pred, gt, topo) == doctest::Approx(0.01 * 2 / 14.0).epsilon(1e-12));
  }
  SUBCASE("gradient matches finite differences") {
    const MotionSequence pred = random_motion(2, topo.joint_count, rng);
    std::vector<Eigen::Vector3d> grad;
    loss_sk(pred, gt, topo, &grad);

    FdAccum acc;
    const double step = 1e-5;
    for (std::size_t i = 0; i < pred.positions.size(); ++i)
      for (int a = 0; a < 3; ++a) {
        MotionSequence plus = pred, minus = pred;
        plus.positions[i][a] += step;
        minus.positions[i][a] -= step;
        acc.add((loss_sk(plus, gt, topo) - loss_sk(minus, gt, topo)) / (2 * step), grad[i][a]);
      }
    CHECK(acc.rel() < 1e-6);
  }
}

TEST_CASE("orientation loss hits the three analytic values exactly") {
  const SkeletonTopology topo = three_joint_topology();
  // gt heading: u=(1,0,0), v=(0,0,1) -> d = (0,-1,0)
  const std::vector<Eigen::Vector3d> gt = {{0, 0, 0}, {-1, 0, 0}, {0, 0, -1}};

  SUBCASE("same heading scores 0") {
    CHECK(loss_ori(gt, gt, topo) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("opposite heading scores 2") {
    const std::vector<Eigen::Vector3d> flipped = {{0, 0, 0}, {0, 0, -1}, {-1, 0, 0}};
    CHECK(loss_ori(flipped, gt, topo) == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("orthogonal heading scores 1") {
    // u=(1,0,0), v=(0,1,0) -> d = (0,0,1), orthogonal to (0,-1,0)
    const std::vector<Eigen::Vector3d> ortho = {{0, 0, 0}, {-1, 0, 0}, {0, -1, 0}};
    CHECK(loss_ori(ortho, gt, topo) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("degenerate hips throw") {
    const std::vector<Eigen::Vector3d> collinear = {{0, 0, 0}, {-1, 0, 0}, {-2, 0, 0}};
    CHECK_THROWS_AS(loss_ori(collinear, gt, topo), InvariantError);
    CHECK_THROWS_AS(loss_ori(gt, collinear, topo), InvariantError);
  }
  SUBCASE("value stays within [0, 2] and the gradient matches finite differences") {
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<Eigen::Vector3d> pred(3);
      for (auto& p : pred) p = {standard_normal(rng), standard_normal(rng), standard_normal(rng)};

      std::vector<Eigen::Vector3d> grad;
      const double value = loss_ori(pred, gt, topo, &grad);
      CHECK(value >= 0.0);
      CHECK(value <= 2.0);

      FdAccum acc;
      const double step = 1e-6;
      for (int k = 0; k < 3; ++k)
        for (int a = 0; a < 3; ++a) {
          auto plus = pred, minus = pred;
          plus[k][a] += step;
          minus[k][a] -= step;
          acc.add((loss_ori(plus, gt, topo) - loss_ori(minus, gt, topo)) / (2 * step),
                  grad[k][a]);
        }
      CHECK(acc.rel() < 1e-4);
    }
  }
}

TEST_CASE("total loss is the exact weighted sum and zero weights leave rec") {
  const SkeletonTopology topo = three_joint_topology();
  const VolumeSpec spec = tiny_spec();
  Rng rng(9);

  MotionSequence gt(2, 3);
  gt.at(0, 0) = {0.0, 0.4, 0.0};
  gt.at(0, 1) = {-0.1, 0.35, 0.0};
  gt.at(0, 2) = {0.1, 0.35, 0.0};
  for (int k = 0; k < 3; ++k) gt.at(1, k) = gt.at(0, k) + Eigen::Vector3d(0.05, 0.0, 0.05);

  HeatmapField target = encode_motion(gt, spec, 1.0);
  HeatmapField pred(spec, 2, 3, FieldMode::Raw);
  for (double& v : pred.values) v = uniform_real(rng, 0.05, 1.0);

  LossWeights w;
  const LossReport report = total_loss(pred, target, gt, topo, w);
  CHECK(report.total ==
        doctest::Approx(report.rec + 0.1 * report.pos + 0.1 * report.vel + 0.1 * report.sk +
                        1.0 * report.ori)
            .epsilon(1e-9));
  CHECK(report.field_grad.empty());

  const LossWeights zero{0.0, 0.0, 0.0, 0.0};
  const LossReport bare = total_loss(pred, target, gt, topo, zero);
  CHECK(bare.total == bare.rec);
}

TEST_CASE("a perfectly encoded prediction scores near zero everywhere") {
  const SkeletonTopology topo = three_joint_topology();
  VolumeSpec spec;
  spec.dims = {24, 24, 24};
  spec.pitch = {0.05, 0.05, 0.05};
  spec.origin = {0.0, -0.6, -0.6};
  const double sigma = 2.0;

  // joints at least 4 sigma inside every face
  MotionSequence gt(2, 3);
  gt.at(0, 0) = {0.0, 0.62, 0.0};
  gt.at(0, 1) = {-0.08, 0.55, 0.03};
  gt.at(0, 2) = {0.09, 0.56, -0.02};
  for (int k = 0; k < 3; ++k) gt.at(1, k) = gt.at(0, k) + Eigen::Vector3d(0.02, -0.01, 0.02);

  const HeatmapField target = encode_motion(gt, spec, sigma);
  const LossReport report = total_loss(target, target, gt, topo, {});
  CHECK(report.rec == 0.0);
  CHECK(report.pos < 1e-6);
  CHECK(report.vel < 1e-6);
  CHECK(report.sk < 1e-6);
  CHECK(report.ori < 1e-6);
  CHECK(report.total < 1e-5);
}

TEST_CASE("the full chain gradient matches finite differences on a tiny field") {
  const SkeletonTopology topo = three_joint_topology();
  const VolumeSpec spec = tiny_spec();
  Rng rng(10);

  MotionSequence gt(2, 3);
  gt.at(0, 0) = {0.0, 0.4, 0.0};
  gt.at(0, 1) = {-0.1, 0.3, 0.1};
  gt.at(0, 2) = {0.1, 0.3, -0.1};
  for (int k = 0; k < 3; ++k) gt.at(1, k) = gt.at(0, k) + Eigen::Vector3d(0.03, 0.02, 0.0);

  HeatmapField target = encode_motion(gt, spec, 1.0);
  scale_values(target, amplitude_scale(1.0));

  HeatmapField pred(spec, 2, 3, FieldMode::Raw);
  for (double& v : pred.values) v = uniform_real(rng, 0.05, 1.0);

  const LossWeights w;
  const LossReport report = total_loss(pred, target, gt, topo, w, true);
  REQUIRE(report.field_grad.size() == pred.values.size());

  FdAccum acc;
  const double step = 1e-4;
  for (std::size_t v = 0; v < pred.values.size(); v += 5) {
    HeatmapField plus = pred, minus = pred;
    plus.values[v] += step;
    minus.values[v] -= step;
    const double lp = total_loss(plus, target, gt, topo, w).total;
    const double lm = total_loss(minus, target, gt, topo, w).total;
    acc.add((lp - lm) / (2 * step), report.field_grad[v]);
  }
  CHECK(acc.rel() < 1e-4);
}
