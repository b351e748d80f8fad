#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "voxmotion/error.hpp"
#include "voxmotion/geometry.hpp"
#include "voxmotion/metrics.hpp"
#include "voxmotion/rng.hpp"
#include "voxmotion/synthdata.hpp"

using namespace voxmotion;

namespace {

VolumeSpec desk_spec() {
  VolumeSpec spec;
  spec.dims = {16, 16, 16};
  spec.pitch = {0.15, 0.30, 0.30};
  spec.origin = {0.0, -2.4, -2.4};
  return spec;
}

MotionSequence random_motion(Rng& rng, int frames, int joints) {
  MotionSequence m(frames, joints);
  for (auto& p : m.positions) {
    p = {uniform_real(rng, -2.0, 2.0), uniform_real(rng, 0.0, 2.0), uniform_real(rng, -2.0, 2.0)};
  }
  return m;
}

Eigen::MatrixXd random_set(Rng& rng, int rows, int cols, double mean = 0.0) {
  Eigen::MatrixXd set(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) set(r, c) = mean + standard_normal(rng);
  }
  return set;
}

Eigen::MatrixXd random_orthogonal(Rng& rng, int n) {
  Eigen::MatrixXd m(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) m(r, c) = standard_normal(rng);
  }
  return Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
}

}  // namespace

TEST_CASE("mpjpe matches hand values and a brute-force oracle") {
  const SkeletonTopology topo = default_topology();
  Rng rng(100);
  const MotionSequence gt = random_motion(rng, 6, topo.joint_count);
  CHECK(mpjpe(gt, gt) == 0.0);

  MotionSequence shifted = gt;
  const Eigen::Vector3d off = Eigen::Vector3d(3.0, 4.0, 0.0).normalized() * 0.05;
  for (auto& p : shifted.positions) p += off;
  CHECK(mpjpe(shifted, gt) == doctest::Approx(5.0).epsilon(1e-12));

  for (int trial = 0; trial < 100; ++trial) {
    const MotionSequence a = random_motion(rng, 5, topo.joint_count);
    const MotionSequence b = random_motion(rng, 5, topo.joint_count);
    double total = 0.0;
    for (int t = 0; t < a.frames; ++t) {
      for (int k = 0; k < a.joints; ++k) total += (a.at(t, k) - b.at(t, k)).norm();
    }
    const double oracle = 100.0 * total / (a.frames * a.joints);
    CHECK(mpjpe(a, b) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("root translation error matches hand values and a brute-force oracle") {
  const SkeletonTopology topo = default_topology();
  Rng rng(101);
  const MotionSequence gt = random_motion(rng, 6, topo.joint_count);
  CHECK(t_root(gt, gt, topo) == 0.0);

  MotionSequence shifted = gt;
  for (int t = 0; t < gt.frames; ++t) shifted.at(t, topo.named.root).x() += 0.1;
  CHECK(t_root(shifted, gt, topo) == doctest::Approx(10.0).epsilon(1e-12));

  for (int trial = 0; trial < 100; ++trial) {
    const MotionSequence a = random_motion(rng, 7, topo.joint_count);
    const MotionSequence b = random_motion(rng, 7, topo.joint_count);
    double total = 0.0;
    for (int t = 0; t < a.frames; ++t) {
      total += (a.at(t, topo.named.root) - b.at(t, topo.named.root)).norm();
    }
    CHECK(t_root(a, b, topo) == doctest::Approx(100.0 * total / a.frames).epsilon(1e-12));
  }
}

TEST_CASE("metrics refuse mismatched motion shapes") {
  const SkeletonTopology topo = default_topology();
  Rng rng(102);
  const MotionSequence a = random_motion(rng, 6, topo.joint_count);
  const MotionSequence b = random_motion(rng, 5, topo.joint_count);
  CHECK_THROWS_AS(mpjpe(a, b), InvariantError);
  CHECK_THROWS_AS(t_root(a, b, topo), InvariantError);
}

TEST_CASE("foot sliding scores a hand-built slide and ignores lifted feet") {
  const SkeletonTopology topo = default_topology();
  const int frames = 11;
  MotionSequence m(frames, topo.joint_count);
  for (auto& p : m.positions) p = {0.0, 1.0, 0.0};
  for (int t = 0; t < frames; ++t) {
    m.at(t, topo.named.lfoot) = {0.02 * t, 0.0, 0.0};
    m.at(t, topo.named.rfoot) = {0.0, 1.0, 0.0};
  }
  CHECK(foot_sliding(m, topo) == doctest::Approx(2.0).epsilon(1e-12));

  for (int t = 0; t < frames; ++t) m.at(t, topo.named.lfoot).y() = 0.5;
  CHECK(foot_sliding(m, topo) == 0.0);
}

TEST_CASE("foot sliding is exactly zero on walk ground truth") {
  const VolumeSpec spec = desk_spec();
  const SkeletonTopology topo = default_topology();
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const ToySample s = gen_goalwalk(seed, spec, 16, topo);
    CHECK(foot_sliding(s.gt_motion, topo) == 0.0);
    const ToySample c = gen_compound(seed, spec, 16, topo);
    CHECK(foot_sliding(c.gt_motion, topo) == 0.0);
  }
}

TEST_CASE("foot sliding matches a brute-force oracle on random motions") {
  const SkeletonTopology topo = default_topology();
  Rng rng(103);
  for (int trial = 0; trial < 100; ++trial) {
    MotionSequence m = random_motion(rng, 9, topo.joint_count);
    // push feet near the contact band so both branches fire
    for (int t = 0; t < m.frames; ++t) {
      m.at(t, topo.named.lfoot).y() = uniform_real(rng, 0.0, 0.1);
      m.at(t, topo.named.rfoot).y() = uniform_real(rng, 0.0, 0.1);
    }
    double total = 0.0;
    int count = 0;
    for (const int foot : {topo.named.lfoot, topo.named.rfoot}) {
      for (int t = 0; t < m.frames - 1; ++t) {
        if (m.at(t, foot).y() < 0.05) {
          const Eigen::Vector3d d = m.at(t + 1, foot) - m.at(t, foot);
          total += std::sqrt(d.x() * d.x() + d.z() * d.z());
          ++count;
        }
      }
    }
    const double oracle = count ? 100.0 * total / count : 0.0;
    CHECK(foot_sliding(m, topo) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("contact scores are perfect on reach ground truth") {
  const VolumeSpec spec = desk_spec();
  const SkeletonTopology topo = default_topology();
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const ToySample s = gen_reach(seed, spec, 16, topo);
    const ContactScores scores =
        contact_metrics(s.gt_motion, topo, s.entities[0][0].points, s.contact);
    CHECK(scores.precision == 1.0);
    CHECK(scores.recall == 1.0);
    CHECK(scores.accuracy == 1.0);
    CHECK(scores.f1 == 1.0);
  }
}

TEST_CASE("contact scores split a crafted confusion matrix evenly") {
  const SkeletonTopology topo = default_topology();
  MotionSequence m(2, topo.joint_count);
  for (auto& p : m.positions) p = {5.0, 5.0, 5.0};
  const std::vector<Eigen::Vector3d> object = {{0.0, 0.0, 0.0}};

  m.at(0, topo.named.lhand) = {0.0, 0.0, 0.05};  // predicted hit
  m.at(0, topo.named.rhand) = {0.0, 0.0, 0.50};  // predicted miss
  m.at(1, topo.named.lhand) = {0.05, 0.0, 0.0};  // predicted hit
  m.at(1, topo.named.rhand) = {0.0, 0.5, 0.0};   // predicted miss

  ContactLabels labels;
  labels.lhand = {1, 0};  // TP then FP
  labels.rhand = {1, 0};  // FN then TN

  const ContactScores s = contact_metrics(m, topo, object, labels);
  CHECK(s.precision == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.recall == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.accuracy == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.f1 == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("contact conventions cover empty and one-sided cases") {
  const SkeletonTopology topo = default_topology();
  MotionSequence m(3, topo.joint_count);
  for (auto& p : m.positions) p = {5.0, 5.0, 5.0};
  const std::vector<Eigen::Vector3d> object = {{0.0, 0.0, 0.0}};

  ContactLabels none;
  none.lhand = {0, 0, 0};
  none.rhand = {0, 0, 0};
  const ContactScores empty = contact_metrics(m, topo, object, none);
  CHECK(empty.precision == 1.0);
  CHECK(empty.recall == 1.0);
  CHECK(empty.accuracy == 1.0);
  CHECK(empty.f1 == 1.0);

  ContactLabels positives;
  positives.lhand = {1, 1, 1};
  positives.rhand = {0, 0, 0};
  const ContactScores missed = contact_metrics(m, topo, object, positives);
  CHECK(missed.recall == 0.0);
  CHECK(missed.precision == 0.0);
  CHECK(missed.f1 == 0.0);
  CHECK(missed.accuracy == doctest::Approx(0.5).epsilon(1e-12));

  ContactLabels short_labels;
  short_labels.lhand = {1};
  short_labels.rhand = {1};
  CHECK_THROWS_AS(contact_metrics(m, topo, object, short_labels), InvariantError);
}

TEST_CASE("contact scores match a brute-force oracle on random instances") {
  const SkeletonTopology topo = default_topology();
  Rng rng(104);
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = 6;
    MotionSequence m = random_motion(rng, frames, topo.joint_count);
    std::vector<Eigen::Vector3d> object;
    for (int i = 0; i < 5; ++i) {
      object.push_back({uniform_real(rng, -2.0, 2.0), uniform_real(rng, 0.0, 2.0),
                        uniform_real(rng, -2.0, 2.0)});
    }
    // hands sometimes land near an object point so both outcomes occur
    for (int t = 0; t < frames; ++t) {
      if (uniform_int(rng, 0, 1)) {
        m.at(t, topo.named.lhand) =
            object[static_cast<std::size_t>(uniform_int(rng, 0, 4))] +
            Eigen::Vector3d(uniform_real(rng, -0.15, 0.15), 0.0, 0.0);
      }
    }
    ContactLabels labels;
    for (int t = 0; t < frames; ++t) {
      labels.lhand.push_back(static_cast<std::uint8_t>(uniform_int(rng, 0, 1)));
      labels.rhand.push_back(static_cast<std::uint8_t>(uniform_int(rng, 0, 1)));
    }

    int tp = 0, fp = 0, fn = 0, tn = 0;
    for (int t = 0; t < frames; ++t) {
      for (const int hand : {topo.named.lhand, topo.named.rhand}) {
        double best = 1e30;
        for (const auto& q : object) best = std::min(best, (m.at(t, hand) - q).norm());
        const bool hit = best < kContactThreshold;
        const bool truth = (hand == topo.named.lhand ? labels.lhand : labels.rhand)
                               [static_cast<std::size_t>(t)] != 0;
        tp += hit && truth;
        fp += hit && !truth;
        fn += !hit && truth;
        tn += !hit && !truth;
      }
    }
    const double prec = tp + fp ? double(tp) / (tp + fp) : (tp + fn == 0 ? 1.0 : 0.0);
    const double rec = tp + fn ? double(tp) / (tp + fn) : (tp + fp == 0 ? 1.0 : 0.0);
    const double acc = double(tp + tn) / (2 * frames);
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;

    const ContactScores s = contact_metrics(m, topo, object, labels);
    CHECK(s.precision == doctest::Approx(prec).epsilon(1e-12));
    CHECK(s.recall == doctest::Approx(rec).epsilon(1e-12));
    CHECK(s.accuracy == doctest::Approx(acc).epsilon(1e-12));
    CHECK(s.f1 == doctest::Approx(f1).epsilon(1e-12));
  }
}

TEST_CASE("goal distance measures the floor plane only") {
  const SkeletonTopology topo = default_topology();
  MotionSequence m(4, topo.joint_count);
  for (auto& p : m.positions) p = {1.0, 0.9, -1.0};

  CHECK(goal_distance(m, {1.0, 0.0, -1.0}, topo) == 0.0);
  CHECK(goal_distance(m, {1.0, 5.0, -1.0}, topo) == 0.0);
  CHECK(goal_distance(m, {1.2, 0.0, -1.0}, topo) == doctest::Approx(20.0).epsilon(1e-12));

  Rng rng(105);
  for (int trial = 0; trial < 100; ++trial) {
    const MotionSequence r = random_motion(rng, 5, topo.joint_count);
    const Eigen::Vector3d goal(uniform_real(rng, -2.0, 2.0), uniform_real(rng, 0.0, 2.0),
                               uniform_real(rng, -2.0, 2.0));
    const Eigen::Vector3d root = r.at(4, topo.named.root);
    const double oracle =
        100.0 * std::sqrt(std::pow(root.x() - goal.x(), 2) + std::pow(root.z() - goal.z(), 2));
    CHECK(goal_distance(r, goal, topo) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("diversity is zero for identical or translated sets and stable in the seed") {
  const SkeletonTopology topo = default_topology();
  Rng rng(106);
  const MotionSequence base = random_motion(rng, 6, topo.joint_count);

  std::vector<MotionSequence> same(4, base);
  CHECK(diversity(same, topo, 1) == 0.0);

  MotionSequence moved = base;
  for (auto& p : moved.positions) p += Eigen::Vector3d(0.7, 0.0, -0.3);
  const std::vector<MotionSequence> translated = {base, moved};
  CHECK(diversity(translated, topo, 1) == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<MotionSequence> set;
  for (int i = 0; i < 9; ++i) set.push_back(random_motion(rng, 6, topo.joint_count));
  const double a = diversity(set, topo, 7);
  const double b = diversity(set, topo, 7);
  CHECK(a == b);
  CHECK(a > 0.0);

  const std::vector<MotionSequence> single = {base};
  CHECK_THROWS_AS(diversity(single, topo, 0), InvariantError);
}

TEST_CASE("diversity of two samples is their feature distance") {
  const SkeletonTopology topo = default_topology();
  Rng rng(107);
  const MotionSequence a = random_motion(rng, 5, topo.joint_count);
  const MotionSequence b = random_motion(rng, 5, topo.joint_count);

  double sum2 = 0.0;
  for (int t = 0; t < 5; ++t) {
    for (int k = 0; k < topo.joint_count; ++k) {
      const Eigen::Vector3d da = a.at(t, k) - a.at(t, topo.named.root);
      const Eigen::Vector3d db = b.at(t, k) - b.at(t, topo.named.root);
      sum2 += (da - db).squaredNorm();
    }
  }
  const std::vector<MotionSequence> pair = {a, b};
  CHECK(diversity(pair, topo, 3) == doctest::Approx(std::sqrt(sum2)).epsilon(1e-12));
}

TEST_CASE("motion features give one deterministic row per sample") {
  const SkeletonTopology topo = default_topology();
  Rng rng(108);
  std::vector<MotionSequence> set;
  for (int i = 0; i < 5; ++i) set.push_back(random_motion(rng, 6, topo.joint_count));

  const Eigen::MatrixXd f1 = motion_features(set, topo, 32, 9);
  const Eigen::MatrixXd f2 = motion_features(set, topo, 32, 9);
  const Eigen::MatrixXd f3 = motion_features(set, topo, 32, 10);
  CHECK(f1.rows() == 5);
  CHECK(f1.cols() == 32);
  CHECK((f1 - f2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((f1 - f3).cwiseAbs().maxCoeff() > 0.0);
  CHECK(f1.allFinite());

  // identical motions map to identical rows
  const std::vector<MotionSequence> twice = {set[0], set[0]};
  const Eigen::MatrixXd g = motion_features(twice, topo, 16, 4);
  CHECK((g.row(0) - g.row(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jacobi eigendecomposition agrees with the library solver") {
  Rng rng(109);
  for (const int n : {1, 2, 3, 8, 16, 32}) {
    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) m(r, c) = standard_normal(rng);
    }
    const Eigen::MatrixXd sym = (m + m.transpose()) / 2.0;

    const EigenDecomposition mine = symmetric_eigen(sym);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(sym);
    REQUIRE(ref.info() == Eigen::Success);

    const double scale = std::max(1.0, sym.norm());
    CHECK((mine.values - ref.eigenvalues()).cwiseAbs().maxCoeff() < 1e-9 * scale);
    const Eigen::MatrixXd rebuilt =
        mine.vectors * mine.values.asDiagonal() * mine.vectors.transpose();
    CHECK((rebuilt - sym).cwiseAbs().maxCoeff() < 1e-9 * scale);
    const Eigen::MatrixXd gram = mine.vectors.transpose() * mine.vectors;
    CHECK((gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
  }

  Eigen::MatrixXd asym(2, 2);
  asym << 0.0, 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(symmetric_eigen(asym), InvariantError);
}

TEST_CASE("feature distance vanishes on identical sets and solves the 1-D case") {
  Rng rng(110);
  const Eigen::MatrixXd set = random_set(rng, 40, 5);
  CHECK(frechet_feature_distance(set, set) < 1e-6);

  Eigen::MatrixXd a(3, 1), b(3, 1);
  a << -1.0, 0.0, 1.0;
  b << 0.0, 1.0, 2.0;
  CHECK(frechet_feature_distance(a, b) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("feature distance is symmetric nonnegative and rotation invariant") {
  Rng rng(111);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd a = random_set(rng, 30, 4);
    const Eigen::MatrixXd b = random_set(rng, 30, 4, 0.5);

    const double ab = frechet_feature_distance(a, b);
    const double ba = frechet_feature_distance(b, a);
    CHECK(ab >= 0.0);
    CHECK(std::abs(ab - ba) < 1e-8);

    const Eigen::MatrixXd q = random_orthogonal(rng, 4);
    const double rotated = frechet_feature_distance(a * q.transpose(), b * q.transpose());
    CHECK(rotated == doctest::Approx(ab).epsilon(1e-6));
  }
}

TEST_CASE("feature distance validates its input shapes") {
  Rng rng(112);
  const Eigen::MatrixXd ok = random_set(rng, 6, 4);
  const Eigen::MatrixXd thin = random_set(rng, 4, 4);
  const Eigen::MatrixXd other_dim = random_set(rng, 6, 3);
  CHECK_THROWS_AS(frechet_feature_distance(ok, thin), InvariantError);
  CHECK_THROWS_AS(frechet_feature_distance(thin, ok), InvariantError);
  CHECK_THROWS_AS(frechet_feature_distance(ok, other_dim), InvariantError);
  const Eigen::MatrixXd wide = random_set(rng, 70, 65);
  CHECK_THROWS_AS(frechet_feature_distance(wide, wide), InvariantError);
}

TEST_CASE("metric reports validate their ranges") {
  MetricReport r;
  r.contact.precision = 1.0;
  r.contact.recall = 1.0;
  r.contact.accuracy = 1.0;
  r.contact.f1 = 1.0;
  CHECK_NOTHROW(r.validate());

  r.goal_dist_cm = 12.5;
  r.diversity = 3.0;
  r.ffd = 0.25;
  CHECK_NOTHROW(r.validate());

  r.contact.precision = 1.5;
  CHECK_THROWS_AS(r.validate(), InvariantError);
  r.contact.precision = 1.0;
  r.mpjpe_cm = -1.0;
  CHECK_THROWS_AS(r.validate(), InvariantError);
  r.mpjpe_cm = 0.0;
  r.ffd = -0.1;
  CHECK_THROWS_AS(r.validate(), InvariantError);
}

TEST_CASE("end-to-end report on generator output is self-consistent") {
  const VolumeSpec spec = desk_spec();
  const SkeletonTopology topo = default_topology();
  std::vector<MotionSequence> motions;
  MetricReport report;

  const ToySample s = gen_reach(2, spec, 16, topo);
  report.mpjpe_cm = mpjpe(s.gt_motion, s.gt_motion);
  report.troot_cm = t_root(s.gt_motion, s.gt_motion, topo);
  report.fs = foot_sliding(s.gt_motion, topo);
  report.contact = contact_metrics(s.gt_motion, topo, s.entities[0][0].points, s.contact);
  report.goal_dist_cm = goal_distance(s.gt_motion, *s.goal, topo);

  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    motions.push_back(gen_reach(seed, spec, 16, topo).gt_motion);
  }
  report.diversity = diversity(motions, topo, 0);
  CHECK_NOTHROW(report.validate());
  CHECK(report.mpjpe_cm == 0.0);
  CHECK(*report.diversity > 0.0);
}
