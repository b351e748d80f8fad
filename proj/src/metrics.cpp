#include "voxmotion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>

#include "voxmotion/error.hpp"
#include "voxmotion/rng.hpp"

namespace voxmotion {

namespace {

void require_same_shape(const MotionSequence& pred, const MotionSequence& gt) {
  if (pred.frames != gt.frames || pred.joints != gt.joints) {
    throw InvariantError("metric inputs must share frame and joint counts");
  }
}

void check_unit_interval(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw InvariantError(std::string(what) + " must lie in [0,1]");
  }
}

void check_distance(double v, const char* what) {
  if (!std::isfinite(v) || v < 0.0) {
    throw InvariantError(std::string(what) + " must be a finite nonnegative distance");
  }
}

double min_point_dist(const Eigen::Vector3d& p, std::span<const Eigen::Vector3d> points) {
  double best = std::numeric_limits<double>::infinity();
  for (const Eigen::Vector3d& q : points) best = std::min(best, (p - q).norm());
  return best;
}

/// Flattened per-frame joint offsets from that frame's root.
Eigen::VectorXd root_relative_flat(const MotionSequence& m, const SkeletonTopology& topo) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(m.frames) * m.joints * 3);
  Eigen::Index i = 0;
  for (int t = 0; t < m.frames; ++t) {
    const Eigen::Vector3d root = m.at(t, topo.named.root);
    for (int k = 0; k < m.joints; ++k) {
      const Eigen::Vector3d rel = m.at(t, k) - root;
      out[i++] = rel.x();
      out[i++] = rel.y();
      out[i++] = rel.z();
    }
  }
  return out;
}

void require_uniform_shape(std::span<const MotionSequence> samples) {
  for (const MotionSequence& m : samples) {
    if (m.frames != samples[0].frames || m.joints != samples[0].joints) {
      throw InvariantError("sample sets must share frame and joint counts");
    }
  }
}

Eigen::VectorXd column_means(const Eigen::MatrixXd& set) {
  return set.colwise().mean();
}

Eigen::MatrixXd unbiased_covariance(const Eigen::MatrixXd& set, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd centered = set.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(set.rows() - 1);
}

/// V f(D) V^T for a decomposition of a symmetric matrix.
Eigen::MatrixXd rebuild(const EigenDecomposition& eig, const Eigen::VectorXd& diag) {
  return eig.vectors * diag.asDiagonal() * eig.vectors.transpose();
}

}  // namespace

void MetricReport::validate() const {
  check_distance(mpjpe_cm, "mpjpe");
  check_distance(troot_cm, "root error");
  check_distance(fs, "foot sliding");
  check_unit_interval(contact.precision, "contact precision");
  check_unit_interval(contact.recall, "contact recall");
  check_unit_interval(contact.accuracy, "contact accuracy");
  check_unit_interval(contact.f1, "contact f1");
  if (goal_dist_cm) check_distance(*goal_dist_cm, "goal distance");
  if (diversity) check_distance(*diversity, "diversity");
  if (ffd) check_distance(*ffd, "feature distance");
}

double mpjpe(const MotionSequence& pred, const MotionSequence& gt) {
  require_same_shape(pred, gt);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.positions.size(); ++i) {
    total += (pred.positions[i] - gt.positions[i]).norm();
  }
  return 100.0 * total / static_cast<double>(pred.positions.size());
}

double t_root(const MotionSequence& pred, const MotionSequence& gt, const SkeletonTopology& topo) {
  require_same_shape(pred, gt);
  double total = 0.0;
  for (int t = 0; t < pred.frames; ++t) {
    total += (pred.at(t, topo.named.root) - gt.at(t, topo.named.root)).norm();
  }
  return 100.0 * total / pred.frames;
}

double foot_sliding(const MotionSequence& pred, const SkeletonTopology& topo, double floor_y,
                    double h_thresh) {
  double total = 0.0;
  int contact_frames = 0;
  for (const int foot : {topo.named.lfoot, topo.named.rfoot}) {
    for (int t = 0; t + 1 < pred.frames; ++t) {
      const Eigen::Vector3d p = pred.at(t, foot);
      if (p.y() - floor_y >= h_thresh) continue;
      const Eigen::Vector3d n = pred.at(t + 1, foot);
      total += std::hypot(n.x() - p.x(), n.z() - p.z());
      ++contact_frames;
    }
  }
  return contact_frames == 0 ? 0.0 : 100.0 * total / contact_frames;
}

ContactScores contact_metrics(const MotionSequence& pred, const SkeletonTopology& topo,
                              std::span<const Eigen::Vector3d> object_points,
                              const ContactLabels& gt_labels, double threshold) {
  if (gt_labels.lhand.size() != static_cast<std::size_t>(pred.frames) ||
      gt_labels.rhand.size() != static_cast<std::size_t>(pred.frames)) {
    throw InvariantError("contact labels must cover every frame");
  }
  int tp = 0, fp = 0, fn = 0, tn = 0;
  for (int t = 0; t < pred.frames; ++t) {
    const std::pair<int, bool> hands[2] = {
        {topo.named.lhand, gt_labels.lhand[static_cast<std::size_t>(t)] != 0},
        {topo.named.rhand, gt_labels.rhand[static_cast<std::size_t>(t)] != 0},
    };
    for (const auto& [joint, truth] : hands) {
      const bool hit = min_point_dist(pred.at(t, joint), object_points) < threshold;
      if (hit && truth) ++tp;
      else if (hit && !truth) ++fp;
      else if (!hit && truth) ++fn;
      else ++tn;
    }
  }
  ContactScores s;
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : (tp + fn == 0 ? 1.0 : 0.0);
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : (tp + fp == 0 ? 1.0 : 0.0);
  s.accuracy = static_cast<double>(tp + tn) / (tp + fp + fn + tn);
  s.f1 = s.precision + s.recall > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

double goal_distance(const MotionSequence& pred, const Eigen::Vector3d& goal,
                     const SkeletonTopology& topo) {
  const Eigen::Vector3d root = pred.at(pred.frames - 1, topo.named.root);
  return 100.0 * std::hypot(root.x() - goal.x(), root.z() - goal.z());
}

double diversity(std::span<const MotionSequence> samples, const SkeletonTopology& topo,
                 std::uint64_t seed) {
  if (samples.size() < 2) throw InvariantError("diversity needs at least two samples");
  require_uniform_shape(samples);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i)))]);
  }

  const std::size_t pairs = samples.size() / 2;
  double total = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const Eigen::VectorXd a = root_relative_flat(samples[order[p]], topo);
    const Eigen::VectorXd b = root_relative_flat(samples[order[pairs + p]], topo);
    total += (a - b).norm();
  }
  return total / static_cast<double>(pairs);
}

Eigen::MatrixXd motion_features(std::span<const MotionSequence> samples,
                                const SkeletonTopology& topo, int dim, std::uint64_t seed) {
  if (samples.empty()) throw InvariantError("feature extraction needs at least one sample");
  if (dim < 1) throw InvariantError("feature dimension must be positive");
  require_uniform_shape(samples);

  const int frames = samples[0].frames;
  const int joints = samples[0].joints;
  const Eigen::Index pos_len = static_cast<Eigen::Index>(frames) * joints * 3;
  const Eigen::Index vel_len = static_cast<Eigen::Index>(frames - 1) * joints * 3;
  const Eigen::Index raw_len = pos_len + vel_len;

  Eigen::MatrixXd projection(raw_len, dim);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(raw_len));
  for (Eigen::Index r = 0; r < raw_len; ++r) {
    for (int c = 0; c < dim; ++c) projection(r, c) = scale * standard_normal(rng);
  }

  Eigen::MatrixXd features(static_cast<Eigen::Index>(samples.size()), dim);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    Eigen::VectorXd raw(raw_len);
    raw.head(pos_len) = root_relative_flat(samples[n], topo);
    Eigen::Index i = pos_len;
    for (int t = 0; t + 1 < frames; ++t) {
      for (int k = 0; k < joints; ++k) {
        const Eigen::Vector3d v = samples[n].at(t + 1, k) - samples[n].at(t, k);
        raw[i++] = v.x();
        raw[i++] = v.y();
        raw[i++] = v.z();
      }
    }
    features.row(static_cast<Eigen::Index>(n)) = raw.transpose() * projection;
  }
  return features;
}

EigenDecomposition symmetric_eigen(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw InvariantError("eigendecomposition needs a square matrix");
  }
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, a.norm())) {
    throw InvariantError("eigendecomposition needs a symmetric matrix");
  }
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd m = (a + a.transpose()) / 2.0;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double tol = 1e-10 * std::max(1.0, m.norm());

  auto off_norm = [&]() {
    double s = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) s += 2.0 * m(p, q) * m(p, q);
    }
    return std::sqrt(s);
  };

  bool converged = off_norm() <= tol;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(m(p, q)) <= tol / static_cast<double>(n)) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
        const double sign = theta >= 0.0 ? 1.0 : -1.0;
        const double t = sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index r = 0; r < n; ++r) {
          const double mp = m(r, p), mq = m(r, q);
          m(r, p) = c * mp - s * mq;
          m(r, q) = s * mp + c * mq;
        }
        for (Eigen::Index r = 0; r < n; ++r) {
          const double mp = m(p, r), mq = m(q, r);
          m(p, r) = c * mp - s * mq;
          m(q, r) = s * mp + c * mq;
        }
        for (Eigen::Index r = 0; r < n; ++r) {
          const double vp = v(r, p), vq = v(r, q);
          v(r, p) = c * vp - s * vq;
          v(r, q) = s * vp + c * vq;
        }
      }
    }
    converged = off_norm() <= tol;
  }
  if (!converged) throw NumericalError("jacobi eigendecomposition did not converge");

  EigenDecomposition out;
  out.values = m.diagonal();
  out.vectors = v;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](Eigen::Index x, Eigen::Index y) { return out.values[x] < out.values[y]; });
  Eigen::VectorXd values(n);
  Eigen::MatrixXd vectors(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    values[i] = out.values[idx[static_cast<std::size_t>(i)]];
    vectors.col(i) = out.vectors.col(idx[static_cast<std::size_t>(i)]);
  }
  out.values = std::move(values);
  out.vectors = std::move(vectors);
  return out;
}

double frechet_feature_distance(const Eigen::MatrixXd& set_a, const Eigen::MatrixXd& set_b) {
  if (set_a.cols() != set_b.cols()) {
    throw InvariantError("feature sets must share their dimension");
  }
  const Eigen::Index dim = set_a.cols();
  if (dim < 1 || dim > 64) throw InvariantError("feature dimension must lie in [1,64]");
  if (set_a.rows() < dim + 1 || set_b.rows() < dim + 1) {
    throw InvariantError("each feature set needs at least dim + 1 samples");
  }

  const Eigen::VectorXd mu_a = column_means(set_a);
  const Eigen::VectorXd mu_b = column_means(set_b);
  const Eigen::MatrixXd cov_a = unbiased_covariance(set_a, mu_a);
  const Eigen::MatrixXd cov_b = unbiased_covariance(set_b, mu_b);

  const EigenDecomposition eig_a = symmetric_eigen(cov_a);
  const Eigen::VectorXd root_diag = eig_a.values.cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = rebuild(eig_a, root_diag);

  const Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
  const EigenDecomposition eig_inner = symmetric_eigen((inner + inner.transpose()) / 2.0);

  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i) {
    trace_sqrt += std::sqrt(std::max(eig_inner.values[i], 0.0));
  }
  const double value =
      (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
  return std::max(value, 0.0);
}

}  // namespace voxmotion
