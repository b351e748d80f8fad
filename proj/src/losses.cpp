#include "voxmotion/losses.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "voxmotion/error.hpp"

namespace voxmotion {

double loss_rec(const HeatmapField& pred, const HeatmapField& target, std::span<double> grad) {
  if (!pred.same_shape(target)) throw InvariantError("loss_rec: field shape mismatch");
  const std::size_t n = pred.values.size();
  if (!grad.empty() && grad.size() != n)
    throw InvariantError("loss_rec: gradient size mismatch");

  double acc = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = pred.values[i] - target.values[i];
    acc += diff * diff;
    if (!grad.empty()) grad[i] = 2.0 * diff * inv_n;
  }
  return acc * inv_n;
}

namespace {

void check_same_motion_shape(const MotionSequence& a, const MotionSequence& b, const char* who) {
  if (a.frames != b.frames || a.joints != b.joints)
    throw InvariantError(std::string(who) + ": motion shape mismatch");
}

}  // namespace

double loss_pos(const MotionSequence& pred, const MotionSequence& gt,
                std::vector<Eigen::Vector3d>* grad) {
  check_same_motion_shape(pred, gt, "loss_pos");
  const std::size_t n = pred.positions.size();
  if (grad) grad->assign(n, Eigen::Vector3d::Zero());

  double acc = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d diff = pred.positions[i] - gt.positions[i];
    acc += diff.squaredNorm();
    if (grad) (*grad)[i] = 2.0 * inv_n * diff;
  }
  return acc * inv_n;
}

double loss_vel(const MotionSequence& pred, const MotionSequence& gt,
                std::vector<Eigen::Vector3d>* grad) {
  check_same_motion_shape(pred, gt, "loss_vel");
  if (grad) grad->assign(pred.positions.size(), Eigen::Vector3d::Zero());
  if (pred.frames < 2) return 0.0;

  const int T = pred.frames;
  const int K = pred.joints;
  const double inv_n = 1.0 / (static_cast<double>(T - 1) * K);

  double acc = 0.0;
  for (int t = 0; t + 1 < T; ++t)
    for (int k = 0; k < K; ++k) {
      const Eigen::Vector3d dp = pred.at(t + 1, k) - pred.at(t, k);
      const Eigen::Vector3d dg = gt.at(t + 1, k) - gt.at(t, k);
      const Eigen::Vector3d diff = dp - dg;
      acc += diff.squaredNorm();
      if (grad) {
        (*grad)[static_cast<std::size_t>(t + 1) * K + k] += 2.0 * inv_n * diff;
        (*grad)[static_cast<std::size_t>(t) * K + k] -= 2.0 * inv_n * diff;
      }
    }
  return acc * inv_n;
}

double loss_sk(const MotionSequence& pred, const MotionSequence& gt, const SkeletonTopology& topo,
               std::vector<Eigen::Vector3d>* grad) {
  check_same_motion_shape(pred, gt, "loss_sk");
  if (pred.joints != topo.joint_count) throw InvariantError("loss_sk: topology joint count mismatch");
  if (grad) grad->assign(pred.positions.size(), Eigen::Vector3d::Zero());

  const int T = pred.frames;
  const int K = pred.joints;
  const double inv_n = 1.0 / (static_cast<double>(T) * topo.bones.size());

  double acc = 0.0;
  for (int t = 0; t < T; ++t)
    for (const Bone& bone : topo.bones) {
      const Eigen::Vector3d sp = pred.at(t, bone.parent) - pred.at(t, bone.child);
      const Eigen::Vector3d sg = gt.at(t, bone.parent) - gt.at(t, bone.child);
      const Eigen::Vector3d diff = sp - sg;
      acc += diff.squaredNorm();
      if (grad) {
        (*grad)[static_cast<std::size_t>(t) * K + bone.parent] += 2.0 * inv_n * diff;
        (*grad)[static_cast<std::size_t>(t) * K + bone.child] -= 2.0 * inv_n * diff;
      }
    }
  return acc * inv_n;
}

double loss_ori(std::span<const Eigen::Vector3d> pred_frame0,
                std::span<const Eigen::Vector3d> gt_frame0, const SkeletonTopology& topo,
                std::vector<Eigen::Vector3d>* grad) {
  const OrientationResult gt_res = initial_orientation(gt_frame0, topo);
  if (gt_res.degenerate) throw InvariantError("loss_ori: degenerate ground-truth heading");
  const OrientationResult pred_res = initial_orientation(pred_frame0, topo);
  const double pred_norm = pred_res.direction.norm();
  if (pred_res.degenerate || pred_norm < 1e-8)
    throw InvariantError("loss_ori: degenerate predicted heading");

  const Eigen::Vector3d n_gt = gt_res.direction.normalized();
  const Eigen::Vector3d n_pred = pred_res.direction / pred_norm;
  const double value = 1.0 - n_pred.dot(n_gt);

  if (grad) {
    grad->assign(pred_frame0.size(), Eigen::Vector3d::Zero());

    // d = u x v with u, v the unit hip bone vectors of the predicted frame
    const Eigen::Vector3d s_l = pred_frame0[topo.named.root] - pred_frame0[topo.named.lhip];
    const Eigen::Vector3d s_r = pred_frame0[topo.named.root] - pred_frame0[topo.named.rhip];
    const double nl = s_l.norm();
    const double nr = s_r.norm();
    const Eigen::Vector3d u = s_l / nl;
    const Eigen::Vector3d v = s_r / nr;

    // L = 1 - (d/|d|) . n_gt, so dL/dd = -(I - n n^T) n_gt / |d|
    const Eigen::Vector3d g_d = -(n_gt - n_pred * n_pred.dot(n_gt)) / pred_norm;
    // d(u x v)/du^T applied to g_d gives v x g_d; for v it gives g_d x u
    const Eigen::Vector3d g_u = v.cross(g_d);
    const Eigen::Vector3d g_v = g_d.cross(u);
    // through the normalizations: ds/dt of s/|s| is (I - uu^T)/|s|
    const Eigen::Vector3d g_sl = (g_u - u * u.dot(g_u)) / nl;
    const Eigen::Vector3d g_sr = (g_v - v * v.dot(g_v)) / nr;

    (*grad)[topo.named.root] += g_sl + g_sr;
    (*grad)[topo.named.lhip] -= g_sl;
    (*grad)[topo.named.rhip] -= g_sr;
  }
  return value;
}

LossReport total_loss(const HeatmapField& pred, const HeatmapField& target,
                      const MotionSequence& gt, const SkeletonTopology& topo,
                      const LossWeights& w, bool with_grad) {
  if (!pred.same_shape(target)) throw InvariantError("total_loss: field shape mismatch");
  if (gt.frames != pred.frames || gt.joints != pred.joints)
    throw InvariantError("total_loss: motion shape mismatch");
  if (gt.joints != topo.joint_count)
    throw InvariantError("total_loss: topology joint count mismatch");

  LossReport report;
  if (with_grad) report.field_grad.assign(pred.values.size(), 0.0);

  report.rec = loss_rec(pred, target, with_grad ? std::span<double>(report.field_grad) : std::span<double>{});

  const DecodeCache decode = decode_clamped(pred);

  std::vector<Eigen::Vector3d> g_pos, g_vel, g_sk, g_ori;
  report.pos = loss_pos(decode.joints, gt, with_grad ? &g_pos : nullptr);
  report.vel = loss_vel(decode.joints, gt, with_grad ? &g_vel : nullptr);
  report.sk = loss_sk(decode.joints, gt, topo, with_grad ? &g_sk : nullptr);
  report.ori = loss_ori(decode.joints.frame(0), gt.frame(0), topo, with_grad ? &g_ori : nullptr);

  report.total = report.rec + w.pos * report.pos + w.vel * report.vel + w.sk * report.sk +
                 w.ori * report.ori;

  if (with_grad) {
    std::vector<Eigen::Vector3d> joint_grad(decode.joints.positions.size(),
                                            Eigen::Vector3d::Zero());
    for (std::size_t i = 0; i < joint_grad.size(); ++i)
      joint_grad[i] = w.pos * g_pos[i] + w.vel * g_vel[i] + w.sk * g_sk[i];
    for (int k = 0; k < gt.joints; ++k) joint_grad[k] += w.ori * g_ori[k];
    accumulate_decode_gradient(pred, decode, joint_grad, report.field_grad);
  }
  return report;
}

}  // namespace voxmotion
