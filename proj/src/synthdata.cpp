#include "voxmotion/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>

#include "voxmotion/error.hpp"
#include "voxmotion/heatmap.hpp"
#include "voxmotion/rng.hpp"

namespace voxmotion {

double min_jerk(double s) {
  const double s3 = s * s * s;
  return s3 * (10.0 - 15.0 * s + 6.0 * s * s);
}

namespace {

struct WorldBounds {
  // world x, y, z
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
};

WorldBounds world_bounds(const VolumeSpec& spec) {
  Eigen::Vector3d alo(spec.origin[0], spec.origin[1], spec.origin[2]);
  Eigen::Vector3d ahi = alo + Eigen::Vector3d(spec.dims[0] * spec.pitch[0],
                                              spec.dims[1] * spec.pitch[1],
                                              spec.dims[2] * spec.pitch[2]);
  return {axis_to_world(alo), axis_to_world(ahi)};
}

bool in_grid(const Eigen::Vector3d& p, const VolumeSpec& spec) {
  const Eigen::Vector3d a = world_to_axis(p);
  for (int i = 0; i < 3; ++i) {
    const double rel = a[i] - spec.origin[i];
    if (rel < 0.0 || rel >= spec.dims[i] * spec.pitch[i]) return false;
  }
  return true;
}

void require_walkable(const WorldBounds& b, const SkeletonTopology& topo, int frames) {
  if (frames < 4) throw InvariantError("task generators need at least 4 frames");
  if (topo.joint_count != static_cast<int>(default_rest_pose().size())) {
    throw InvariantError("task generators expect the default 8-joint body");
  }
  if (b.lo.y() > 0.0 || b.hi.y() < 1.7) {
    throw InvariantError("grid must span the floor and standing height");
  }
  if (b.hi.x() - b.lo.x() < 2.6 || b.hi.z() - b.lo.z() < 2.6) {
    throw InvariantError("grid too small for walking tasks");
  }
}

Eigen::Vector3d heading_dir(double yaw) { return {std::sin(yaw), 0.0, std::cos(yaw)}; }

double yaw_of(const Eigen::Vector3d& dir) { return std::atan2(dir.x(), dir.z()); }

void set_frame(MotionSequence& m, int t, const std::vector<Eigen::Vector3d>& joints) {
  for (int k = 0; k < m.joints; ++k) m.at(t, k) = joints[static_cast<std::size_t>(k)];
}

EntitySnapshot point_cluster(const Eigen::Vector3d& center, double spacing, double jitter,
                             EntityClass cls, Rng& rng) {
  EntitySnapshot snap;
  snap.entity_class = cls;
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      for (int l = -1; l <= 1; ++l) {
        Eigen::Vector3d p = center + spacing * Eigen::Vector3d(i, j, l);
        for (int a = 0; a < 3; ++a) p[a] += uniform_real(rng, -jitter, jitter);
        snap.points.push_back(p);
      }
    }
  }
  return snap;
}

double horizontal_dist(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a.x() - b.x();
  const double dz = a.z() - b.z();
  return std::hypot(dx, dz);
}

/// Floor-plane distance from p to the segment ab.
double horizontal_segment_dist(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                               const Eigen::Vector3d& b) {
  const Eigen::Vector2d p2(p.x(), p.z()), a2(a.x(), a.z()), b2(b.x(), b.z());
  const Eigen::Vector2d ab = b2 - a2;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p2 - a2).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p2 - (a2 + t * ab)).norm();
}

std::vector<const EntitySnapshot*> frame_objects(const std::vector<EntitySnapshot>& frame) {
  std::vector<const EntitySnapshot*> out;
  for (const EntitySnapshot& snap : frame) {
    if (snap.entity_class == EntityClass::Object) out.push_back(&snap);
  }
  return out;
}

double nearest_object_dist(const Eigen::Vector3d& hand,
                           const std::vector<EntitySnapshot>& frame) {
  double best = std::numeric_limits<double>::infinity();
  for (const EntitySnapshot* snap : frame_objects(frame)) {
    for (const Eigen::Vector3d& p : snap->points) best = std::min(best, (hand - p).norm());
  }
  return best;
}

ContactLabels build_contact_labels(const MotionSequence& motion, const SkeletonTopology& topo,
                                   const std::vector<std::vector<EntitySnapshot>>& entities) {
  ContactLabels labels;
  labels.lhand.assign(static_cast<std::size_t>(motion.frames), 0);
  labels.rhand.assign(static_cast<std::size_t>(motion.frames), 0);
  for (int t = 0; t < motion.frames; ++t) {
    const auto& frame = entities[static_cast<std::size_t>(t)];
    labels.lhand[static_cast<std::size_t>(t)] =
        nearest_object_dist(motion.at(t, topo.named.lhand), frame) < kContactThreshold ? 1 : 0;
    labels.rhand[static_cast<std::size_t>(t)] =
        nearest_object_dist(motion.at(t, topo.named.rhand), frame) < kContactThreshold ? 1 : 0;
  }
  return labels;
}

Eigen::Vector3d sample_floor_point(Rng& rng, const WorldBounds& b, double margin) {
  return {uniform_real(rng, b.lo.x() + margin, b.hi.x() - margin), 0.0,
          uniform_real(rng, b.lo.z() + margin, b.hi.z() - margin)};
}

constexpr int kPlacementTries = 1000;

[[noreturn]] void placement_failed(const char* what) {
  throw InvariantError(std::string("could not place ") + what + " inside the grid");
}

EntitySnapshot floor_lattice(const VolumeSpec& spec) {
  EntitySnapshot snap;
  snap.entity_class = EntityClass::Scene;
  for (int w = 0; w < spec.dims[1]; ++w) {
    for (int d = 0; d < spec.dims[2]; ++d) {
      snap.points.emplace_back(spec.origin[1] + (w + 0.5) * spec.pitch[1], 0.0,
                               spec.origin[2] + (d + 0.5) * spec.pitch[2]);
    }
  }
  return snap;
}

struct WalkScene {
  Eigen::Vector3d start;  // floor points, y = 0
  Eigen::Vector3d goal;
  EntitySnapshot scene;   // floor lattice plus obstacles
};

WalkScene sample_walk_scene(Rng& rng, const VolumeSpec& spec, const WorldBounds& b) {
  WalkScene ws;
  bool placed = false;
  for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
    ws.start = sample_floor_point(rng, b, 0.6);
    ws.goal = sample_floor_point(rng, b, 0.6);
    const double sep = horizontal_dist(ws.start, ws.goal);
    placed = sep >= 1.0 && sep <= 3.0;
  }
  if (!placed) placement_failed("a walk start and goal");

  ws.scene = floor_lattice(spec);
  const int obstacle_count = static_cast<int>(uniform_int(rng, 1, 3));
  for (int o = 0; o < obstacle_count; ++o) {
    bool ok = false;
    Eigen::Vector3d center;
    for (int attempt = 0; attempt < kPlacementTries && !ok; ++attempt) {
      center = sample_floor_point(rng, b, 0.3);
      center.y() = uniform_real(rng, 0.15, 0.45);
      ok = horizontal_segment_dist(center, ws.start, ws.goal) >= 0.5 &&
           horizontal_dist(center, ws.start) >= 0.5 && horizontal_dist(center, ws.goal) >= 0.5;
    }
    if (!ok) placement_failed("an obstacle");
    const EntitySnapshot block = point_cluster(center, 0.12, 0.02, EntityClass::Scene, rng);
    ws.scene.points.insert(ws.scene.points.end(), block.points.begin(), block.points.end());
  }
  return ws;
}

constexpr double kSwingLift = 0.12;

/// Feet keyframes for one foot walking anchors spaced a 4-frame cycle apart:
/// two stance frames pinned at the anchor, a vertical lift, then a glide to
/// the next anchor.
Eigen::Vector3d gait_foot(const Eigen::Vector3d& first_anchor, const Eigen::Vector3d& dir,
                          double speed, double total, int t, int phase) {
  const int q = (t + phase) % 4;
  const int n = (t + phase) / 4;
  auto anchor = [&](int cycle) {
    return first_anchor + dir * std::min(4.0 * speed * cycle, total);
  };
  switch (q) {
    case 0:
    case 1: return anchor(n);
    case 2: return anchor(n) + Eigen::Vector3d(0.0, kSwingLift, 0.0);
    default: {
      const Eigen::Vector3d mid = 0.5 * (anchor(n) + anchor(n + 1));
      return mid + Eigen::Vector3d(0.0, kSwingLift, 0.0);
    }
  }
}

MotionSequence walk_motion(const SkeletonTopology& topo, const WalkScene& ws, int frames) {
  const Eigen::Vector3d delta = ws.goal - ws.start;
  const double total = horizontal_dist(ws.start, ws.goal);
  const Eigen::Vector3d u = delta / total;
  const Eigen::Vector3d right(u.z(), 0.0, -u.x());
  const double yaw = yaw_of(u);
  const double speed = total / (frames - 1);

  MotionSequence motion(frames, topo.joint_count);
  for (int t = 0; t < frames; ++t) {
    const Eigen::Vector3d root = ws.start + u * (speed * t) + Eigen::Vector3d(0.0, 0.9, 0.0);
    std::vector<Eigen::Vector3d> joints = pose_at(topo, root, yaw);
    joints[static_cast<std::size_t>(topo.named.lfoot)] =
        gait_foot(ws.start - right * 0.10, u, speed, total, t, 0);
    joints[static_cast<std::size_t>(topo.named.rfoot)] =
        gait_foot(ws.start + right * 0.10, u, speed, total, t, 2);
    set_frame(motion, t, joints);
  }
  return motion;
}

}  // namespace

void ToySample::validate(const VolumeSpec& spec, const SkeletonTopology& topo) const {
  gt_motion.validate();
  if (gt_motion.joints != topo.joint_count) {
    throw InvariantError("sample motion joint count does not match the topology");
  }
  if (entities.size() != static_cast<std::size_t>(gt_motion.frames)) {
    throw InvariantError("sample entity frames do not match the motion length");
  }
  if (contact.lhand.size() != static_cast<std::size_t>(gt_motion.frames) ||
      contact.rhand.size() != static_cast<std::size_t>(gt_motion.frames)) {
    throw InvariantError("contact labels must cover every frame");
  }
  for (const Eigen::Vector3d& p : gt_motion.positions) {
    if (!in_grid(p, spec)) throw InvariantError("sample joint leaves the grid");
  }
  for (int t = 0; t < gt_motion.frames; ++t) {
    const auto& frame = entities[static_cast<std::size_t>(t)];
    if (contact.lhand[static_cast<std::size_t>(t)] &&
        !(nearest_object_dist(gt_motion.at(t, topo.named.lhand), frame) < kContactThreshold)) {
      throw InvariantError("left-hand contact label without a nearby object point");
    }
    if (contact.rhand[static_cast<std::size_t>(t)] &&
        !(nearest_object_dist(gt_motion.at(t, topo.named.rhand), frame) < kContactThreshold)) {
      throw InvariantError("right-hand contact label without a nearby object point");
    }
  }
}

ToySample gen_reach(std::uint64_t seed, const VolumeSpec& spec, int frames,
                    const SkeletonTopology& topo) {
  const WorldBounds b = world_bounds(spec);
  require_walkable(b, topo, frames);
  Rng rng(seed);

  Eigen::Vector3d root = sample_floor_point(rng, b, 0.6);
  root.y() = 0.9;
  const double yaw = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
  const std::vector<Eigen::Vector3d> body = pose_at(topo, root, yaw);
  const Eigen::Vector3d hand_rest = body[static_cast<std::size_t>(topo.named.rhand)];

  Eigen::Vector3d target;
  bool placed = false;
  for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
    const double dir = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
    const double dist = uniform_real(rng, 0.35, 0.55);
    const double dy = uniform_real(rng, -0.2, 0.3);
    target = hand_rest + heading_dir(dir) * dist + Eigen::Vector3d(0.0, dy, 0.0);
    placed = target.x() > b.lo.x() + 0.2 && target.x() < b.hi.x() - 0.2 &&
             target.z() > b.lo.z() + 0.2 && target.z() < b.hi.z() - 0.2 && target.y() > 0.3 &&
             target.y() < std::min(1.6, b.hi.y() - 0.2);
  }
  if (!placed) placement_failed("the reach object");

  ToySample sample;
  sample.task_id = TaskId::HumanObject;
  sample.seed = seed;
  sample.goal = target;

  const EntitySnapshot object = point_cluster(target, 0.04, 0.01, EntityClass::Object, rng);
  sample.entities.assign(static_cast<std::size_t>(frames), {object});

  sample.gt_motion = MotionSequence(frames, topo.joint_count);
  const int t_arrive = static_cast<int>(std::llround(0.75 * (frames - 1)));
  for (int t = 0; t < frames; ++t) {
    std::vector<Eigen::Vector3d> joints = body;
    const double s = t >= t_arrive ? 1.0 : static_cast<double>(t) / t_arrive;
    joints[static_cast<std::size_t>(topo.named.rhand)] =
        hand_rest + min_jerk(s) * (target - hand_rest);
    set_frame(sample.gt_motion, t, joints);
  }

  sample.contact = build_contact_labels(sample.gt_motion, topo, sample.entities);
  return sample;
}

ToySample gen_goalwalk(std::uint64_t seed, const VolumeSpec& spec, int frames,
                       const SkeletonTopology& topo) {
  const WorldBounds b = world_bounds(spec);
  require_walkable(b, topo, frames);
  Rng rng(seed);

  const WalkScene ws = sample_walk_scene(rng, spec, b);

  ToySample sample;
  sample.task_id = TaskId::HumanScene;
  sample.seed = seed;
  sample.goal = ws.goal;
  sample.entities.assign(static_cast<std::size_t>(frames), {ws.scene});
  sample.gt_motion = walk_motion(topo, ws, frames);
  sample.contact = build_contact_labels(sample.gt_motion, topo, sample.entities);
  return sample;
}

ToySample gen_approach(std::uint64_t seed, const VolumeSpec& spec, int frames,
                       const SkeletonTopology& topo) {
  const WorldBounds b = world_bounds(spec);
  require_walkable(b, topo, frames);
  Rng rng(seed);

  Eigen::Vector3d partner_root = sample_floor_point(rng, b, 1.1);
  partner_root.y() = 0.9;
  const double partner_yaw = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
  const Eigen::Vector3d facing = heading_dir(partner_yaw);
  const std::vector<Eigen::Vector3d> partner = pose_at(topo, partner_root, partner_yaw);
  const EntitySnapshot partner_surface =
      sample_body_surface(partner, topo, 40, derive_seed(seed, 1));

  const Eigen::Vector3d target = partner_root + facing * 0.6;  // face-to-face spot
  Eigen::Vector3d start;
  bool placed = false;
  for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
    start = sample_floor_point(rng, b, 0.6);
    start.y() = 0.9;
    const double d = horizontal_dist(start, target);
    placed = d >= 0.8 && d <= 2.2 && horizontal_dist(start, partner_root) >= 0.8;
  }
  if (!placed) placement_failed("the approach start");

  ToySample sample;
  sample.task_id = TaskId::HumanHuman;
  sample.seed = seed;
  sample.goal = Eigen::Vector3d(target.x(), 0.0, target.z());
  sample.entities.assign(static_cast<std::size_t>(frames), {partner_surface});

  sample.gt_motion = MotionSequence(frames, topo.joint_count);
  for (int t = 0; t < frames; ++t) {
    const double prog = min_jerk(static_cast<double>(t) / (frames - 1));
    const Eigen::Vector3d root = start + prog * (target - start);
    Eigen::Vector3d to_partner = partner_root - root;
    to_partner.y() = 0.0;
    const double yaw = to_partner.norm() > 1e-9 ? yaw_of(to_partner.normalized()) : partner_yaw;
    std::vector<Eigen::Vector3d> joints = pose_at(topo, root, yaw);
    const double raise = std::clamp((static_cast<double>(t) / (frames - 1) - 0.75) / 0.25, 0.0, 1.0);
    joints[static_cast<std::size_t>(topo.named.rhand)].y() += 0.3 * min_jerk(raise);
    set_frame(sample.gt_motion, t, joints);
  }

  sample.contact = build_contact_labels(sample.gt_motion, topo, sample.entities);
  return sample;
}

ToySample gen_compound(std::uint64_t seed, const VolumeSpec& spec, int frames,
                       const SkeletonTopology& topo) {
  ToySample sample = gen_goalwalk(derive_seed(seed, 0), spec, frames, topo);
  sample.task_id = TaskId::Compound;
  sample.seed = seed;

  Rng rng(derive_seed(seed, 2));
  const Eigen::Vector3d goal = *sample.goal;
  const Eigen::Vector3d object_center(goal.x(), 0.8, goal.z());
  const EntitySnapshot object = point_cluster(object_center, 0.04, 0.01, EntityClass::Object, rng);
  for (auto& frame : sample.entities) frame.push_back(object);

  // in the final quarter the right hand extends toward the object
  const int rhand = topo.named.rhand;
  for (int t = 0; t < frames; ++t) {
    const double s = std::clamp((static_cast<double>(t) / (frames - 1) - 0.75) / 0.25, 0.0, 1.0);
    Eigen::Vector3d& hand = sample.gt_motion.at(t, rhand);
    hand += min_jerk(s) * (object_center - hand);
  }

  sample.contact = build_contact_labels(sample.gt_motion, topo, sample.entities);
  return sample;
}

ToySample generate_sample(TaskId task, std::uint64_t seed, const VolumeSpec& spec, int frames,
                          const SkeletonTopology& topo) {
  switch (task) {
    case TaskId::HumanHuman: return gen_approach(seed, spec, frames, topo);
    case TaskId::HumanObject: return gen_reach(seed, spec, frames, topo);
    case TaskId::HumanScene: return gen_goalwalk(seed, spec, frames, topo);
    case TaskId::Compound: return gen_compound(seed, spec, frames, topo);
  }
  throw InvariantError("unknown task id");
}

SemanticVolume sample_condition_volume(const ToySample& sample, const VolumeSpec& spec) {
  return build_volume_sequence(sample.entities, spec);
}

TrainItem make_train_item(const ToySample& sample, const VolumeSpec& spec, double sigma) {
  TrainItem item;
  item.motion = sample.gt_motion;
  item.x0 = encode_motion(sample.gt_motion, spec, sigma);
  scale_values(item.x0, amplitude_scale(sigma));
  item.cond.task_id = sample.task_id;
  item.cond.uiv = sample_condition_volume(sample, spec);
  item.cond.goal = sample.goal;
  return item;
}

}  // namespace voxmotion
