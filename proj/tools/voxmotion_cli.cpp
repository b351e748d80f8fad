#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "voxmotion/config.hpp"
#include "voxmotion/denoiser.hpp"
#include "voxmotion/diffusion.hpp"
#include "voxmotion/error.hpp"
#include "voxmotion/geometry.hpp"
#include "voxmotion/heatmap.hpp"
#include "voxmotion/io.hpp"
#include "voxmotion/losses.hpp"
#include "voxmotion/metrics.hpp"
#include "voxmotion/rng.hpp"
#include "voxmotion/synthdata.hpp"
#include "voxmotion/volume.hpp"

namespace fs = std::filesystem;
using namespace voxmotion;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- config

/// Profile/file resolution plus the flag overrides shared by subcommands.
struct ConfigArgs {
  std::string profile = "desk";
  std::string config_file;
  std::uint64_t seed = 0;
  double sigma = 0.0;
  double lr = 0.0;
  int frames = 0;
  int steps = 0;
  int batch = 0;
  int ddim_steps = 0;
  std::string mix;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* sigma_opt = nullptr;
  CLI::Option* lr_opt = nullptr;
  CLI::Option* frames_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  CLI::Option* ddim_opt = nullptr;
  CLI::Option* mix_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--profile", profile, "named config profile (full or desk)")
        ->capture_default_str();
    cmd->add_option("--config", config_file, "JSON config file overriding the profile");
    seed_opt = cmd->add_option("--seed", seed, "base random seed");
    sigma_opt = cmd->add_option("--sigma", sigma, "gaussian width in voxels");
    lr_opt = cmd->add_option("--lr", lr, "learning rate");
    frames_opt = cmd->add_option("--frames", frames, "frames per clip");
    steps_opt = cmd->add_option("--steps", steps, "training steps");
    batch_opt = cmd->add_option("--batch", batch, "batch size");
    ddim_opt = cmd->add_option("--ddim-steps", ddim_steps, "sampler step count");
    mix_opt = cmd->add_option("--mix", mix, "task draw ratio as h:o:s");
  }

  RunConfig resolve() const {
    RunConfig cfg =
        config_file.empty() ? profile_by_name(profile) : load_config(config_file);
    if (seed_opt->count()) cfg.seed = seed;
    if (sigma_opt->count()) cfg.sigma = sigma;
    if (lr_opt->count()) cfg.lr = lr;
    if (frames_opt->count()) cfg.frames = frames;
    if (steps_opt->count()) cfg.train_steps = steps;
    if (batch_opt->count()) cfg.batch = batch;
    if (ddim_opt->count()) cfg.ddim_steps = ddim_steps;
    if (mix_opt->count()) cfg.mix = parse_mix(mix);
    cfg.validate();
    return cfg;
  }

  static std::array<int, 3> parse_mix(const std::string& text) {
    std::array<int, 3> out{};
    std::istringstream in(text);
    char sep1 = 0, sep2 = 0, extra = 0;
    if (!(in >> out[0] >> sep1 >> out[1] >> sep2 >> out[2]) || sep1 != ':' || sep2 != ':' ||
        (in >> extra)) {
      throw InvariantError("mix must look like h:o:s, e.g. 1:1:1");
    }
    for (int v : out) {
      if (v < 0) throw InvariantError("mix ratios must be nonnegative");
    }
    return out;
  }
};

TaskId task_from_flag(const std::string& name) {
  if (name == "reach") return TaskId::HumanObject;
  if (name == "goalwalk") return TaskId::HumanScene;
  if (name == "approach") return TaskId::HumanHuman;
  if (name == "compound") return TaskId::Compound;
  return parse_task(name);  // canonical names also accepted
}

std::string task_flag_name(TaskId id) {
  switch (id) {
    case TaskId::HumanObject: return "reach";
    case TaskId::HumanScene: return "goalwalk";
    case TaskId::HumanHuman: return "approach";
    case TaskId::Compound: return "compound";
  }
  throw InvariantError("unknown task id");
}

std::string indexed_name(const std::string& stem, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%04d", index);
  return stem + buf;
}

SkeletonTopology topology_for(const RunConfig& cfg) {
  const SkeletonTopology topo = default_topology();
  if (cfg.joints != topo.joint_count) {
    throw InvariantError("generated tasks need the default 8-joint skeleton");
  }
  return topo;
}

/// Placeholder skeleton for decoded fields whose joint count has no metadata.
SkeletonTopology generic_topology(int joints) {
  if (joints < 2) throw InvariantError("cannot build a skeleton for fewer than 2 joints");
  SkeletonTopology topo;
  topo.joint_count = joints;
  for (int k = 0; k < joints; ++k) topo.joint_names.push_back("j" + std::to_string(k));
  topo.parent.assign(static_cast<std::size_t>(joints), 0);
  topo.parent[0] = -1;
  topo.bones = bones_from_parents(topo.parent);
  topo.capsule_radii.assign(topo.bones.size(), 0.05);
  topo.named = {0, 0, 1, 0, 1, 0, 1, 0};
  topo.validate();
  return topo;
}

json sidecar_json(const ToySample& sample) {
  json j;
  j["task_id"] = task_name(sample.task_id);
  j["seed"] = sample.seed;
  if (sample.goal) {
    j["goal"] = {sample.goal->x(), sample.goal->y(), sample.goal->z()};
  } else {
    j["goal"] = nullptr;
  }
  j["contact_labels"] = {{"lhand", sample.contact.lhand}, {"rhand", sample.contact.rhand}};
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open for reading: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- voxelize

int run_voxelize(const RunConfig& cfg, const std::string& motion_path,
                 const std::string& out_path, const std::string& entity, int samples_per_bone) {
  const MotionFile file = read_motion(motion_path);
  EntityClass cls;
  if (entity == "human") cls = EntityClass::Human;
  else if (entity == "object") cls = EntityClass::Object;
  else if (entity == "scene") cls = EntityClass::Scene;
  else throw InvariantError("entity must be human, object, or scene");

  std::vector<std::vector<EntitySnapshot>> frames;
  for (int t = 0; t < file.motion.frames; ++t) {
    std::vector<Eigen::Vector3d> joints(static_cast<std::size_t>(file.motion.joints));
    for (int k = 0; k < file.motion.joints; ++k) {
      joints[static_cast<std::size_t>(k)] = file.motion.at(t, k);
    }
    EntitySnapshot snap = sample_body_surface(joints, file.topo, samples_per_bone,
                                              derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    snap.entity_class = cls;
    frames.push_back({std::move(snap)});
  }
  write_volume(out_path, build_volume_sequence(frames, cfg.spec));
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- encode / decode

int run_encode(const RunConfig& cfg, const std::string& motion_path, const std::string& out_path) {
  const MotionFile file = read_motion(motion_path);
  EncodeStats stats;
  const HeatmapField field = encode_motion(file.motion, cfg.spec, cfg.sigma, &stats);
  if (stats.out_of_grid > 0) {
    std::cerr << "note: " << stats.out_of_grid << " channels fell back to uniform\n";
  }
  write_field(out_path, field);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_decode(const RunConfig& cfg, const std::string& field_path, const std::string& out_path) {
  const HeatmapField field = read_field(field_path);
  MotionFile file;
  file.fps = cfg.fps;
  file.topo = field.joints == default_topology().joint_count ? default_topology()
                                                             : generic_topology(field.joints);
  file.motion = decode_expectation(field);
  write_motion(out_path, file);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- gen-data

int run_gen_data(const RunConfig& cfg, const std::string& task_flag, int count,
                 const std::string& out_dir) {
  if (count < 1) throw InvariantError("count must be positive");
  const TaskId task = task_from_flag(task_flag);
  const SkeletonTopology topo = topology_for(cfg);
  fs::create_directories(out_dir);

  for (int i = 0; i < count; ++i) {
    const std::uint64_t sample_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    const ToySample sample = generate_sample(task, sample_seed, cfg.spec, cfg.frames, topo);
    sample.validate(cfg.spec, topo);

    const std::string stem = indexed_name(task_flag_name(task), i);
    MotionFile file;
    file.fps = cfg.fps;
    file.topo = topo;
    file.motion = sample.gt_motion;
    write_motion(fs::path(out_dir) / (stem + ".uim"), file);
    write_volume(fs::path(out_dir) / (stem + ".uiv"), sample_condition_volume(sample, cfg.spec));
    write_json(fs::path(out_dir) / (stem + ".json"), sidecar_json(sample));
  }
  std::cout << "wrote " << count << " samples to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

std::vector<fs::path> sidecar_paths(const std::string& dir) {
  std::vector<fs::path> sidecars;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") sidecars.push_back(entry.path());
  }
  std::sort(sidecars.begin(), sidecars.end());
  if (sidecars.empty()) throw FormatError("no sample sidecars found in " + dir);
  return sidecars;
}

struct StoredSample {
  MotionSequence motion;
  SemanticVolume uiv;
  TaskId task = TaskId::HumanObject;
  std::optional<Eigen::Vector3d> goal;
  std::uint64_t seed = 0;
  ContactLabels contact;
};

StoredSample load_sample(const fs::path& sidecar) {
  StoredSample s;
  const json j = read_json(sidecar);
  try {
    s.task = parse_task(j.at("task_id").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("goal").is_null()) {
      const auto g = j.at("goal").get<std::array<double, 3>>();
      s.goal = Eigen::Vector3d(g[0], g[1], g[2]);
    }
    s.contact.lhand = j.at("contact_labels").at("lhand").get<std::vector<std::uint8_t>>();
    s.contact.rhand = j.at("contact_labels").at("rhand").get<std::vector<std::uint8_t>>();
  } catch (const json::exception& e) {
    throw FormatError(sidecar.string() + ": " + e.what());
  }
  fs::path base = sidecar;
  s.motion = read_motion(base.replace_extension(".uim")).motion;
  s.uiv = read_volume(base.replace_extension(".uiv"));
  return s;
}

TrainItem item_from_stored(StoredSample&& s, const RunConfig& cfg) {
  // volume headers carry f32 pitch/origin, so snap back to the exact config
  // grid after checking it really is the same grid
  if (s.uiv.spec.dims != cfg.spec.dims) {
    throw InvariantError("stored volume grid does not match the run config");
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(s.uiv.spec.pitch[axis] - cfg.spec.pitch[axis]) > 1e-6 ||
        std::abs(s.uiv.spec.origin[axis] - cfg.spec.origin[axis]) > 1e-6) {
      throw InvariantError("stored volume grid does not match the run config");
    }
  }
  s.uiv.spec = cfg.spec;

  TrainItem item;
  item.x0 = encode_motion(s.motion, cfg.spec, cfg.sigma);
  scale_values(item.x0, amplitude_scale(cfg.sigma));
  item.motion = std::move(s.motion);
  item.cond.task_id = s.task;
  item.cond.uiv = std::move(s.uiv);
  item.cond.goal = s.goal;
  return item;
}

std::vector<TrainItem> generated_dataset(const RunConfig& cfg, const SkeletonTopology& topo,
                                         int count) {
  // expand the mix ratio into a task rotation so the dataset itself follows it
  std::vector<TaskId> rotation;
  const TaskId order[3] = {TaskId::HumanHuman, TaskId::HumanObject, TaskId::HumanScene};
  for (int t = 0; t < 3; ++t) {
    for (int r = 0; r < cfg.mix[static_cast<std::size_t>(t)]; ++r) rotation.push_back(order[t]);
  }
  if (rotation.empty()) throw InvariantError("mix ratios cannot all be zero");

  std::vector<TrainItem> items;
  items.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const TaskId task = rotation[static_cast<std::size_t>(i) % rotation.size()];
    const std::uint64_t sample_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    const ToySample sample = generate_sample(task, sample_seed, cfg.spec, cfg.frames, topo);
    items.push_back(make_train_item(sample, cfg.spec, cfg.sigma));
  }
  return items;
}

int run_train(const RunConfig& cfg, const std::string& out_path, const std::string& data_dir,
              int count, const std::string& log_path, bool mix_explicit) {
  const SkeletonTopology topo = topology_for(cfg);

  std::vector<TrainItem> dataset;
  if (!data_dir.empty()) {
    for (const fs::path& sidecar : sidecar_paths(data_dir)) {
      dataset.push_back(item_from_stored(load_sample(sidecar), cfg));
    }
  } else {
    if (count < 1) throw InvariantError("count must be positive");
    dataset = generated_dataset(cfg, topo, count);
  }
  std::cout << "training on " << dataset.size() << " samples for " << cfg.train_steps
            << " steps\n";

  DenoiserParams params = init_params(denoiser_config(cfg), cfg.seed);
  const DiffusionSchedule sched = make_schedule(cfg.diffusion_steps);

  TrainOptions opts;
  opts.steps = cfg.train_steps;
  opts.batch = cfg.batch;
  opts.lr = cfg.lr;
  opts.seed = derive_seed(cfg.seed, 0x7261696eULL);
  opts.mix = cfg.mix;
  if (!mix_explicit) {
    // a loaded dataset may cover fewer task types than the default 1:1:1
    std::array<bool, 3> present{};
    for (const TrainItem& item : dataset) {
      const int task = static_cast<int>(item.cond.task_id);
      if (task < 3) present[static_cast<std::size_t>(task)] = true;
    }
    for (std::size_t i = 0; i < 3; ++i) {
      if (!present[i]) opts.mix[i] = 0;
    }
  }

  std::vector<double> totals;
  totals.reserve(static_cast<std::size_t>(opts.steps));
  const int report_every = std::max(1, opts.steps / 20);
  train_loop(dataset, topo, params, sched, cfg.weights, opts,
             [&](int step, const LossReport& report) {
               totals.push_back(report.total);
               if (step % report_every == 0 || step + 1 == opts.steps) {
                 std::cout << "step " << step << " total " << report.total << " rec "
                           << report.rec << " pos " << report.pos << "\n";
               }
             });

  write_checkpoint(out_path, params);
  save_config(out_path + ".config.json", cfg);

  const int head = std::min<int>(100, static_cast<int>(totals.size()));
  double head_mean = 0.0;
  for (int i = 0; i < head; ++i) head_mean += totals[static_cast<std::size_t>(i)];
  head_mean /= head;
  json log;
  log["losses"] = totals;
  log["first100_mean"] = head_mean;
  log["final"] = totals.back();
  write_json(log_path.empty() ? out_path + ".log.json" : log_path, log);

  std::cout << "wrote " << out_path << " (first-100 mean " << head_mean << ", final "
            << totals.back() << ")\n";
  return 0;
}

// ---------------------------------------------------------------- sample

int run_sample(const RunConfig& cfg, const std::string& model_path, const std::string& task_flag,
               int count, const std::string& out_dir, bool dump_fields) {
  if (count < 1) throw InvariantError("count must be positive");
  const TaskId task = task_from_flag(task_flag);
  const SkeletonTopology topo = topology_for(cfg);
  const DenoiserParams params = read_checkpoint(model_path);
  if (!(params.config.spec == cfg.spec) || params.config.frames != cfg.frames ||
      params.config.joints != cfg.joints) {
    throw InvariantError("checkpoint shape does not match the run config");
  }
  const DiffusionSchedule sched = make_schedule(cfg.diffusion_steps);
  fs::create_directories(out_dir);

  for (int i = 0; i < count; ++i) {
    const std::uint64_t cond_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    const ToySample scenario = generate_sample(task, cond_seed, cfg.spec, cfg.frames, topo);
    TaskCondition cond;
    cond.task_id = scenario.task_id;
    cond.uiv = sample_condition_volume(scenario, cfg.spec);
    cond.goal = scenario.goal;

    const std::uint64_t noise_seed =
        derive_seed(cfg.seed, (1ULL << 40) + static_cast<std::uint64_t>(i));
    const HeatmapField field = sample(make_denoise_fn(params, cond), cfg.spec, cfg.frames,
                                      cfg.joints, sched, cfg.ddim_steps, noise_seed);

    const std::string stem = indexed_name(task_flag_name(task), i);
    MotionFile file;
    file.fps = cfg.fps;
    file.topo = topo;
    file.motion = decode_expectation(field);
    write_motion(fs::path(out_dir) / (stem + ".uim"), file);
    json j;
    j["task_id"] = task_name(task);
    j["seed"] = cond_seed;
    if (cond.goal) j["goal"] = {cond.goal->x(), cond.goal->y(), cond.goal->z()};
    else j["goal"] = nullptr;
    write_json(fs::path(out_dir) / (stem + ".json"), j);
    if (dump_fields) write_field(fs::path(out_dir) / (stem + ".uhf"), field);
  }
  std::cout << "wrote " << count << " sampled motions to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

std::vector<Eigen::Vector3d> object_points_of(const ToySample& sample) {
  std::vector<Eigen::Vector3d> points;
  if (sample.entities.empty()) return points;
  for (const EntitySnapshot& snap : sample.entities.front()) {
    if (snap.entity_class == EntityClass::Object) {
      points.insert(points.end(), snap.points.begin(), snap.points.end());
    }
  }
  return points;
}

void print_metric(const char* name, double value) {
  std::printf("  %-14s %10.4f\n", name, value);
}

int run_eval(const RunConfig& cfg, const std::string& pred_dir, const std::string& gt_dir,
             const std::string& out_path, int ffd_dim) {
  const SkeletonTopology topo = topology_for(cfg);

  std::vector<fs::path> pred_files;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (entry.path().extension() == ".uim") pred_files.push_back(entry.path());
  }
  std::sort(pred_files.begin(), pred_files.end());
  if (pred_files.empty()) throw FormatError("no predicted motions found in " + pred_dir);

  std::vector<MotionSequence> preds, gts;
  double sum_mpjpe = 0.0, sum_troot = 0.0, sum_fs = 0.0, sum_goal = 0.0;
  int goal_count = 0;
  double sum_prec = 0.0, sum_rec = 0.0, sum_acc = 0.0, sum_f1 = 0.0;
  int contact_count = 0;

  for (const fs::path& pred_path : pred_files) {
    const fs::path gt_motion_path = fs::path(gt_dir) / pred_path.filename();
    const fs::path sidecar = fs::path(gt_motion_path).replace_extension(".json");
    if (!fs::exists(gt_motion_path) || !fs::exists(sidecar)) {
      throw FormatError("ground truth missing for " + pred_path.filename().string());
    }
    const MotionSequence pred = read_motion(pred_path).motion;
    const MotionSequence gt = read_motion(gt_motion_path).motion;
    StoredSample meta = load_sample(sidecar);

    sum_mpjpe += mpjpe(pred, gt);
    sum_troot += t_root(pred, gt, topo);
    sum_fs += foot_sliding(pred, topo);
    if (meta.goal) {
      sum_goal += goal_distance(pred, *meta.goal, topo);
      ++goal_count;
    }

    // the sidecar stores labels but not the object geometry, so rebuild the
    // scenario from its seed; guard against a mismatched config by checking
    // the regenerated motion against the stored one
    const ToySample scenario = generate_sample(meta.task, meta.seed, cfg.spec, cfg.frames, topo);
    double regen_err = 0.0;
    if (scenario.gt_motion.frames == gt.frames && scenario.gt_motion.joints == gt.joints) {
      for (int t = 0; t < gt.frames; ++t) {
        for (int k = 0; k < gt.joints; ++k) {
          regen_err = std::max(regen_err, (scenario.gt_motion.at(t, k) - gt.at(t, k)).norm());
        }
      }
    } else {
      regen_err = 1.0;
    }
    if (regen_err > 1e-6) {
      throw InvariantError(
          "stored sample does not match the run config; pass the profile/config used to "
          "generate it");
    }
    const std::vector<Eigen::Vector3d> obj_points = object_points_of(scenario);
    if (!obj_points.empty()) {
      const ContactScores scores = contact_metrics(pred, topo, obj_points, meta.contact);
      sum_prec += scores.precision;
      sum_rec += scores.recall;
      sum_acc += scores.accuracy;
      sum_f1 += scores.f1;
      ++contact_count;
    }

    preds.push_back(pred);
    gts.push_back(gt);
  }

  const double n = static_cast<double>(pred_files.size());
  MetricReport report;
  report.mpjpe_cm = sum_mpjpe / n;
  report.troot_cm = sum_troot / n;
  report.fs = sum_fs / n;
  if (contact_count > 0) {
    report.contact.precision = sum_prec / contact_count;
    report.contact.recall = sum_rec / contact_count;
    report.contact.accuracy = sum_acc / contact_count;
    report.contact.f1 = sum_f1 / contact_count;
  }
  if (goal_count > 0) report.goal_dist_cm = sum_goal / goal_count;
  if (preds.size() >= 2) report.diversity = diversity(preds, topo);
  if (static_cast<int>(preds.size()) >= ffd_dim + 1) {
    const Eigen::MatrixXd fa = motion_features(preds, topo, ffd_dim);
    const Eigen::MatrixXd fb = motion_features(gts, topo, ffd_dim);
    report.ffd = frechet_feature_distance(fa, fb);
  }
  report.validate();

  std::printf("evaluated %d motion pairs\n", static_cast<int>(pred_files.size()));
  print_metric("mpjpe_cm", report.mpjpe_cm);
  print_metric("troot_cm", report.troot_cm);
  print_metric("foot_slide", report.fs);
  if (contact_count > 0) {
    print_metric("c_precision", report.contact.precision);
    print_metric("c_recall", report.contact.recall);
    print_metric("c_accuracy", report.contact.accuracy);
    print_metric("c_f1", report.contact.f1);
  }
  if (report.goal_dist_cm) print_metric("goal_cm", *report.goal_dist_cm);
  if (report.diversity) print_metric("diversity", *report.diversity);
  if (report.ffd) print_metric("ffd", *report.ffd);

  if (!out_path.empty()) {
    json j;
    j["count"] = pred_files.size();
    j["mpjpe_cm"] = report.mpjpe_cm;
    j["troot_cm"] = report.troot_cm;
    j["fs"] = report.fs;
    if (contact_count > 0) {
      j["contact"] = {{"precision", report.contact.precision},
                      {"recall", report.contact.recall},
                      {"accuracy", report.contact.accuracy},
                      {"f1", report.contact.f1}};
    }
    if (report.goal_dist_cm) j["goal_dist_cm"] = *report.goal_dist_cm;
    if (report.diversity) j["diversity"] = *report.diversity;
    if (report.ffd) j["ffd"] = *report.ffd;
    write_json(out_path, j);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- gradcheck

/// Central-difference probe mirrored against an analytic gradient.
struct FdProbe {
  double max_rel = 0.0;
  int checked = 0;

  void compare(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    ++checked;
  }
};

HeatmapField random_field(const VolumeSpec& spec, int frames, int joints, std::uint64_t seed) {
  HeatmapField field(spec, frames, joints, FieldMode::Raw);
  Rng rng(seed);
  for (double& v : field.values) v = uniform_real(rng, 0.2, 1.2);
  return field;
}

int run_gradcheck(std::uint64_t seed) {
  VolumeSpec spec;
  spec.dims = {6, 6, 6};
  spec.pitch = {0.4, 0.8, 0.8};
  spec.origin = {0.0, -2.4, -2.4};
  const int frames = 4;
  const SkeletonTopology topo = default_topology();
  const int joints = topo.joint_count;
  const double sigma = 1.2;

  double worst_loss = 0.0;
  double worst_denoiser = 0.0;

  // losses and the decode chain, checked through total_loss field_grad
  {
    const ToySample sample = generate_sample(TaskId::HumanObject, derive_seed(seed, 1), spec,
                                             frames, topo);
    HeatmapField pred = encode_motion(sample.gt_motion, spec, sigma);
    pred.mode = FieldMode::Raw;
    Rng noise(derive_seed(seed, 2));
    for (double& v : pred.values) {
      v = v * amplitude_scale(sigma) + uniform_real(noise, -0.025, 0.025);
    }
    HeatmapField target = encode_motion(sample.gt_motion, spec, sigma);
    scale_values(target, amplitude_scale(sigma));
    target.mode = FieldMode::Raw;

    LossWeights weights;
    const LossReport base_report =
        total_loss(pred, target, sample.gt_motion, topo, weights, true);
    if (base_report.field_grad.size() != pred.values.size()) {
      throw NumericalError("field gradient size mismatch");
    }

    FdProbe probe;
    Rng pick(derive_seed(seed, 3));
    const double h = 1e-4;
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t idx = static_cast<std::size_t>(
          uniform_int(pick, 0, static_cast<std::int64_t>(pred.values.size()) - 1));
      HeatmapField plus = pred;
      HeatmapField minus = pred;
      plus.values[idx] += h;
      minus.values[idx] -= h;
      const double fd = (total_loss(plus, target, sample.gt_motion, topo, weights, false).total -
                         total_loss(minus, target, sample.gt_motion, topo, weights, false).total) /
                        (2.0 * h);
      probe.compare(base_report.field_grad[idx], fd);
    }
    worst_loss = probe.max_rel;
    std::printf("  %-22s %d probes, max rel err %.3e\n", "loss field gradient", probe.checked,
                probe.max_rel);
    if (probe.max_rel >= 1e-4) throw NumericalError("loss gradient check failed");
  }

  // denoiser backward on every tensor
  {
    VolumeSpec coarse;
    coarse.dims = {4, 4, 4};
    coarse.pitch = {0.6, 1.2, 1.2};
    coarse.origin = spec.origin;
    DenoiserConfig dcfg;
    dcfg.spec = coarse;
    dcfg.frames = frames;
    dcfg.joints = joints;
    dcfg.trunk_dim = 2;
    dcfg.width = 10;
    dcfg.embed_dim = 16;
    dcfg.validate();
    DenoiserParams params = init_params(dcfg, derive_seed(seed, 4));

    const HeatmapField x_t = random_field(coarse, frames, joints, derive_seed(seed, 5));
    const ToySample sample = generate_sample(TaskId::HumanObject, derive_seed(seed, 6), coarse,
                                             frames, topo);
    TaskCondition cond;
    cond.task_id = sample.task_id;
    cond.uiv = sample_condition_volume(sample, coarse);
    cond.goal = sample.goal;
    const int timestep = 7;

    // scalar objective: weighted sum of the output field; condition features
    // are recomputed per call so the task embedding row is probed too
    ForwardCache cache;
    const CondFeatures base_feats = encode_condition(cond, params);
    const HeatmapField probe_out = predict_x0(x_t, timestep, base_feats, params, &cache);
    std::vector<double> out_weights;
    out_weights.reserve(probe_out.values.size());
    Rng wrng(derive_seed(seed, 7));
    for (std::size_t i = 0; i < probe_out.values.size(); ++i) {
      out_weights.push_back(uniform_real(wrng, -0.5, 0.5));
    }
    const auto objective = [&](const DenoiserParams& p) {
      const CondFeatures feats = encode_condition(cond, p);
      const HeatmapField out = predict_x0(x_t, timestep, feats, p);
      double sum = 0.0;
      for (std::size_t i = 0; i < out.values.size(); ++i) sum += out_weights[i] * out.values[i];
      return sum;
    };
    ParamTensors grads = backward(params, cache, out_weights);

    FdProbe probe;
    Rng pick(derive_seed(seed, 8));
    const double h = 1e-4;
    const auto refs = tensor_refs(params.tensors);
    const auto grad_refs = tensor_refs(static_cast<const ParamTensors&>(grads));
    for (std::size_t tensor = 0; tensor < refs.size(); ++tensor) {
      std::vector<double>& values = *refs[tensor].data;
      const std::vector<double>& grad = *grad_refs[tensor].data;
      for (int trial = 0; trial < 6; ++trial) {
        const std::size_t idx = static_cast<std::size_t>(
            uniform_int(pick, 0, static_cast<std::int64_t>(values.size()) - 1));
        const double saved = values[idx];
        values[idx] = saved + h;
        const double plus = objective(params);
        values[idx] = saved - h;
        const double minus = objective(params);
        values[idx] = saved;
        probe.compare(grad[idx], (plus - minus) / (2.0 * h));
      }
    }
    worst_denoiser = probe.max_rel;
    std::printf("  %-22s %d probes, max rel err %.3e\n", "denoiser backward", probe.checked,
                probe.max_rel);
    if (probe.max_rel >= 1e-3) throw NumericalError("denoiser gradient check failed");
  }

  std::printf("gradcheck passed (loss %.3e, denoiser %.3e)\n", worst_loss, worst_denoiser);
  return 0;
}

// ---------------------------------------------------------------- export-ply

int run_export_ply(const std::string& volume_path, const std::string& motion_path, int frame,
                   const std::string& out_path) {
  if (volume_path.empty() && motion_path.empty()) {
    throw InvariantError("need --volume and/or --motion");
  }
  std::optional<SemanticVolume> volume;
  std::optional<MotionSequence> motion;
  if (!volume_path.empty()) {
    volume = read_volume(volume_path);
    if (frame >= 0) {
      if (frame >= volume->frames) throw InvariantError("frame index out of range");
      SemanticVolume single(volume->spec, 1);
      const auto src = volume->frame(frame);
      std::copy(src.begin(), src.end(), single.labels.begin());
      volume = std::move(single);
    }
  }
  if (!motion_path.empty()) motion = read_motion(motion_path).motion;
  export_ply(out_path, volume ? &*volume : nullptr, motion ? &*motion : nullptr);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic voxel motion toolkit"};
  app.require_subcommand(1);

  ConfigArgs vox_cfg, enc_cfg, dec_cfg, gen_cfg, train_cfg, smp_cfg, ev_cfg;

  auto* vox = app.add_subcommand("voxelize", "rasterize a motion file into a label volume");
  std::string vox_motion, vox_out, vox_entity = "human";
  int vox_samples = 40;
  vox->add_option("--motion", vox_motion, "input .uim")->required();
  vox->add_option("--out", vox_out, "output .uiv")->required();
  vox->add_option("--entity", vox_entity, "class label to write")->capture_default_str();
  vox->add_option("--samples-per-bone", vox_samples, "surface samples per bone")
      ->capture_default_str();
  vox_cfg.attach(vox);

  auto* enc = app.add_subcommand("encode", "encode a motion file into a heatmap field");
  std::string enc_motion, enc_out;
  enc->add_option("--motion", enc_motion, "input .uim")->required();
  enc->add_option("--out", enc_out, "output .uhf")->required();
  enc_cfg.attach(enc);

  auto* dec = app.add_subcommand("decode", "decode a heatmap field back into motion");
  std::string dec_field, dec_out;
  dec->add_option("--field", dec_field, "input .uhf")->required();
  dec->add_option("--out", dec_out, "output .uim")->required();
  dec_cfg.attach(dec);

  auto* gen = app.add_subcommand("gen-data", "generate procedural interaction samples");
  std::string gen_task, gen_out_dir;
  int gen_count = 1;
  gen->add_option("--task", gen_task, "reach, goalwalk, approach, or compound")->required();
  gen->add_option("--count", gen_count, "samples to generate")->capture_default_str();
  gen->add_option("--out-dir", gen_out_dir, "output directory")->required();
  gen_cfg.attach(gen);

  auto* train = app.add_subcommand("train", "train a denoiser");
  std::string train_out, train_data_dir, train_log;
  int train_count = 512;
  train->add_option("--out", train_out, "output checkpoint .uck")->required();
  train->add_option("--data-dir", train_data_dir, "directory of generated samples");
  train->add_option("--count", train_count, "samples to self-generate when no --data-dir")
      ->capture_default_str();
  train->add_option("--log", train_log, "loss log json (default <out>.log.json)");
  train_cfg.attach(train);

  auto* smp = app.add_subcommand("sample", "sample motions from a trained denoiser");
  std::string smp_model, smp_task, smp_out_dir;
  int smp_count = 1;
  bool smp_fields = false;
  smp->add_option("--model", smp_model, "checkpoint .uck")->required();
  smp->add_option("--task", smp_task, "reach, goalwalk, approach, or compound")->required();
  smp->add_option("--count", smp_count, "motions to sample")->capture_default_str();
  smp->add_option("--out-dir", smp_out_dir, "output directory")->required();
  smp->add_flag("--fields", smp_fields, "also write the raw heatmap fields");
  smp_cfg.attach(smp);

  auto* ev = app.add_subcommand("eval", "score predicted motions against ground truth");
  std::string ev_pred_dir, ev_gt_dir, ev_out;
  int ev_ffd_dim = 8;
  ev->add_option("--pred-dir", ev_pred_dir, "directory of predicted .uim files")->required();
  ev->add_option("--gt-dir", ev_gt_dir, "directory from gen-data")->required();
  ev->add_option("--out", ev_out, "write the report as json");
  ev->add_option("--ffd-dim", ev_ffd_dim, "feature dimension for the distribution distance")
      ->capture_default_str();
  ev_cfg.attach(ev);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  std::uint64_t grad_seed = 0;
  grad->add_option("--seed", grad_seed, "probe seed")->capture_default_str();

  auto* ply = app.add_subcommand("export-ply", "export a colored point cloud for inspection");
  std::string ply_volume, ply_motion, ply_out;
  int ply_frame = -1;
  ply->add_option("--volume", ply_volume, "input .uiv");
  ply->add_option("--motion", ply_motion, "input .uim (joint trajectory points)");
  ply->add_option("--frame", ply_frame, "volume frame to keep, -1 for all");
  ply->add_option("--out", ply_out, "output .ply")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (vox->parsed()) {
      return run_voxelize(vox_cfg.resolve(), vox_motion, vox_out, vox_entity, vox_samples);
    }
    if (enc->parsed()) return run_encode(enc_cfg.resolve(), enc_motion, enc_out);
    if (dec->parsed()) return run_decode(dec_cfg.resolve(), dec_field, dec_out);
    if (gen->parsed()) return run_gen_data(gen_cfg.resolve(), gen_task, gen_count, gen_out_dir);
    if (train->parsed()) {
      return run_train(train_cfg.resolve(), train_out, train_data_dir, train_count, train_log,
                       train_cfg.mix_opt->count() > 0);
    }
    if (smp->parsed()) {
      return run_sample(smp_cfg.resolve(), smp_model, smp_task, smp_count, smp_out_dir,
                        smp_fields);
    }
    if (ev->parsed()) return run_eval(ev_cfg.resolve(), ev_pred_dir, ev_gt_dir, ev_out, ev_ffd_dim);
    if (grad->parsed()) return run_gradcheck(grad_seed);
    if (ply->parsed()) return run_export_ply(ply_volume, ply_motion, ply_frame, ply_out);
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantError& e) {
    std::cerr << "invariant error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
