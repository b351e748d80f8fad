#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <stdexcept>

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

namespace py = pybind11;
using namespace voxmotion;

namespace {

py::array_t<double> motion_to_array(const MotionSequence& m) {
  py::array_t<double> out({m.frames, m.joints, 3});
  auto buf = out.mutable_unchecked<3>();
  for (int t = 0; t < m.frames; ++t) {
    for (int k = 0; k < m.joints; ++k) {
      const Eigen::Vector3d& p = m.at(t, k);
      buf(t, k, 0) = p.x();
      buf(t, k, 1) = p.y();
      buf(t, k, 2) = p.z();
    }
  }
  return out;
}

MotionSequence motion_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr,
                                 double fps) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) {
    throw InvariantError("motion array must have shape (frames, joints, 3)");
  }
  MotionSequence m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)), fps);
  auto buf = arr.unchecked<3>();
  for (int t = 0; t < m.frames; ++t) {
    for (int k = 0; k < m.joints; ++k) {
      m.at(t, k) = {buf(t, k, 0), buf(t, k, 1), buf(t, k, 2)};
    }
  }
  m.validate();
  return m;
}

py::array_t<double> field_to_array(const HeatmapField& f) {
  py::array_t<double> out(
      {f.frames, f.joints, f.spec.dims[0], f.spec.dims[1], f.spec.dims[2]});
  std::memcpy(out.mutable_data(), f.values.data(), f.values.size() * sizeof(double));
  return out;
}

void field_set_values(HeatmapField& f,
                      py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
  if (static_cast<std::size_t>(arr.size()) != f.values.size()) {
    throw InvariantError("value array size does not match the field shape");
  }
  std::memcpy(f.values.data(), arr.data(), f.values.size() * sizeof(double));
}

py::array_t<std::uint8_t> volume_to_array(const SemanticVolume& v) {
  py::array_t<std::uint8_t> out(
      {v.frames, v.spec.dims[0], v.spec.dims[1], v.spec.dims[2]});
  std::memcpy(out.mutable_data(), v.labels.data(), v.labels.size());
  return out;
}

Eigen::MatrixXd features_of(const std::vector<MotionSequence>& samples,
                            const SkeletonTopology& topo, int dim, std::uint64_t seed) {
  return motion_features(samples, topo, dim, seed);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "semantic voxel interaction representation core";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<InvariantError>(m, "InvariantError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  // ---- geometry
  py::enum_<EntityClass>(m, "EntityClass")
      .value("Human", EntityClass::Human)
      .value("Object", EntityClass::Object)
      .value("Scene", EntityClass::Scene);

  py::class_<NamedJoints>(m, "NamedJoints")
      .def_readonly("root", &NamedJoints::root)
      .def_readonly("lhip", &NamedJoints::lhip)
      .def_readonly("rhip", &NamedJoints::rhip)
      .def_readonly("lfoot", &NamedJoints::lfoot)
      .def_readonly("rfoot", &NamedJoints::rfoot)
      .def_readonly("lhand", &NamedJoints::lhand)
      .def_readonly("rhand", &NamedJoints::rhand)
      .def_readonly("head", &NamedJoints::head);

  py::class_<SkeletonTopology>(m, "SkeletonTopology")
      .def_readonly("joint_count", &SkeletonTopology::joint_count)
      .def_readonly("joint_names", &SkeletonTopology::joint_names)
      .def_readonly("parent", &SkeletonTopology::parent)
      .def_readonly("named", &SkeletonTopology::named)
      .def("validate", &SkeletonTopology::validate);

  m.def("default_topology", &default_topology);
  m.def("default_rest_pose", &default_rest_pose);

  py::class_<MotionSequence>(m, "MotionSequence")
      .def(py::init([](py::array_t<double, py::array::c_style | py::array::forcecast> arr,
                       double fps) { return motion_from_array(arr, fps); }),
           py::arg("positions"), py::arg("fps") = 10.0)
      .def_readonly("frames", &MotionSequence::frames)
      .def_readonly("joints", &MotionSequence::joints)
      .def_readonly("fps", &MotionSequence::fps)
      .def_property_readonly("positions", &motion_to_array)
      .def("validate", &MotionSequence::validate);

  // ---- volume
  py::class_<VolumeSpec>(m, "VolumeSpec")
      .def(py::init<>())
      .def(py::init([](std::array<int, 3> dims, std::array<double, 3> pitch,
                       std::array<double, 3> origin) {
             VolumeSpec s;
             s.dims = dims;
             s.pitch = pitch;
             s.origin = origin;
             s.validate();
             return s;
           }),
           py::arg("dims"), py::arg("pitch"), py::arg("origin"))
      .def_readwrite("dims", &VolumeSpec::dims)
      .def_readwrite("pitch", &VolumeSpec::pitch)
      .def_readwrite("origin", &VolumeSpec::origin)
      .def("voxel_count", &VolumeSpec::voxel_count)
      .def("validate", &VolumeSpec::validate)
      .def("__eq__", [](const VolumeSpec& a, const VolumeSpec& b) { return a == b; });

  m.def("world_to_voxel", &world_to_voxel, py::arg("point"), py::arg("spec"));
  m.def("voxel_to_world", &voxel_to_world, py::arg("index"), py::arg("spec"));

  py::class_<SemanticVolume>(m, "SemanticVolume")
      .def_readonly("spec", &SemanticVolume::spec)
      .def_readonly("frames", &SemanticVolume::frames)
      .def_property_readonly("labels", &volume_to_array)
      .def("validate", &SemanticVolume::validate);

  // ---- heatmap
  py::enum_<FieldMode>(m, "FieldMode")
      .value("Raw", FieldMode::Raw)
      .value("Target", FieldMode::Target);

  py::class_<HeatmapField>(m, "HeatmapField")
      .def(py::init<const VolumeSpec&, int, int, FieldMode>(), py::arg("spec"),
           py::arg("frames"), py::arg("joints"), py::arg("mode") = FieldMode::Raw)
      .def_readonly("spec", &HeatmapField::spec)
      .def_readonly("frames", &HeatmapField::frames)
      .def_readonly("joints", &HeatmapField::joints)
      .def_readwrite("mode", &HeatmapField::mode)
      .def_property("values", &field_to_array, &field_set_values)
      .def("validate", &HeatmapField::validate);

  m.def("amplitude_scale", &amplitude_scale, py::arg("sigma"));
  m.def(
      "encode_motion",
      [](const MotionSequence& motion, const VolumeSpec& spec, double sigma) {
        return encode_motion(motion, spec, sigma);
      },
      py::arg("motion"), py::arg("spec"), py::arg("sigma"));
  m.def("scale_values", &scale_values, py::arg("field"), py::arg("factor"));
  m.def("decode_expectation", &decode_expectation, py::arg("field"));

  // ---- losses
  py::class_<LossWeights>(m, "LossWeights")
      .def(py::init<>())
      .def_readwrite("pos", &LossWeights::pos)
      .def_readwrite("vel", &LossWeights::vel)
      .def_readwrite("sk", &LossWeights::sk)
      .def_readwrite("ori", &LossWeights::ori);

  py::class_<LossReport>(m, "LossReport")
      .def_readonly("total", &LossReport::total)
      .def_readonly("rec", &LossReport::rec)
      .def_readonly("pos", &LossReport::pos)
      .def_readonly("vel", &LossReport::vel)
      .def_readonly("sk", &LossReport::sk)
      .def_readonly("ori", &LossReport::ori);

  m.def("total_loss", &total_loss, py::arg("pred"), py::arg("target"), py::arg("gt"),
        py::arg("topo"), py::arg("weights") = LossWeights{}, py::arg("with_grad") = false);

  // ---- diffusion
  py::class_<DiffusionSchedule>(m, "DiffusionSchedule")
      .def_readonly("steps", &DiffusionSchedule::steps)
      .def_readonly("alpha_bar", &DiffusionSchedule::alpha_bar);

  m.def("make_schedule", &make_schedule, py::arg("n"), py::arg("beta_start") = 1e-4,
        py::arg("beta_end") = 0.02);
  m.def("ddim_timesteps", &ddim_timesteps, py::arg("n"), py::arg("step_count"));
  m.def("forward_noise", &forward_noise, py::arg("x0"), py::arg("i"), py::arg("noise"),
        py::arg("sched"));
  m.def("ddim_step", &ddim_step, py::arg("x_i"), py::arg("x0_hat"), py::arg("i"),
        py::arg("i_prev"), py::arg("sched"));
  m.def("sample", &sample, py::arg("denoise"), py::arg("spec"), py::arg("frames"),
        py::arg("joints"), py::arg("sched"), py::arg("step_count"), py::arg("seed"));

  // ---- tasks and synthetic data
  py::enum_<TaskId>(m, "TaskId")
      .value("HumanHuman", TaskId::HumanHuman)
      .value("HumanObject", TaskId::HumanObject)
      .value("HumanScene", TaskId::HumanScene)
      .value("Compound", TaskId::Compound);

  m.def("task_name", &task_name, py::arg("id"));
  m.def("parse_task", &parse_task, py::arg("name"));

  py::class_<ContactLabels>(m, "ContactLabels")
      .def_readonly("lhand", &ContactLabels::lhand)
      .def_readonly("rhand", &ContactLabels::rhand);

  py::class_<TaskCondition>(m, "TaskCondition")
      .def_readonly("task_id", &TaskCondition::task_id)
      .def_readonly("uiv", &TaskCondition::uiv)
      .def_readonly("goal", &TaskCondition::goal);

  py::class_<ToySample>(m, "ToySample")
      .def_readonly("task_id", &ToySample::task_id)
      .def_readonly("gt_motion", &ToySample::gt_motion)
      .def_readonly("contact", &ToySample::contact)
      .def_readonly("goal", &ToySample::goal)
      .def_readonly("seed", &ToySample::seed)
      .def("validate", &ToySample::validate, py::arg("spec"), py::arg("topo"));

  m.def("generate_sample", &generate_sample, py::arg("task"), py::arg("seed"), py::arg("spec"),
        py::arg("frames"), py::arg("topo"));
  m.def("sample_condition_volume", &sample_condition_volume, py::arg("sample"), py::arg("spec"));
  m.def("min_jerk", &min_jerk, py::arg("s"));
  m.def("derive_seed", &derive_seed, py::arg("base"), py::arg("index"));

  // ---- denoiser and training
  py::class_<DenoiserConfig>(m, "DenoiserConfig")
      .def_readonly("spec", &DenoiserConfig::spec)
      .def_readonly("frames", &DenoiserConfig::frames)
      .def_readonly("joints", &DenoiserConfig::joints)
      .def_readonly("trunk_dim", &DenoiserConfig::trunk_dim)
      .def_readonly("width", &DenoiserConfig::width)
      .def_readonly("embed_dim", &DenoiserConfig::embed_dim)
      .def("cond_dim", &DenoiserConfig::cond_dim)
      .def("pooled_dim", &DenoiserConfig::pooled_dim)
      .def("validate", &DenoiserConfig::validate);

  py::class_<DenoiserParams>(m, "DenoiserParams")
      .def_readonly("config", &DenoiserParams::config)
      .def("validate", &DenoiserParams::validate);

  m.def("init_params", &init_params, py::arg("config"), py::arg("seed"));
  m.def("param_count", &param_count, py::arg("config"));
  m.def(
      "predict_x0",
      [](const DenoiserParams& params, const HeatmapField& x_i, int timestep,
         const TaskCondition& cond) {
        const CondFeatures feats = encode_condition(cond, params);
        return predict_x0(x_i, timestep, feats, params);
      },
      py::arg("params"), py::arg("x_i"), py::arg("timestep"), py::arg("cond"));
  // the returned closure keeps a reference to params, so tie their lifetimes
  m.def("make_denoise_fn", &make_denoise_fn, py::arg("params"), py::arg("cond"),
        py::keep_alive<0, 1>());

  py::class_<TrainItem>(m, "TrainItem")
      .def_readonly("x0", &TrainItem::x0)
      .def_readonly("motion", &TrainItem::motion)
      .def_readonly("cond", &TrainItem::cond);

  m.def("make_train_item", &make_train_item, py::arg("sample"), py::arg("spec"),
        py::arg("sigma"));

  py::class_<TrainOptions>(m, "TrainOptions")
      .def(py::init<>())
      .def_readwrite("steps", &TrainOptions::steps)
      .def_readwrite("batch", &TrainOptions::batch)
      .def_readwrite("lr", &TrainOptions::lr)
      .def_readwrite("seed", &TrainOptions::seed)
      .def_readwrite("mix", &TrainOptions::mix);

  m.def(
      "train_loop",
      [](const std::vector<TrainItem>& dataset, const SkeletonTopology& topo,
         DenoiserParams& params, const DiffusionSchedule& sched, const LossWeights& weights,
         const TrainOptions& opts) {
        return train_loop(dataset, topo, params, sched, weights, opts);
      },
      py::arg("dataset"), py::arg("topo"), py::arg("params"), py::arg("sched"),
      py::arg("weights"), py::arg("opts"));

  // ---- metrics
  py::class_<ContactScores>(m, "ContactScores")
      .def_readonly("precision", &ContactScores::precision)
      .def_readonly("recall", &ContactScores::recall)
      .def_readonly("accuracy", &ContactScores::accuracy)
      .def_readonly("f1", &ContactScores::f1);

  m.def("mpjpe", &mpjpe, py::arg("pred"), py::arg("gt"));
  m.def("t_root", &t_root, py::arg("pred"), py::arg("gt"), py::arg("topo"));
  m.def("foot_sliding", &foot_sliding, py::arg("pred"), py::arg("topo"),
        py::arg("floor_y") = 0.0, py::arg("height_threshold") = kFootHeightThreshold);
  m.def(
      "contact_metrics",
      [](const MotionSequence& pred, const SkeletonTopology& topo,
         const std::vector<Eigen::Vector3d>& object_points, const ContactLabels& labels,
         double threshold) {
        return contact_metrics(pred, topo, object_points, labels, threshold);
      },
      py::arg("pred"), py::arg("topo"), py::arg("object_points"), py::arg("labels"),
      py::arg("threshold") = kContactThreshold);
  m.def("goal_distance", &goal_distance, py::arg("pred"), py::arg("goal"), py::arg("topo"));
  m.def(
      "diversity",
      [](const std::vector<MotionSequence>& samples, const SkeletonTopology& topo,
         std::uint64_t seed) { return diversity(samples, topo, seed); },
      py::arg("samples"), py::arg("topo"), py::arg("seed") = 0);
  m.def("motion_features", &features_of, py::arg("samples"), py::arg("topo"),
        py::arg("dim") = 32, py::arg("seed") = 0);
  m.def("frechet_feature_distance", &frechet_feature_distance, py::arg("features_a"),
        py::arg("features_b"));

  // ---- io
  py::class_<MotionFile>(m, "MotionFile")
      .def(py::init<>())
      .def_readwrite("fps", &MotionFile::fps)
      .def_readwrite("topo", &MotionFile::topo)
      .def_readwrite("motion", &MotionFile::motion);

  m.def("write_motion", &write_motion, py::arg("path"), py::arg("file"));
  m.def("read_motion", &read_motion, py::arg("path"));
  m.def("write_volume", &write_volume, py::arg("path"), py::arg("volume"));
  m.def("read_volume", &read_volume, py::arg("path"));
  m.def("write_field", &write_field, py::arg("path"), py::arg("field"));
  m.def("read_field", &read_field, py::arg("path"));
  m.def("write_checkpoint", &write_checkpoint, py::arg("path"), py::arg("params"));
  m.def("read_checkpoint", &read_checkpoint, py::arg("path"));
  m.def(
      "export_ply",
      [](const std::filesystem::path& path, const SemanticVolume* volume,
         const MotionSequence* motion) { export_ply(path, volume, motion); },
      py::arg("path"), py::arg("volume") = nullptr, py::arg("motion") = nullptr);

  // ---- config
  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("profile", &RunConfig::profile)
      .def_readwrite("spec", &RunConfig::spec)
      .def_readwrite("sigma", &RunConfig::sigma)
      .def_readwrite("frames", &RunConfig::frames)
      .def_readwrite("joints", &RunConfig::joints)
      .def_readwrite("diffusion_steps", &RunConfig::diffusion_steps)
      .def_readwrite("ddim_steps", &RunConfig::ddim_steps)
      .def_readwrite("weights", &RunConfig::weights)
      .def_readwrite("train_steps", &RunConfig::train_steps)
      .def_readwrite("batch", &RunConfig::batch)
      .def_readwrite("lr", &RunConfig::lr)
      .def_readwrite("trunk_dim", &RunConfig::trunk_dim)
      .def_readwrite("width", &RunConfig::width)
      .def_readwrite("embed_dim", &RunConfig::embed_dim)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("mix", &RunConfig::mix)
      .def_readwrite("fps", &RunConfig::fps)
      .def("validate", &RunConfig::validate)
      .def("__eq__", [](const RunConfig& a, const RunConfig& b) { return a == b; });

  m.def("full_profile", &full_profile);
  m.def("desk_profile", &desk_profile);
  m.def("profile_by_name", &profile_by_name, py::arg("name"));
  m.def("denoiser_config", &denoiser_config, py::arg("config"));
  m.def("config_to_json", &config_to_json, py::arg("config"));
  m.def("config_from_json", &config_from_json, py::arg("text"));
  m.def("save_config", &save_config, py::arg("path"), py::arg("config"));
  m.def("load_config", &load_config, py::arg("path"));
}
