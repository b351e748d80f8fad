#include "voxmotion/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxmotion/error.hpp"

namespace voxmotion {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw FormatError("cannot open for reading: " + path.string());
  return in;
}

[[noreturn]] void malformed(const std::filesystem::path& path, const std::string& what) {
  throw FormatError(path.string() + ": " + what);
}

std::string fixed9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

void expect_keyword(std::istream& in, const char* keyword, const std::filesystem::path& path) {
  std::string token;
  if (!(in >> token) || token != keyword) {
    malformed(path, std::string("expected '") + keyword + "'");
  }
}

template <typename T>
T read_value(std::istream& in, const char* what, const std::filesystem::path& path) {
  T v{};
  if (!(in >> v)) malformed(path, std::string("bad ") + what);
  return v;
}

// binary helpers; files are little endian, matching the host layout
template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::filesystem::path& path, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) malformed(path, std::string("truncated ") + what);
  return v;
}

void put_magic(std::ostream& out, const char magic[5]) { out.write(magic, 4); }

void expect_magic(std::istream& in, const char magic[5], const std::filesystem::path& path) {
  char buf[4] = {};
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0) {
    malformed(path, std::string("not a ") + magic + " file");
  }
}

void expect_eof(std::istream& in, const std::filesystem::path& path) {
  char extra;
  if (in.read(&extra, 1)) malformed(path, "trailing bytes after payload");
}

int checked_dim(std::uint32_t v, const std::filesystem::path& path, const char* what) {
  if (v == 0 || v > (1u << 20)) malformed(path, std::string("unreasonable ") + what);
  return static_cast<int>(v);
}

void put_spec_header(std::ostream& out, const VolumeSpec& spec, int frames) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(frames));
  for (int a = 0; a < 3; ++a) put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.dims[a]));
  for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(spec.pitch[a]));
  for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(spec.origin[a]));
}

std::pair<VolumeSpec, int> take_spec_header(std::istream& in, const std::filesystem::path& path) {
  const int frames = checked_dim(take<std::uint32_t>(in, path, "frame count"), path, "frame count");
  VolumeSpec spec;
  for (int a = 0; a < 3; ++a) {
    spec.dims[a] = checked_dim(take<std::uint32_t>(in, path, "grid dim"), path, "grid dim");
  }
  for (int a = 0; a < 3; ++a) spec.pitch[a] = take<float>(in, path, "pitch");
  for (int a = 0; a < 3; ++a) spec.origin[a] = take<float>(in, path, "origin");
  for (int a = 0; a < 3; ++a) {
    if (!(spec.pitch[a] > 0.0f) || !std::isfinite(spec.pitch[a]) ||
        !std::isfinite(spec.origin[a])) {
      malformed(path, "bad pitch or origin");
    }
  }
  if (static_cast<std::uint64_t>(frames) * spec.voxel_count() > (1ull << 32)) {
    malformed(path, "payload too large");
  }
  return {spec, frames};
}

json config_json(const DenoiserConfig& c, std::int64_t opt_step) {
  json j;
  j["dims"] = c.spec.dims;
  j["pitch"] = c.spec.pitch;
  j["origin"] = c.spec.origin;
  j["frames"] = c.frames;
  j["joints"] = c.joints;
  j["trunk_dim"] = c.trunk_dim;
  j["width"] = c.width;
  j["embed_dim"] = c.embed_dim;
  j["opt_step"] = opt_step;
  return j;
}

void put_tensor(std::ostream& out, const char* name, const std::vector<double>& data) {
  const std::string n = name;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(n.size()));
  out.write(n.data(), static_cast<std::streamsize>(n.size()));
  put<std::uint64_t>(out, data.size());
  for (double v : data) put<float>(out, static_cast<float>(v));
}

}  // namespace

void write_motion(const std::filesystem::path& path, const MotionFile& file) {
  file.topo.validate();
  file.motion.validate();
  if (file.motion.joints != file.topo.joint_count) {
    throw InvariantError("motion joint count does not match the skeleton");
  }
  if (!(file.fps > 0.0)) throw InvariantError("fps must be positive");
  for (const std::string& name : file.topo.joint_names) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw InvariantError("joint names must be nonempty without whitespace");
    }
  }

  std::ofstream out = open_out(path, std::ios::out);
  out << "UIM1\n";
  out << "fps " << fixed9(file.fps) << "\n";
  out << "joints " << file.topo.joint_count << "\n";
  out << "frames " << file.motion.frames << "\n";
  out << "names";
  for (const std::string& name : file.topo.joint_names) out << " " << name;
  out << "\nparents";
  for (int p : file.topo.parent) out << " " << p;
  const NamedJoints& n = file.topo.named;
  out << "\nnamed " << n.root << " " << n.lhip << " " << n.rhip << " " << n.lfoot << " "
      << n.rfoot << " " << n.lhand << " " << n.rhand << " " << n.head << "\n";
  out << "positions\n";
  for (int t = 0; t < file.motion.frames; ++t) {
    for (int k = 0; k < file.motion.joints; ++k) {
      const Eigen::Vector3d& p = file.motion.at(t, k);
      out << fixed9(p.x()) << " " << fixed9(p.y()) << " " << fixed9(p.z()) << "\n";
    }
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

MotionFile read_motion(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::in);
  expect_keyword(in, "UIM1", path);

  MotionFile file;
  expect_keyword(in, "fps", path);
  file.fps = read_value<double>(in, "fps", path);
  if (!(file.fps > 0.0) || !std::isfinite(file.fps)) malformed(path, "bad fps");

  expect_keyword(in, "joints", path);
  const int joints = read_value<int>(in, "joint count", path);
  expect_keyword(in, "frames", path);
  const int frames = read_value<int>(in, "frame count", path);
  if (joints < 1 || joints > 1024 || frames < 1 || frames > 1 << 20) {
    malformed(path, "unreasonable joint or frame count");
  }

  file.topo.joint_count = joints;
  expect_keyword(in, "names", path);
  file.topo.joint_names.resize(static_cast<std::size_t>(joints));
  for (std::string& name : file.topo.joint_names) name = read_value<std::string>(in, "joint name", path);
  expect_keyword(in, "parents", path);
  file.topo.parent.resize(static_cast<std::size_t>(joints));
  for (int& p : file.topo.parent) p = read_value<int>(in, "parent index", path);
  expect_keyword(in, "named", path);
  NamedJoints& n = file.topo.named;
  for (int* slot : {&n.root, &n.lhip, &n.rhip, &n.lfoot, &n.rfoot, &n.lhand, &n.rhand, &n.head}) {
    *slot = read_value<int>(in, "named joint index", path);
  }

  file.topo.bones = bones_from_parents(file.topo.parent);
  file.topo.capsule_radii.assign(file.topo.bones.size(), 0.05);
  for (std::size_t b = 0; b < file.topo.bones.size(); ++b) {
    if (file.topo.bones[b].child == n.head) file.topo.capsule_radii[b] = 0.10;
  }
  file.topo.validate();

  expect_keyword(in, "positions", path);
  file.motion = MotionSequence(frames, joints);
  for (auto& p : file.motion.positions) {
    p.x() = read_value<double>(in, "position", path);
    p.y() = read_value<double>(in, "position", path);
    p.z() = read_value<double>(in, "position", path);
  }
  std::string extra;
  if (in >> extra) malformed(path, "trailing content after positions");
  file.motion.validate();
  return file;
}

void write_volume(const std::filesystem::path& path, const SemanticVolume& volume) {
  volume.validate();
  std::ofstream out = open_out(path, std::ios::binary);
  put_magic(out, "UIV1");
  put_spec_header(out, volume.spec, volume.frames);
  out.write(reinterpret_cast<const char*>(volume.labels.data()),
            static_cast<std::streamsize>(volume.labels.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

SemanticVolume read_volume(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  expect_magic(in, "UIV1", path);
  const auto [spec, frames] = take_spec_header(in, path);

  SemanticVolume volume(spec, frames);
  in.read(reinterpret_cast<char*>(volume.labels.data()),
          static_cast<std::streamsize>(volume.labels.size()));
  if (!in) malformed(path, "truncated label payload");
  expect_eof(in, path);
  for (std::uint8_t b : volume.labels) {
    if (b > 3) malformed(path, "label byte above 3");
  }
  return volume;
}

void write_field(const std::filesystem::path& path, const HeatmapField& field) {
  field.validate();
  std::ofstream out = open_out(path, std::ios::binary);
  put_magic(out, "UHF1");
  put_spec_header(out, field.spec, field.frames);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(field.joints));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(field.mode));
  for (double v : field.values) put<float>(out, static_cast<float>(v));
  if (!out) throw FormatError("write failed: " + path.string());
}

HeatmapField read_field(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  expect_magic(in, "UHF1", path);
  const auto [spec, frames] = take_spec_header(in, path);
  const int joints = checked_dim(take<std::uint32_t>(in, path, "joint count"), path, "joint count");
  const std::uint8_t mode = take<std::uint8_t>(in, path, "mode byte");
  if (mode > 1) malformed(path, "unknown field mode");

  HeatmapField field(spec, frames, joints, static_cast<FieldMode>(mode));
  for (double& v : field.values) v = take<float>(in, path, "field value");
  expect_eof(in, path);
  field.validate();
  return field;
}

void write_checkpoint(const std::filesystem::path& path, const DenoiserParams& params) {
  params.validate();
  std::ofstream out = open_out(path, std::ios::binary);
  put_magic(out, "UCK1");

  const std::string config = config_json(params.config, params.opt.step).dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));

  const auto refs = tensor_refs(params.tensors);
  const bool with_moments = !params.opt.m.empty();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(refs.size() + (with_moments ? 2 : 0)));
  for (const ConstNamedTensor& ref : refs) put_tensor(out, ref.name, *ref.data);
  if (with_moments) {
    put_tensor(out, "adam_m", params.opt.m);
    put_tensor(out, "adam_v", params.opt.v);
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

DenoiserParams read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  expect_magic(in, "UCK1", path);

  const std::uint32_t config_len = take<std::uint32_t>(in, path, "config length");
  if (config_len > (1u << 20)) malformed(path, "unreasonable config block");
  std::string config_text(config_len, '\0');
  in.read(config_text.data(), config_len);
  if (!in) malformed(path, "truncated config block");

  DenoiserParams params;
  try {
    const json j = json::parse(config_text);
    params.config.spec.dims = j.at("dims").get<std::array<int, 3>>();
    params.config.spec.pitch = j.at("pitch").get<std::array<double, 3>>();
    params.config.spec.origin = j.at("origin").get<std::array<double, 3>>();
    params.config.frames = j.at("frames").get<int>();
    params.config.joints = j.at("joints").get<int>();
    params.config.trunk_dim = j.at("trunk_dim").get<int>();
    params.config.width = j.at("width").get<int>();
    params.config.embed_dim = j.at("embed_dim").get<int>();
    params.opt.step = j.at("opt_step").get<std::int64_t>();
  } catch (const json::exception& e) {
    malformed(path, std::string("bad config block: ") + e.what());
  }
  params.config.validate();
  params.tensors = zero_tensors(params.config);

  const std::uint32_t tensor_count = take<std::uint32_t>(in, path, "tensor count");
  if (tensor_count > 64) malformed(path, "unreasonable tensor count");

  const auto refs = tensor_refs(params.tensors);
  std::vector<bool> seen(refs.size(), false);
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    const std::uint32_t name_len = take<std::uint32_t>(in, path, "tensor name length");
    if (name_len == 0 || name_len > 256) malformed(path, "unreasonable tensor name");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) malformed(path, "truncated tensor name");
    const std::uint64_t count = take<std::uint64_t>(in, path, "tensor size");

    std::vector<double>* target = nullptr;
    std::uint64_t expected = 0;
    if (name == "adam_m" || name == "adam_v") {
      target = name == "adam_m" ? &params.opt.m : &params.opt.v;
      expected = param_count(params.config);
    } else {
      for (std::size_t r = 0; r < refs.size(); ++r) {
        if (name == refs[r].name) {
          if (seen[r]) malformed(path, "duplicate tensor " + name);
          seen[r] = true;
          target = refs[r].data;
          expected = target->size();
          break;
        }
      }
    }
    if (target == nullptr) malformed(path, "unknown tensor " + name);
    if (count != expected) malformed(path, "tensor " + name + " has the wrong shape");

    target->resize(count);
    for (double& v : *target) v = take<float>(in, path, "tensor value");
  }
  for (std::size_t r = 0; r < refs.size(); ++r) {
    if (!seen[r]) malformed(path, std::string("missing tensor ") + refs[r].name);
  }
  if (params.opt.m.size() != params.opt.v.size()) {
    malformed(path, "optimizer moments must come in pairs");
  }
  expect_eof(in, path);
  params.validate();
  return params;
}

void export_ply(const std::filesystem::path& path, const SemanticVolume* volume,
                const MotionSequence* motion) {
  if (volume == nullptr && motion == nullptr) {
    throw InvariantError("point-cloud export needs a volume or a motion");
  }
  if (volume != nullptr) volume->validate();
  if (motion != nullptr) motion->validate();

  struct Vertex {
    Eigen::Vector3d p;
    int r, g, b;
  };
  std::vector<Vertex> vertices;

  if (volume != nullptr) {
    for (int t = 0; t < volume->frames; ++t) {
      for (int h = 0; h < volume->spec.dims[0]; ++h) {
        for (int w = 0; w < volume->spec.dims[1]; ++w) {
          for (int d = 0; d < volume->spec.dims[2]; ++d) {
            const std::uint8_t label = volume->at(t, h, w, d);
            if (label == kEmptyLabel) continue;
            const Eigen::Vector3d center = voxel_to_world({double(h), double(w), double(d)},
                                                          volume->spec);
            switch (label) {
              case 1: vertices.push_back({center, 220, 70, 70}); break;
              case 2: vertices.push_back({center, 70, 190, 90}); break;
              default: vertices.push_back({center, 150, 150, 155}); break;
            }
          }
        }
      }
    }
  }
  if (motion != nullptr) {
    for (const Eigen::Vector3d& p : motion->positions) {
      vertices.push_back({p, 255, 220, 60});
    }
  }

  std::ofstream out = open_out(path, std::ios::out);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (const Vertex& v : vertices) {
    out << fixed9(v.p.x()) << " " << fixed9(v.p.y()) << " " << fixed9(v.p.z()) << " " << v.r
        << " " << v.g << " " << v.b << "\n";
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace voxmotion
