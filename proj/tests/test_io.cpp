#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "voxmotion/config.hpp"
#include "voxmotion/denoiser.hpp"
#include "voxmotion/error.hpp"
#include "voxmotion/io.hpp"
#include "voxmotion/rng.hpp"
#include "voxmotion/synthdata.hpp"

using namespace voxmotion;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() / "voxmotion_io_tests";
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir / name;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void corrupt_byte(const std::filesystem::path& src, const std::filesystem::path& dst,
                  std::size_t offset, char value) {
  std::vector<char> bytes = slurp(src);
  REQUIRE(offset < bytes.size());
  bytes[offset] = value;
  std::ofstream out(dst, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

MotionFile sample_motion_file(std::uint64_t seed) {
  MotionFile file;
  file.fps = 10.0;
  file.topo = default_topology();
  file.motion = MotionSequence(5, file.topo.joint_count);
  Rng rng(seed);
  for (auto& p : file.motion.positions) {
    p = {uniform_real(rng, -2.0, 2.0), uniform_real(rng, 0.0, 2.0), uniform_real(rng, -2.0, 2.0)};
  }
  return file;
}

SemanticVolume sample_volume(std::uint64_t seed) {
  VolumeSpec spec;
  spec.dims = {8, 8, 8};
  spec.pitch = {0.15, 0.30, 0.30};
  spec.origin = {0.0, -1.2, -1.2};
  SemanticVolume vol(spec, 3);
  Rng rng(seed);
  for (auto& b : vol.labels) b = static_cast<std::uint8_t>(uniform_int(rng, 0, 3));
  return vol;
}

DenoiserConfig tiny_config() {
  DenoiserConfig c;
  c.spec.dims = {4, 4, 4};
  c.spec.pitch = {0.15, 0.30, 0.30};
  c.spec.origin = {0.0, -0.6, -0.6};
  c.frames = 2;
  c.joints = 3;
  c.trunk_dim = 2;
  c.width = 8;
  c.embed_dim = 16;
  return c;
}

}  // namespace

TEST_CASE("motion files round trip losslessly") {
  const MotionFile file = sample_motion_file(1);
  const auto path = temp_file("motion.uim");
  write_motion(path, file);
  const MotionFile back = read_motion(path);

  CHECK(back.fps == doctest::Approx(file.fps).epsilon(1e-12));
  CHECK(back.topo.joint_names == file.topo.joint_names);
  CHECK(back.topo.parent == file.topo.parent);
  CHECK(back.topo.named.root == file.topo.named.root);
  CHECK(back.topo.named.head == file.topo.named.head);
  CHECK(back.topo.capsule_radii == file.topo.capsule_radii);
  REQUIRE(back.motion.positions.size() == file.motion.positions.size());
  for (std::size_t i = 0; i < file.motion.positions.size(); ++i) {
    CHECK((back.motion.positions[i] - file.motion.positions[i]).cwiseAbs().maxCoeff() < 1e-6);
  }

  // a second write of the reread data is byte-identical
  const auto path2 = temp_file("motion2.uim");
  write_motion(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("motion reader rejects malformed documents") {
  const auto good = temp_file("motion_good.uim");
  write_motion(good, sample_motion_file(2));

  const auto write_text = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
  };

  const auto bad = temp_file("motion_bad.uim");
  write_text(bad, "XXXX\n");
  CHECK_THROWS_AS(read_motion(bad), FormatError);

  // drop the last position line
  std::ifstream in(good);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  write_text(bad, text.substr(0, text.find_last_of('\n', text.size() - 2)));
  CHECK_THROWS_AS(read_motion(bad), FormatError);

  write_text(bad, text + "stray\n");
  CHECK_THROWS_AS(read_motion(bad), FormatError);

  // named index out of range
  std::string broken = text;
  const auto pos = broken.find("named 0");
  REQUIRE(pos != std::string::npos);
  broken.replace(pos, 7, "named 9");
  write_text(bad, broken);
  CHECK_THROWS_AS(read_motion(bad), InvariantError);

  CHECK_THROWS_AS(read_motion(temp_file("does_not_exist.uim")), FormatError);
}

TEST_CASE("volume files round trip bit-exactly") {
  const SemanticVolume vol = sample_volume(3);
  const auto path = temp_file("volume.uiv");
  write_volume(path, vol);
  const SemanticVolume back = read_volume(path);

  CHECK(back.frames == vol.frames);
  CHECK(back.spec.dims == vol.spec.dims);
  CHECK(back.labels == vol.labels);

  const auto path2 = temp_file("volume2.uiv");
  write_volume(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("volume reader rejects bad magic labels and truncation") {
  const SemanticVolume vol = sample_volume(4);
  const auto good = temp_file("volume_good.uiv");
  write_volume(good, vol);
  const auto bad = temp_file("volume_bad.uiv");

  corrupt_byte(good, bad, 0, 'X');
  CHECK_THROWS_AS(read_volume(bad), FormatError);

  // last payload byte becomes an unknown label
  corrupt_byte(good, bad, slurp(good).size() - 1, 7);
  CHECK_THROWS_AS(read_volume(bad), FormatError);

  std::vector<char> bytes = slurp(good);
  {
    std::ofstream out(bad, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 10));
  }
  CHECK_THROWS_AS(read_volume(bad), FormatError);

  {
    std::ofstream out(bad, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.put(0);
  }
  CHECK_THROWS_AS(read_volume(bad), FormatError);
}

TEST_CASE("field files round trip through the f32 payload") {
  VolumeSpec spec;
  spec.dims = {4, 4, 4};
  spec.pitch = {0.15, 0.30, 0.30};
  spec.origin = {0.0, -0.6, -0.6};
  HeatmapField field(spec, 2, 3, FieldMode::Raw);
  Rng rng(5);
  for (double& v : field.values) v = static_cast<float>(standard_normal(rng));

  const auto path = temp_file("field.uhf");
  write_field(path, field);
  const HeatmapField back = read_field(path);

  CHECK(back.frames == field.frames);
  CHECK(back.joints == field.joints);
  CHECK(back.mode == field.mode);
  CHECK(back.values == field.values);

  const auto path2 = temp_file("field2.uhf");
  write_field(path2, back);
  CHECK(slurp(path) == slurp(path2));

  const auto bad = temp_file("field_bad.uhf");
  // mode byte sits right after the 4-byte magic, 16-byte dims, 24-byte
  // pitch/origin, 4-byte joint count
  corrupt_byte(path, bad, 4 + 16 + 24 + 4, 9);
  CHECK_THROWS_AS(read_field(bad), FormatError);
}

TEST_CASE("checkpoints restore parameters and optimizer state") {
  const DenoiserConfig config = tiny_config();
  DenoiserParams params = init_params(config, 11);
  // f32 storage: quantize in memory first so the round trip is exact
  for (const NamedTensor& ref : tensor_refs(params.tensors)) {
    for (double& v : *ref.data) v = static_cast<float>(v);
  }

  const auto path = temp_file("model.uck");
  write_checkpoint(path, params);
  const DenoiserParams back = read_checkpoint(path);

  CHECK(back.config == config);
  CHECK(back.opt.step == 0);
  CHECK(back.opt.m.empty());
  const auto mine = tensor_refs(params.tensors);
  const auto theirs = tensor_refs(back.tensors);
  for (std::size_t i = 0; i < mine.size(); ++i) {
    CHECK(*mine[i].data == *theirs[i].data);
  }

  // moments appear once the optimizer has run
  params.opt.step = 7;
  params.opt.m.assign(param_count(config), 0.25);
  params.opt.v.assign(param_count(config), 0.5);
  write_checkpoint(path, params);
  const DenoiserParams resumed = read_checkpoint(path);
  CHECK(resumed.opt.step == 7);
  CHECK(resumed.opt.m == params.opt.m);
  CHECK(resumed.opt.v == params.opt.v);

  const auto path2 = temp_file("model2.uck");
  write_checkpoint(path2, resumed);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("checkpoint reader rejects corrupt files") {
  const DenoiserConfig config = tiny_config();
  const DenoiserParams params = init_params(config, 12);
  const auto good = temp_file("model_good.uck");
  write_checkpoint(good, params);
  const auto bad = temp_file("model_bad.uck");

  corrupt_byte(good, bad, 0, 'Z');
  CHECK_THROWS_AS(read_checkpoint(bad), FormatError);

  std::vector<char> bytes = slurp(good);
  {
    std::ofstream out(bad, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(read_checkpoint(bad), FormatError);

  // tamper with a tensor length field: find the first tensor name and break
  // the u64 count that follows it
  const std::string blob(bytes.begin(), bytes.end());
  const auto name_pos = blob.find("task_embed");
  REQUIRE(name_pos != std::string::npos);
  corrupt_byte(good, bad, name_pos + 10, 1);
  CHECK_THROWS_AS(read_checkpoint(bad), FormatError);
}

TEST_CASE("point cloud export lists every occupied voxel and joint") {
  VolumeSpec spec;
  spec.dims = {16, 16, 16};
  spec.pitch = {0.15, 0.30, 0.30};
  spec.origin = {0.0, -2.4, -2.4};
  const ToySample s = gen_reach(6, spec, 4, default_topology());
  const SemanticVolume vol = sample_condition_volume(s, spec);

  std::size_t occupied = 0;
  for (auto b : vol.labels) occupied += b != 0;

  const auto path = temp_file("scene.ply");
  export_ply(path, &vol, &s.gt_motion);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "ply");
  std::size_t vertex_count = 0;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string a, b;
    ls >> a >> b;
    if (a == "element" && b == "vertex") ls >> vertex_count;
  }
  CHECK(vertex_count == occupied + s.gt_motion.positions.size());
  std::size_t body_lines = 0;
  while (std::getline(in, line)) ++body_lines;
  CHECK(body_lines == vertex_count);

  CHECK_THROWS_AS(export_ply(temp_file("empty.ply"), nullptr, nullptr), InvariantError);
}

TEST_CASE("config profiles validate and round trip through JSON") {
  const RunConfig full = full_profile();
  const RunConfig desk = desk_profile();
  CHECK_NOTHROW(full.validate());
  CHECK_NOTHROW(desk.validate());
  CHECK(full.spec.dims[0] == 48);
  CHECK(full.sigma == 3.0);
  CHECK(full.frames == 40);
  CHECK(full.batch == 32);
  CHECK(full.lr == 3e-5);
  CHECK(desk.spec.dims[0] == 16);
  CHECK(desk.frames == 8);
  CHECK(desk.joints == 8);
  CHECK(desk.batch == 16);

  RunConfig tweaked = desk;
  tweaked.seed = 99;
  tweaked.mix = {2, 1, 1};
  tweaked.ddim_steps = 25;
  const RunConfig back = config_from_json(config_to_json(tweaked));
  CHECK(back == tweaked);

  const auto path = temp_file("config.json");
  save_config(path, tweaked);
  CHECK(load_config(path) == tweaked);

  CHECK_THROWS_AS(profile_by_name("huge"), InvariantError);
  CHECK_THROWS_AS(config_from_json("{"), FormatError);
  CHECK_THROWS_AS(config_from_json("{\"bogus\": 1}"), FormatError);

  RunConfig broken = desk;
  broken.ddim_steps = broken.diffusion_steps + 1;
  CHECK_THROWS_AS(broken.validate(), InvariantError);
  broken = desk;
  broken.lr = 0.0;
  CHECK_THROWS_AS(broken.validate(), InvariantError);
}

TEST_CASE("the desk model shape slice matches the trainer expectations") {
  const DenoiserConfig d = denoiser_config(desk_profile());
  CHECK_NOTHROW(d.validate());
  CHECK(d.spec.dims[0] == 16);
  CHECK(d.trunk_dim == 4);
  CHECK(d.frames == 8);
  CHECK(d.joints == 8);
  CHECK(d.cond_dim() == 73 * 3 + 16 + 3);

  const DenoiserConfig f = denoiser_config(full_profile());
  CHECK_NOTHROW(f.validate());
}
