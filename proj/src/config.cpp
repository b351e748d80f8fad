#include "voxmotion/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "voxmotion/error.hpp"

namespace voxmotion {

namespace {

using nlohmann::json;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw InvariantError(std::string(what) + " must be positive and finite");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (profile != "full" && profile != "desk") {
    throw InvariantError("profile must be 'full' or 'desk'");
  }
  spec.validate();
  require_positive(sigma, "sigma");
  require_positive(frames, "frame count");
  require_positive(joints, "joint count");
  require_positive(diffusion_steps, "diffusion step count");
  require_positive(ddim_steps, "ddim step count");
  if (ddim_steps > diffusion_steps) {
    throw InvariantError("ddim steps cannot exceed the schedule length");
  }
  for (double w : {weights.pos, weights.vel, weights.sk, weights.ori}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvariantError("loss weights must be nonnegative and finite");
    }
  }
  require_positive(train_steps, "train step count");
  require_positive(batch, "batch size");
  require_positive(lr, "learning rate");
  require_positive(fps, "fps");
  for (int m : mix) {
    if (m < 0) throw InvariantError("mix ratios must be nonnegative");
  }
  if (mix[0] + mix[1] + mix[2] == 0) throw InvariantError("mix ratios cannot all be zero");
  denoiser_config(*this).validate();
}

RunConfig full_profile() {
  RunConfig c;
  c.profile = "full";
  return c;  // field defaults are the full-scale constants
}

RunConfig desk_profile() {
  RunConfig c;
  c.profile = "desk";
  c.spec.dims = {16, 16, 16};
  c.spec.pitch = {0.15, 0.30, 0.30};
  c.spec.origin = {0.0, -2.4, -2.4};
  c.sigma = 2.0;
  c.frames = 8;
  c.joints = 8;
  c.train_steps = 3000;
  c.batch = 16;
  c.lr = 1e-3;
  c.trunk_dim = 4;
  return c;
}

RunConfig profile_by_name(const std::string& name) {
  if (name == "full") return full_profile();
  if (name == "desk") return desk_profile();
  throw InvariantError("unknown profile: " + name);
}

DenoiserConfig denoiser_config(const RunConfig& config) {
  DenoiserConfig d;
  d.spec = config.spec;
  d.frames = config.frames;
  d.joints = config.joints;
  d.trunk_dim = config.trunk_dim;
  d.width = config.width;
  d.embed_dim = config.embed_dim;
  return d;
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["profile"] = c.profile;
  j["dims"] = c.spec.dims;
  j["pitch"] = c.spec.pitch;
  j["origin"] = c.spec.origin;
  j["sigma"] = c.sigma;
  j["frames"] = c.frames;
  j["joints"] = c.joints;
  j["diffusion_steps"] = c.diffusion_steps;
  j["ddim_steps"] = c.ddim_steps;
  j["w_pos"] = c.weights.pos;
  j["w_vel"] = c.weights.vel;
  j["w_sk"] = c.weights.sk;
  j["w_ori"] = c.weights.ori;
  j["train_steps"] = c.train_steps;
  j["batch"] = c.batch;
  j["lr"] = c.lr;
  j["trunk_dim"] = c.trunk_dim;
  j["width"] = c.width;
  j["embed_dim"] = c.embed_dim;
  j["seed"] = c.seed;
  j["mix"] = c.mix;
  j["fps"] = c.fps;
  return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw FormatError("config must be a JSON object");
    static const std::set<std::string> known = {
        "profile", "dims", "pitch", "origin", "sigma", "frames", "joints",
        "diffusion_steps", "ddim_steps", "w_pos", "w_vel", "w_sk", "w_ori",
        "train_steps", "batch", "lr", "trunk_dim", "width", "embed_dim",
        "seed", "mix", "fps"};
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw FormatError("unknown config key: " + key);
    }
    c.profile = j.at("profile").get<std::string>();
    c.spec.dims = j.at("dims").get<std::array<int, 3>>();
    c.spec.pitch = j.at("pitch").get<std::array<double, 3>>();
    c.spec.origin = j.at("origin").get<std::array<double, 3>>();
    c.sigma = j.at("sigma").get<double>();
    c.frames = j.at("frames").get<int>();
    c.joints = j.at("joints").get<int>();
    c.diffusion_steps = j.at("diffusion_steps").get<int>();
    c.ddim_steps = j.at("ddim_steps").get<int>();
    c.weights.pos = j.at("w_pos").get<double>();
    c.weights.vel = j.at("w_vel").get<double>();
    c.weights.sk = j.at("w_sk").get<double>();
    c.weights.ori = j.at("w_ori").get<double>();
    c.train_steps = j.at("train_steps").get<int>();
    c.batch = j.at("batch").get<int>();
    c.lr = j.at("lr").get<double>();
    c.trunk_dim = j.at("trunk_dim").get<int>();
    c.width = j.at("width").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mix = j.at("mix").get<std::array<int, 3>>();
    c.fps = j.at("fps").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  config.validate();
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << config_to_json(config);
  if (!out) throw FormatError("write failed: " + path.string());
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open for reading: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str());
}

}  // namespace voxmotion
