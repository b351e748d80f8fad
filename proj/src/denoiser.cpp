#include "voxmotion/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>

#include "voxmotion/error.hpp"

namespace voxmotion {

const char* task_name(TaskId id) {
  switch (id) {
    case TaskId::HumanHuman: return "human_human";
    case TaskId::HumanObject: return "human_object";
    case TaskId::HumanScene: return "human_scene";
    case TaskId::Compound: return "compound";
  }
  throw InvariantError("unknown task id");
}

TaskId parse_task(const std::string& name) {
  for (int i = 0; i < kTaskCount; ++i) {
    const TaskId id = static_cast<TaskId>(i);
    if (name == task_name(id)) return id;
  }
  throw FormatError("unknown task name: " + name);
}

void DenoiserConfig::validate() const {
  spec.validate();
  if (frames < 1 || joints < 1) throw InvariantError("config needs frames and joints >= 1");
  if (trunk_dim < 1) throw InvariantError("trunk grid edge must be positive");
  if (width < 1) throw InvariantError("trunk width must be positive");
  if (embed_dim < 2 || embed_dim % 2 != 0) throw InvariantError("embed_dim must be even, >= 2");
  for (int a = 0; a < 3; ++a) {
    if (spec.dims[a] % trunk_dim != 0) {
      throw InvariantError("grid dims must be divisible by the trunk grid edge");
    }
    if (spec.dims[a] % 4 != 0) {
      throw InvariantError("grid dims must be divisible by 4 for pyramid pooling");
    }
  }
}

std::array<NamedTensor, 9> tensor_refs(ParamTensors& t) {
  return {{{"task_embed", &t.task_embed},
           {"time_proj", &t.time_proj},
           {"cond_proj", &t.cond_proj},
           {"in_weight", &t.in_weight},
           {"in_bias", &t.in_bias},
           {"hidden_weight", &t.hidden_weight},
           {"hidden_bias", &t.hidden_bias},
           {"out_weight", &t.out_weight},
           {"out_bias", &t.out_bias}}};
}

std::array<ConstNamedTensor, 9> tensor_refs(const ParamTensors& t) {
  return {{{"task_embed", &t.task_embed},
           {"time_proj", &t.time_proj},
           {"cond_proj", &t.cond_proj},
           {"in_weight", &t.in_weight},
           {"in_bias", &t.in_bias},
           {"hidden_weight", &t.hidden_weight},
           {"hidden_bias", &t.hidden_bias},
           {"out_weight", &t.out_weight},
           {"out_bias", &t.out_bias}}};
}

namespace {

std::array<std::size_t, 9> tensor_sizes(const DenoiserConfig& c) {
  const std::size_t width = static_cast<std::size_t>(c.width);
  const std::size_t pooled = static_cast<std::size_t>(c.pooled_dim());
  const std::size_t embed = static_cast<std::size_t>(c.embed_dim);
  const std::size_t cond = static_cast<std::size_t>(c.cond_dim());
  return {static_cast<std::size_t>(kTaskCount) * embed,
          width * embed,
          width * cond,
          width * pooled,
          width,
          width * width,
          width,
          pooled * width,
          pooled};
}

}  // namespace

ParamTensors zero_tensors(const DenoiserConfig& config) {
  ParamTensors t;
  const auto sizes = tensor_sizes(config);
  const auto refs = tensor_refs(t);
  for (std::size_t i = 0; i < refs.size(); ++i) refs[i].data->assign(sizes[i], 0.0);
  return t;
}

std::size_t param_count(const DenoiserConfig& config) {
  const auto sizes = tensor_sizes(config);
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  return total;
}

void DenoiserParams::validate() const {
  config.validate();
  const auto sizes = tensor_sizes(config);
  const auto refs = tensor_refs(tensors);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].data->size() != sizes[i]) {
      throw InvariantError(std::string("tensor shape mismatch: ") + refs[i].name);
    }
    for (double x : *refs[i].data) {
      if (!std::isfinite(x)) {
        throw InvariantError(std::string("non-finite value in tensor ") + refs[i].name);
      }
    }
  }
  if (!opt.m.empty() || !opt.v.empty()) {
    const std::size_t n = param_count(config);
    if (opt.m.size() != n || opt.v.size() != n) {
      throw InvariantError("optimizer moment shape mismatch");
    }
  }
}

DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed) {
  config.validate();
  DenoiserParams p;
  p.config = config;
  p.tensors = zero_tensors(config);
  Rng rng(seed);

  auto fill = [&rng](std::vector<double>& t, double scale) {
    for (double& x : t) x = scale * standard_normal(rng);
  };
  fill(p.tensors.task_embed, 1.0);
  fill(p.tensors.time_proj, 1.0 / std::sqrt(static_cast<double>(config.embed_dim)));
  fill(p.tensors.cond_proj, 1.0 / std::sqrt(static_cast<double>(config.cond_dim())));
  fill(p.tensors.in_weight, 1.0 / std::sqrt(static_cast<double>(config.pooled_dim())));
  fill(p.tensors.hidden_weight, 1.0 / std::sqrt(static_cast<double>(config.width)));
  fill(p.tensors.out_weight, 1.0 / std::sqrt(static_cast<double>(config.width)));
  return p;
}

namespace {

constexpr std::array<int, 3> kPyramidScales{4, 2, 1};

std::vector<double> pooled_label_stats(const SemanticVolume& uiv) {
  std::vector<double> stats(73 * 3, 0.0);
  const auto& dims = uiv.spec.dims;
  const double inv_frames = uiv.frames > 0 ? 1.0 / uiv.frames : 0.0;
  for (int t = 0; t < uiv.frames; ++t) {
    for (int h = 0; h < dims[0]; ++h) {
      for (int w = 0; w < dims[1]; ++w) {
        for (int d = 0; d < dims[2]; ++d) {
          const std::uint8_t label = uiv.at(t, h, w, d);
          if (label == kEmptyLabel) continue;
          const int channel = label - 1;
          int base = 0;
          for (int s : kPyramidScales) {
            const int ch = h * s / dims[0];
            const int cw = w * s / dims[1];
            const int cd = d * s / dims[2];
            const int cell = (ch * s + cw) * s + cd;
            const double cell_voxels = static_cast<double>(dims[0] / s) * (dims[1] / s) *
                                       (dims[2] / s);
            stats[static_cast<std::size_t>((base + cell) * 3 + channel)] +=
                inv_frames / cell_voxels;
            base += s * s * s;
          }
        }
      }
    }
  }
  return stats;
}

std::vector<double> timestep_embedding(int timestep, int embed_dim) {
  std::vector<double> te(static_cast<std::size_t>(embed_dim));
  const int half = embed_dim / 2;
  for (int m = 0; m < half; ++m) {
    const double freq = std::pow(10000.0, -static_cast<double>(m) / half);
    te[static_cast<std::size_t>(2 * m)] = std::sin(timestep * freq);
    te[static_cast<std::size_t>(2 * m + 1)] = std::cos(timestep * freq);
  }
  return te;
}

// y += W x with W row-major [rows x cols]
void matvec_add(std::span<const double> w, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = y.size();
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// x_grad += W^T y_grad
void matvec_t_add(std::span<const double> w, std::span<const double> y_grad,
                  std::span<double> x_grad) {
  const std::size_t rows = y_grad.size();
  const std::size_t cols = x_grad.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    const double* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) x_grad[c] += row[c] * g;
  }
}

// W_grad += y_grad x^T
void outer_add(std::span<const double> y_grad, std::span<const double> x,
               std::span<double> w_grad) {
  const std::size_t rows = y_grad.size();
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    double* row = w_grad.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
  }
}

struct TrunkGeom {
  std::array<int, 3> fine;
  int td = 0;
  std::array<int, 3> factor;
  std::size_t trunk_voxels() const {
    return static_cast<std::size_t>(td) * td * td;
  }
};

TrunkGeom trunk_geometry(const DenoiserConfig& c) {
  TrunkGeom g;
  g.fine = c.spec.dims;
  g.td = c.trunk_dim;
  for (int a = 0; a < 3; ++a) g.factor[a] = c.spec.dims[a] / c.trunk_dim;
  return g;
}

// mean over each factor^3 block of the fine channel
void pool_channel(const TrunkGeom& g, std::span<const double> fine, std::span<double> coarse) {
  const double inv = 1.0 / (static_cast<double>(g.factor[0]) * g.factor[1] * g.factor[2]);
  std::fill(coarse.begin(), coarse.end(), 0.0);
  for (int h = 0; h < g.fine[0]; ++h) {
    const int ch = h / g.factor[0];
    for (int w = 0; w < g.fine[1]; ++w) {
      const int cw = w / g.factor[1];
      const std::size_t fine_row = (static_cast<std::size_t>(h) * g.fine[1] + w) * g.fine[2];
      const std::size_t coarse_row = (static_cast<std::size_t>(ch) * g.td + cw) * g.td;
      for (int d = 0; d < g.fine[2]; ++d) {
        coarse[coarse_row + static_cast<std::size_t>(d / g.factor[2])] += fine[fine_row + d] * inv;
      }
    }
  }
}

struct AxisTap {
  int lo = 0;
  int hi = 0;
  double w_hi = 0.0;  // weight on hi; lo gets 1 - w_hi
};

// fine center f maps to coarse coordinate (f + 0.5)/factor - 0.5, clamped
std::vector<AxisTap> axis_taps(int fine, int factor, int td) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(fine));
  for (int f = 0; f < fine; ++f) {
    double c = (f + 0.5) / factor - 0.5;
    c = std::clamp(c, 0.0, static_cast<double>(td - 1));
    const int lo = static_cast<int>(std::floor(c));
    taps[static_cast<std::size_t>(f)].lo = lo;
    taps[static_cast<std::size_t>(f)].hi = std::min(lo + 1, td - 1);
    taps[static_cast<std::size_t>(f)].w_hi = c - lo;
  }
  return taps;
}

struct UpsampleTaps {
  std::array<std::vector<AxisTap>, 3> axis;
};

UpsampleTaps make_taps(const TrunkGeom& g) {
  UpsampleTaps taps;
  for (int a = 0; a < 3; ++a) taps.axis[a] = axis_taps(g.fine[a], g.factor[a], g.td);
  return taps;
}

void upsample_channel(const TrunkGeom& g, const UpsampleTaps& taps, std::span<const double> coarse,
                      std::span<double> fine) {
  for (int h = 0; h < g.fine[0]; ++h) {
    const AxisTap& th = taps.axis[0][static_cast<std::size_t>(h)];
    for (int w = 0; w < g.fine[1]; ++w) {
      const AxisTap& tw = taps.axis[1][static_cast<std::size_t>(w)];
      const std::size_t row = (static_cast<std::size_t>(h) * g.fine[1] + w) * g.fine[2];
      for (int d = 0; d < g.fine[2]; ++d) {
        const AxisTap& td_tap = taps.axis[2][static_cast<std::size_t>(d)];
        double acc = 0.0;
        for (int bh = 0; bh < 2; ++bh) {
          const int ih = bh ? th.hi : th.lo;
          const double wh = bh ? th.w_hi : 1.0 - th.w_hi;
          if (wh == 0.0) continue;
          for (int bw = 0; bw < 2; ++bw) {
            const int iw = bw ? tw.hi : tw.lo;
            const double ww = bw ? tw.w_hi : 1.0 - tw.w_hi;
            if (ww == 0.0) continue;
            const std::size_t base = (static_cast<std::size_t>(ih) * g.td + iw) * g.td;
            const double along_d = coarse[base + td_tap.lo] * (1.0 - td_tap.w_hi) +
                                   coarse[base + td_tap.hi] * td_tap.w_hi;
            acc += wh * ww * along_d;
          }
        }
        fine[row + d] = acc;
      }
    }
  }
}

void upsample_adjoint_channel(const TrunkGeom& g, const UpsampleTaps& taps,
                              std::span<const double> fine_grad, std::span<double> coarse_grad) {
  for (int h = 0; h < g.fine[0]; ++h) {
    const AxisTap& th = taps.axis[0][static_cast<std::size_t>(h)];
    for (int w = 0; w < g.fine[1]; ++w) {
      const AxisTap& tw = taps.axis[1][static_cast<std::size_t>(w)];
      const std::size_t row = (static_cast<std::size_t>(h) * g.fine[1] + w) * g.fine[2];
      for (int d = 0; d < g.fine[2]; ++d) {
        const double g_fine = fine_grad[row + d];
        if (g_fine == 0.0) continue;
        const AxisTap& td_tap = taps.axis[2][static_cast<std::size_t>(d)];
        for (int bh = 0; bh < 2; ++bh) {
          const int ih = bh ? th.hi : th.lo;
          const double wh = bh ? th.w_hi : 1.0 - th.w_hi;
          if (wh == 0.0) continue;
          for (int bw = 0; bw < 2; ++bw) {
            const int iw = bw ? tw.hi : tw.lo;
            const double ww = bw ? tw.w_hi : 1.0 - tw.w_hi;
            if (ww == 0.0) continue;
            const std::size_t base = (static_cast<std::size_t>(ih) * g.td + iw) * g.td;
            coarse_grad[base + td_tap.lo] += g_fine * wh * ww * (1.0 - td_tap.w_hi);
            if (td_tap.w_hi != 0.0) {
              coarse_grad[base + td_tap.hi] += g_fine * wh * ww * td_tap.w_hi;
            }
          }
        }
      }
    }
  }
}

}  // namespace

CondFeatures encode_condition(const TaskCondition& cond, const DenoiserParams& params) {
  if (!(cond.uiv.spec == params.config.spec)) {
    throw InvariantError("condition volume grid must match the model grid");
  }
  cond.uiv.validate();
  CondFeatures out;
  out.task_index = static_cast<int>(cond.task_id);
  out.values = pooled_label_stats(cond.uiv);
  out.values.reserve(static_cast<std::size_t>(params.config.cond_dim()));
  const std::size_t embed = static_cast<std::size_t>(params.config.embed_dim);
  const double* row = params.tensors.task_embed.data() + out.task_index * embed;
  out.values.insert(out.values.end(), row, row + embed);
  const Eigen::Vector3d goal = cond.goal.value_or(Eigen::Vector3d::Zero());
  out.values.insert(out.values.end(), {goal.x(), goal.y(), goal.z()});
  return out;
}

HeatmapField predict_x0(const HeatmapField& x_i, int timestep, const CondFeatures& cond,
                        const DenoiserParams& params, ForwardCache* cache) {
  const DenoiserConfig& c = params.config;
  if (!(x_i.spec == c.spec) || x_i.frames != c.frames || x_i.joints != c.joints) {
    throw InvariantError("input field shape does not match the model config");
  }
  if (cond.values.size() != static_cast<std::size_t>(c.cond_dim())) {
    throw InvariantError("condition feature length does not match the model config");
  }
  const TrunkGeom geom = trunk_geometry(c);
  const std::size_t trunk_voxels = geom.trunk_voxels();
  const std::size_t channels = x_i.channel_count();

  std::vector<double> pooled(static_cast<std::size_t>(c.pooled_dim()));
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const int t = static_cast<int>(ch) / c.joints;
    const int k = static_cast<int>(ch) % c.joints;
    pool_channel(geom, x_i.channel(t, k),
                 std::span<double>(pooled.data() + ch * trunk_voxels, trunk_voxels));
  }

  const std::vector<double> te = timestep_embedding(timestep, c.embed_dim);

  const std::size_t width = static_cast<std::size_t>(c.width);
  std::vector<double> h0(width, 0.0);
  matvec_add(params.tensors.in_weight, pooled, h0);
  matvec_add(params.tensors.time_proj, te, h0);
  matvec_add(params.tensors.cond_proj, cond.values, h0);
  for (std::size_t r = 0; r < width; ++r) h0[r] += params.tensors.in_bias[r];

  std::vector<double> a1(width);
  for (std::size_t r = 0; r < width; ++r) a1[r] = std::tanh(h0[r]);

  std::vector<double> h1(width, 0.0);
  matvec_add(params.tensors.hidden_weight, a1, h1);
  for (std::size_t r = 0; r < width; ++r) h1[r] += params.tensors.hidden_bias[r];

  std::vector<double> a2(width);
  for (std::size_t r = 0; r < width; ++r) a2[r] = std::tanh(h1[r]);

  std::vector<double> head(static_cast<std::size_t>(c.pooled_dim()), 0.0);
  matvec_add(params.tensors.out_weight, a2, head);
  for (std::size_t r = 0; r < head.size(); ++r) head[r] += params.tensors.out_bias[r];

  HeatmapField out(c.spec, c.frames, c.joints, FieldMode::Raw);
  const UpsampleTaps taps = make_taps(geom);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const int t = static_cast<int>(ch) / c.joints;
    const int k = static_cast<int>(ch) % c.joints;
    upsample_channel(geom, taps,
                     std::span<const double>(head.data() + ch * trunk_voxels, trunk_voxels),
                     out.channel(t, k));
  }

  if (cache) {
    cache->pooled = std::move(pooled);
    cache->t_embed = te;
    cache->cond = cond.values;
    cache->task_index = cond.task_index;
    cache->a1 = std::move(a1);
    cache->a2 = std::move(a2);
  }
  return out;
}

ParamTensors backward(const DenoiserParams& params, const ForwardCache& cache,
                      std::span<const double> output_grad) {
  const DenoiserConfig& c = params.config;
  const TrunkGeom geom = trunk_geometry(c);
  const std::size_t trunk_voxels = geom.trunk_voxels();
  const std::size_t channels = static_cast<std::size_t>(c.frames) * c.joints;
  const std::size_t fine_voxels = c.spec.voxel_count();
  if (output_grad.size() != channels * fine_voxels) {
    throw InvariantError("output gradient size does not match the model config");
  }

  ParamTensors g = zero_tensors(c);
  const UpsampleTaps taps = make_taps(geom);

  std::vector<double> head_grad(static_cast<std::size_t>(c.pooled_dim()), 0.0);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    upsample_adjoint_channel(
        geom, taps,
        std::span<const double>(output_grad.data() + ch * fine_voxels, fine_voxels),
        std::span<double>(head_grad.data() + ch * trunk_voxels, trunk_voxels));
  }

  const std::size_t width = static_cast<std::size_t>(c.width);

  // head: out = W_out a2 + b_out
  outer_add(head_grad, cache.a2, g.out_weight);
  for (std::size_t r = 0; r < head_grad.size(); ++r) g.out_bias[r] += head_grad[r];
  std::vector<double> a2_grad(width, 0.0);
  matvec_t_add(params.tensors.out_weight, head_grad, a2_grad);

  std::vector<double> h1_grad(width);
  for (std::size_t r = 0; r < width; ++r) {
    h1_grad[r] = a2_grad[r] * (1.0 - cache.a2[r] * cache.a2[r]);
  }

  outer_add(h1_grad, cache.a1, g.hidden_weight);
  for (std::size_t r = 0; r < width; ++r) g.hidden_bias[r] += h1_grad[r];
  std::vector<double> a1_grad(width, 0.0);
  matvec_t_add(params.tensors.hidden_weight, h1_grad, a1_grad);

  std::vector<double> h0_grad(width);
  for (std::size_t r = 0; r < width; ++r) {
    h0_grad[r] = a1_grad[r] * (1.0 - cache.a1[r] * cache.a1[r]);
  }

  outer_add(h0_grad, cache.pooled, g.in_weight);
  outer_add(h0_grad, cache.t_embed, g.time_proj);
  outer_add(h0_grad, cache.cond, g.cond_proj);
  for (std::size_t r = 0; r < width; ++r) g.in_bias[r] += h0_grad[r];

  // the task embedding enters through its slice of the condition features
  const std::size_t embed = static_cast<std::size_t>(c.embed_dim);
  const std::size_t embed_off = 73 * 3;
  std::vector<double> cond_grad(static_cast<std::size_t>(c.cond_dim()), 0.0);
  matvec_t_add(params.tensors.cond_proj, h0_grad, cond_grad);
  double* embed_row = g.task_embed.data() + static_cast<std::size_t>(cache.task_index) * embed;
  for (std::size_t e = 0; e < embed; ++e) embed_row[e] += cond_grad[embed_off + e];

  return g;
}

void adam_update(DenoiserParams& params, const ParamTensors& grads, double lr, double beta1,
                 double beta2, double eps) {
  const std::size_t n = param_count(params.config);
  if (params.opt.m.empty()) params.opt.m.assign(n, 0.0);
  if (params.opt.v.empty()) params.opt.v.assign(n, 0.0);
  if (params.opt.m.size() != n || params.opt.v.size() != n) {
    throw InvariantError("optimizer moment shape mismatch");
  }
  params.opt.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(params.opt.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(params.opt.step));

  auto p_refs = tensor_refs(params.tensors);
  auto g_refs = tensor_refs(grads);
  std::size_t off = 0;
  for (std::size_t i = 0; i < p_refs.size(); ++i) {
    std::vector<double>& p = *p_refs[i].data;
    const std::vector<double>& gr = *g_refs[i].data;
    if (gr.size() != p.size()) {
      throw InvariantError(std::string("gradient shape mismatch: ") + p_refs[i].name);
    }
    for (std::size_t j = 0; j < p.size(); ++j, ++off) {
      const double g = gr[j];
      params.opt.m[off] = beta1 * params.opt.m[off] + (1.0 - beta1) * g;
      params.opt.v[off] = beta2 * params.opt.v[off] + (1.0 - beta2) * g * g;
      const double m_hat = params.opt.m[off] / bc1;
      const double v_hat = params.opt.v[off] / bc2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

MixSampler::MixSampler(std::span<const TrainItem> items, std::array<int, 3> ratio) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    const int task = static_cast<int>(items[i].cond.task_id);
    if (task < 3) pools_[static_cast<std::size_t>(task)].push_back(static_cast<int>(i));
  }
  for (int task = 0; task < 3; ++task) {
    if (ratio[static_cast<std::size_t>(task)] < 0) throw InvariantError("mix ratio must be >= 0");
    if (ratio[static_cast<std::size_t>(task)] > 0 && pools_[static_cast<std::size_t>(task)].empty()) {
      throw InvariantError(std::string("no items for task ") +
                           task_name(static_cast<TaskId>(task)));
    }
    for (int r = 0; r < ratio[static_cast<std::size_t>(task)]; ++r) cycle_.push_back(task);
  }
  if (cycle_.empty()) throw InvariantError("mix ratio must select at least one task");
}

int MixSampler::draw(Rng& rng) {
  const int task = cycle_[cursor_ % cycle_.size()];
  ++cursor_;
  const std::vector<int>& pool = pools_[static_cast<std::size_t>(task)];
  return pool[static_cast<std::size_t>(
      uniform_int(rng, 0, static_cast<std::int64_t>(pool.size()) - 1))];
}

LossReport train_step(std::span<const TrainItem> batch, const SkeletonTopology& topo,
                      DenoiserParams& params, const DiffusionSchedule& sched,
                      const LossWeights& weights, double lr, Rng& rng) {
  if (batch.empty()) throw InvariantError("training batch must be nonempty");
  const DenoiserConfig& c = params.config;

  ParamTensors grads = zero_tensors(c);
  LossReport mean;
  HeatmapField noise(c.spec, c.frames, c.joints, FieldMode::Raw);

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainItem& item = batch[b];
    const int i = static_cast<int>(uniform_int(rng, 1, sched.steps));
    fill_standard_normal(rng, noise.values);
    const HeatmapField x_i = forward_noise(item.x0, i, noise, sched);

    const CondFeatures cond = encode_condition(item.cond, params);
    ForwardCache cache;
    const HeatmapField pred = predict_x0(x_i, i, cond, params, &cache);

    const LossReport r = total_loss(pred, item.x0, item.motion, topo, weights, true);
    if (!std::isfinite(r.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at batch item " << b << " (timestep " << i << "): rec=" << r.rec
          << " pos=" << r.pos << " vel=" << r.vel << " sk=" << r.sk << " ori=" << r.ori;
      throw NumericalError(msg.str());
    }

    const ParamTensors item_grads = backward(params, cache, r.field_grad);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    auto acc = tensor_refs(grads);
    auto add = tensor_refs(item_grads);
    for (std::size_t t = 0; t < acc.size(); ++t) {
      std::vector<double>& dst = *acc[t].data;
      const std::vector<double>& src = *add[t].data;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j] * inv_batch;
    }

    mean.total += r.total * inv_batch;
    mean.rec += r.rec * inv_batch;
    mean.pos += r.pos * inv_batch;
    mean.vel += r.vel * inv_batch;
    mean.sk += r.sk * inv_batch;
    mean.ori += r.ori * inv_batch;
  }

  adam_update(params, grads, lr);
  return mean;
}

double linear_decay_lr(double base, std::int64_t step, std::int64_t total_steps) {
  if (total_steps < 1) throw InvariantError("total steps must be positive");
  if (step < 0 || step >= total_steps) throw InvariantError("step out of range");
  return base * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

std::vector<LossReport> train_loop(std::span<const TrainItem> dataset,
                                   const SkeletonTopology& topo, DenoiserParams& params,
                                   const DiffusionSchedule& sched, const LossWeights& weights,
                                   const TrainOptions& opts,
                                   const std::function<void(int, const LossReport&)>& on_step) {
  if (opts.steps < 1 || opts.batch < 1) throw InvariantError("steps and batch must be positive");
  MixSampler sampler(dataset, opts.mix);
  Rng rng(opts.seed);

  std::vector<LossReport> history;
  history.reserve(static_cast<std::size_t>(opts.steps));
  std::vector<TrainItem> batch;
  for (int s = 0; s < opts.steps; ++s) {
    batch.clear();
    for (int b = 0; b < opts.batch; ++b) {
      batch.push_back(dataset[static_cast<std::size_t>(sampler.draw(rng))]);
    }
    const double lr = linear_decay_lr(opts.lr, s, opts.steps);
    const LossReport r = train_step(batch, topo, params, sched, weights, lr, rng);
    history.push_back(r);
    if (on_step) on_step(s, r);
  }
  return history;
}

DenoiseFn make_denoise_fn(const DenoiserParams& params, const TaskCondition& cond) {
  const CondFeatures features = encode_condition(cond, params);
  return [&params, features](const HeatmapField& x, int timestep) {
    return predict_x0(x, timestep, features, params, nullptr);
  };
}

}  // namespace voxmotion
