#include "voxmotion/heatmap.hpp"

#include <cmath>
#include <numbers>

#include "voxmotion/error.hpp"

namespace voxmotion {

namespace {
constexpr double kNormalizeEps = 1e-8;
}

void HeatmapField::validate() const {
  spec.validate();
  if (frames < 1 || joints < 1) throw InvariantError("heatmap: T and K must be >= 1");
  if (values.size() != channel_count() * channel_size())
    throw InvariantError("heatmap: value storage size mismatch");
  for (double v : values)
    if (!std::isfinite(v)) throw InvariantError("heatmap: non-finite value");
  if (mode == FieldMode::Target) {
    for (int t = 0; t < frames; ++t)
      for (int k = 0; k < joints; ++k) {
        double sum = 0.0;
        for (double v : channel(t, k)) {
          if (v < 0.0) throw InvariantError("heatmap: negative value in target mode");
          sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
          throw InvariantError("heatmap: target channel sum deviates from 1");
      }
  }
}

double amplitude_scale(double sigma) {
  return std::pow(2.0 * std::numbers::pi * sigma * sigma, 1.5);
}

HeatmapField encode_motion(const MotionSequence& motion, const VolumeSpec& spec, double sigma,
                           EncodeStats* stats) {
  spec.validate();
  motion.validate();
  if (!(sigma > 0.0)) throw InvariantError("encode_motion: sigma must be positive");

  const int H = spec.dims[0];
  const int W = spec.dims[1];
  const int D = spec.dims[2];
  HeatmapField field(spec, motion.frames, motion.joints, FieldMode::Target);
  if (stats) {
    stats->out_of_grid = 0;
    stats->lattice_sums.assign(field.channel_count(), 0.0);
  }

  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  const double peak = std::pow(2.0 * std::numbers::pi * sigma * sigma, -1.5);
  std::vector<double> gh(H), gw(W), gd(D);

  for (int t = 0; t < motion.frames; ++t) {
    for (int k = 0; k < motion.joints; ++k) {
      const Eigen::Vector3d u = world_to_voxel(motion.at(t, k), spec);
      std::span<double> chan = field.channel(t, k);

      bool outside = false;
      for (int a = 0; a < 3; ++a)
        outside = outside || u[a] < -3.0 * sigma || u[a] > spec.dims[a] - 1 + 3.0 * sigma;

      double sum_h = 0.0, sum_w = 0.0, sum_d = 0.0;
      if (!outside) {
        for (int i = 0; i < H; ++i) sum_h += gh[i] = std::exp(-(i - u[0]) * (i - u[0]) * inv_two_sigma2);
        for (int i = 0; i < W; ++i) sum_w += gw[i] = std::exp(-(i - u[1]) * (i - u[1]) * inv_two_sigma2);
        for (int i = 0; i < D; ++i) sum_d += gd[i] = std::exp(-(i - u[2]) * (i - u[2]) * inv_two_sigma2);
      }
      const double lattice = peak * sum_h * sum_w * sum_d;

      if (outside || lattice < 1e-12) {
        const double uniform = 1.0 / static_cast<double>(field.channel_size());
        for (double& v : chan) v = uniform;
        if (stats) ++stats->out_of_grid;
        continue;
      }
      if (stats) stats->lattice_sums[static_cast<std::size_t>(t) * motion.joints + k] = lattice;

      for (int i = 0; i < H; ++i) gh[i] /= sum_h;
      for (int i = 0; i < W; ++i) gw[i] /= sum_w;
      for (int i = 0; i < D; ++i) gd[i] /= sum_d;
      std::size_t v = 0;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const double hw = gh[i] * gw[j];
          for (int l = 0; l < D; ++l) chan[v++] = hw * gd[l];
        }
    }
  }
  return field;
}

HeatmapField normalize(const HeatmapField& raw) {
  HeatmapField out = raw;
  out.mode = FieldMode::Target;
  for (int t = 0; t < out.frames; ++t)
    for (int k = 0; k < out.joints; ++k) {
      std::span<double> chan = out.channel(t, k);
      double sum = 0.0;
      for (double& v : chan) {
        if (!std::isfinite(v)) throw InvariantError("normalize: non-finite value");
        if (v < 0.0) v = 0.0;
        sum += v;
      }
      if (sum < kNormalizeEps) {
        const double uniform = 1.0 / static_cast<double>(chan.size());
        for (double& v : chan) v = uniform;
      } else {
        const double inv = 1.0 / sum;
        for (double& v : chan) v *= inv;
      }
    }
  return out;
}

void scale_values(HeatmapField& field, double factor) {
  for (double& v : field.values) v *= factor;
  field.mode = FieldMode::Raw;
}

DecodeCache decode_clamped(const HeatmapField& field) {
  const int H = field.spec.dims[0];
  const int W = field.spec.dims[1];
  const int D = field.spec.dims[2];

  DecodeCache cache;
  cache.joints = MotionSequence(field.frames, field.joints);
  cache.channel_sums.assign(field.channel_count(), 0.0);
  cache.uniform.assign(field.channel_count(), 0);

  for (int t = 0; t < field.frames; ++t)
    for (int k = 0; k < field.joints; ++k) {
      std::span<const double> chan = field.channel(t, k);
      double sum = 0.0;
      Eigen::Vector3d moment = Eigen::Vector3d::Zero();  // index-space first moment
      std::size_t v = 0;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          for (int l = 0; l < D; ++l, ++v) {
            const double val = chan[v];
            if (val > 0.0) {
              sum += val;
              moment[0] += val * i;
              moment[1] += val * j;
              moment[2] += val * l;
            }
          }

      const std::size_t c = static_cast<std::size_t>(t) * field.joints + k;
      Eigen::Vector3d index;
      if (sum < kNormalizeEps) {
        index = {(H - 1) / 2.0, (W - 1) / 2.0, (D - 1) / 2.0};  // uniform first moment
        cache.uniform[c] = 1;
      } else {
        index = moment / sum;
        cache.channel_sums[c] = sum;
      }
      cache.joints.at(t, k) = voxel_to_world(index, field.spec);
    }
  return cache;
}

MotionSequence decode_expectation(const HeatmapField& field) {
  return decode_clamped(field).joints;
}

void accumulate_decode_gradient(const HeatmapField& field, const DecodeCache& cache,
                                std::span<const Eigen::Vector3d> joint_grads,
                                std::span<double> grad) {
  if (joint_grads.size() != cache.joints.positions.size())
    throw InvariantError("decode gradient: joint gradient count mismatch");
  if (grad.size() != field.values.size())
    throw InvariantError("decode gradient: value gradient size mismatch");

  const int H = field.spec.dims[0];
  const int W = field.spec.dims[1];
  const int D = field.spec.dims[2];

  for (int t = 0; t < field.frames; ++t)
    for (int k = 0; k < field.joints; ++k) {
      const std::size_t c = static_cast<std::size_t>(t) * field.joints + k;
      if (cache.uniform[c]) continue;
      const double sum = cache.channel_sums[c];

      // dL/dindex_a = dL/dworld mapped to axis order, times pitch
      const Eigen::Vector3d g_axis = world_to_axis(joint_grads[c]);
      const Eigen::Vector3d scale{g_axis[0] * field.spec.pitch[0] / sum,
                                  g_axis[1] * field.spec.pitch[1] / sum,
                                  g_axis[2] * field.spec.pitch[2] / sum};
      const Eigen::Vector3d mean = world_to_voxel(cache.joints.at(t, k), field.spec);

      std::span<const double> chan = field.channel(t, k);
      double* g = grad.data() + c * field.channel_size();
      std::size_t v = 0;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          for (int l = 0; l < D; ++l, ++v) {
            if (chan[v] > 0.0)
              g[v] += scale[0] * (i - mean[0]) + scale[1] * (j - mean[1]) + scale[2] * (l - mean[2]);
          }
    }
}

}  // namespace voxmotion
