#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "voxmotion/geometry.hpp"
#include "voxmotion/volume.hpp"

namespace voxmotion {

enum class FieldMode : std::uint8_t {
  Raw = 0,     // unconstrained values (diffusion state, network output)
  Target = 1,  // nonnegative, each (t,k) channel sums to 1
};

/// Per-joint spatial distributions over the grid, stored t-major then k, h, w, d.
struct HeatmapField {
  VolumeSpec spec;
  int frames = 0;  // T
  int joints = 0;  // K
  FieldMode mode = FieldMode::Raw;
  std::vector<double> values;

  HeatmapField() = default;
  HeatmapField(const VolumeSpec& s, int t, int k, FieldMode m)
      : spec(s), frames(t), joints(k), mode(m),
        values(static_cast<std::size_t>(t) * k * s.voxel_count(), 0.0) {}

  std::size_t channel_size() const { return spec.voxel_count(); }
  std::size_t channel_count() const { return static_cast<std::size_t>(frames) * joints; }

  std::span<double> channel(int t, int k) {
    return {values.data() + (static_cast<std::size_t>(t) * joints + k) * channel_size(),
            channel_size()};
  }
  std::span<const double> channel(int t, int k) const {
    return {values.data() + (static_cast<std::size_t>(t) * joints + k) * channel_size(),
            channel_size()};
  }

  bool same_shape(const HeatmapField& other) const {
    return spec == other.spec && frames == other.frames && joints == other.joints;
  }

  /// Raw: finite values. Target: additionally nonnegative with channel sums
  /// within 1e-6 of 1. Throws InvariantError.
  void validate() const;
};

struct EncodeStats {
  int out_of_grid = 0;               // channels emitted as uniform fallbacks
  std::vector<double> lattice_sums;  // per channel, before renormalization (0 when uniform)
};

/// Gaussian amplitude normalizer (2*pi*sigma^2)^{3/2}: multiplying a TARGET
/// channel by it brings the peak near 1, which is the space diffusion runs in.
double amplitude_scale(double sigma);

/// Isotropic Gaussian around each joint, measured in continuous voxel-index
/// space with standard deviation `sigma` voxels, evaluated at voxel centers
/// and renormalized to sum exactly 1 per channel. A joint more than 3 sigma
/// outside the index box (or with a vanishing lattice sum) yields the uniform
/// channel and counts in stats.out_of_grid.
HeatmapField encode_motion(const MotionSequence& motion, const VolumeSpec& spec, double sigma,
                           EncodeStats* stats = nullptr);

/// Clamp negatives to zero and divide each channel by its clamped sum;
/// channels whose clamped sum falls below 1e-8 become uniform instead, so the
/// division is always safe. Output is Target mode and idempotent.
HeatmapField normalize(const HeatmapField& raw);

/// Multiplies every value in place and drops the field to Raw mode.
void scale_values(HeatmapField& field, double factor);

/// First-moment decode state shared by the forward pass and its adjoint.
struct DecodeCache {
  MotionSequence joints;
  std::vector<double> channel_sums;   // clamped sums per channel
  std::vector<std::uint8_t> uniform;  // 1 where the fallback fired
};

/// Ratio-form soft-argmax over clamped values: for each channel,
/// j = sum(max(v,0) * voxel_center) / sum(max(v,0)). Invariant to positive
/// scaling, so it accepts Raw fields directly; on Target fields it reproduces
/// sum(P * center). Channels with no positive mass decode to the grid centroid.
DecodeCache decode_clamped(const HeatmapField& field);

/// Joint positions only (the common read path).
MotionSequence decode_expectation(const HeatmapField& field);

/// Chain rule through decode_clamped: accumulates dL/dvalues into grad given
/// dL/djoints (one 3-vector per (t,k), frame-major). Zero-mass channels have
/// zero gradient. grad must match field.values in size.
void accumulate_decode_gradient(const HeatmapField& field, const DecodeCache& cache,
                                std::span<const Eigen::Vector3d> joint_grads,
                                std::span<double> grad);

}  // namespace voxmotion
