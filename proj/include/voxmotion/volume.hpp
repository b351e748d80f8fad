#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "voxmotion/geometry.hpp"

namespace voxmotion {

/// Grid axes are ordered (h, w, d) and map to world axes (y, x, z): h runs
/// along height. pitch and origin are stored in grid-axis order, so
/// origin = (floor height, min x, min z).
struct VolumeSpec {
  std::array<int, 3> dims{48, 48, 48};              // H, W, D
  std::array<double, 3> pitch{0.05, 0.10, 0.10};    // meters per voxel, (h, w, d)
  std::array<double, 3> origin{0.0, -2.4, -2.4};    // minimal corner, (h, w, d) axes

  bool operator==(const VolumeSpec&) const = default;

  /// Throws InvariantError unless dims and pitch are positive and finite.
  void validate() const;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
};

/// World (x, y, z) reordered to grid-axis order (y, x, z).
inline Eigen::Vector3d world_to_axis(const Eigen::Vector3d& p) {
  return {p.y(), p.x(), p.z()};
}

/// Grid-axis order (h, w, d) back to world (x, y, z).
inline Eigen::Vector3d axis_to_world(const Eigen::Vector3d& a) {
  return {a[1], a[0], a[2]};
}

/// Continuous voxel index of a world point: (p_axis - origin)/pitch - 0.5 per
/// grid axis. The center of integer voxel (i,j,l) sits at origin + (idx+0.5)*pitch.
Eigen::Vector3d world_to_voxel(const Eigen::Vector3d& p, const VolumeSpec& spec);

/// Inverse of world_to_voxel for continuous indices.
Eigen::Vector3d voxel_to_world(const Eigen::Vector3d& index, const VolumeSpec& spec);

/// Label bytes: 0 empty, 1 human, 2 object, 3 scene (also the wire encoding).
constexpr std::uint8_t kEmptyLabel = 0;

inline std::uint8_t label_of(EntityClass c) { return static_cast<std::uint8_t>(c); }

/// One-hot channels (human, object, scene) for a label byte.
std::array<double, 3> label_one_hot(std::uint8_t label);

/// Per-frame semantic occupancy labels, frame-major then h, w, d.
struct SemanticVolume {
  VolumeSpec spec;
  int frames = 0;
  std::vector<std::uint8_t> labels;

  SemanticVolume() = default;
  SemanticVolume(const VolumeSpec& s, int t)
      : spec(s), frames(t), labels(static_cast<std::size_t>(t) * s.voxel_count(), 0) {}

  std::size_t index(int t, int h, int w, int d) const {
    return ((static_cast<std::size_t>(t) * spec.dims[0] + h) * spec.dims[1] + w) *
               spec.dims[2] + d;
  }
  std::uint8_t& at(int t, int h, int w, int d) { return labels[index(t, h, w, d)]; }
  std::uint8_t at(int t, int h, int w, int d) const { return labels[index(t, h, w, d)]; }

  std::span<const std::uint8_t> frame(int t) const {
    return {labels.data() + static_cast<std::size_t>(t) * spec.voxel_count(), spec.voxel_count()};
  }

  /// Throws InvariantError on size mismatch or label bytes > 3.
  void validate() const;
};

/// Marks the voxel containing each point with the entity's class. Rounding is
/// floor(index + 0.5) per axis; points whose rounded index leaves the grid are
/// dropped. Throws InvariantError on an empty point set.
SemanticVolume rasterize(const EntitySnapshot& entity, const VolumeSpec& spec);

/// Combines single-frame volumes under the priority human > object > scene.
/// Specs must match. The fold per voxel: both labels nonzero keeps the
/// smaller byte (higher priority), otherwise their sum picks the occupied one.
SemanticVolume merge(std::span<const SemanticVolume> volumes);

/// Rasterizes every entity per frame and merges, producing a T-frame volume.
SemanticVolume build_volume_sequence(
    const std::vector<std::vector<EntitySnapshot>>& entities_per_frame, const VolumeSpec& spec);

}  // namespace voxmotion
