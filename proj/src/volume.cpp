#include "voxmotion/volume.hpp"

#include <cmath>

#include "voxmotion/error.hpp"

namespace voxmotion {

void VolumeSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw InvariantError("volume spec: dims must be positive");
    if (!(pitch[a] > 0.0) || !std::isfinite(pitch[a]))
      throw InvariantError("volume spec: pitch must be positive and finite");
    if (!std::isfinite(origin[a])) throw InvariantError("volume spec: origin must be finite");
    if (!std::isfinite(dims[a] * pitch[a]))
      throw InvariantError("volume spec: extents must be finite");
  }
}

Eigen::Vector3d world_to_voxel(const Eigen::Vector3d& p, const VolumeSpec& spec) {
  const Eigen::Vector3d a = world_to_axis(p);
  return {(a[0] - spec.origin[0]) / spec.pitch[0] - 0.5,
          (a[1] - spec.origin[1]) / spec.pitch[1] - 0.5,
          (a[2] - spec.origin[2]) / spec.pitch[2] - 0.5};
}

Eigen::Vector3d voxel_to_world(const Eigen::Vector3d& index, const VolumeSpec& spec) {
  const Eigen::Vector3d a{(index[0] + 0.5) * spec.pitch[0] + spec.origin[0],
                          (index[1] + 0.5) * spec.pitch[1] + spec.origin[1],
                          (index[2] + 0.5) * spec.pitch[2] + spec.origin[2]};
  return axis_to_world(a);
}

std::array<double, 3> label_one_hot(std::uint8_t label) {
  switch (label) {
    case 1: return {1.0, 0.0, 0.0};
    case 2: return {0.0, 1.0, 0.0};
    case 3: return {0.0, 0.0, 1.0};
    case 0: return {0.0, 0.0, 0.0};
    default: throw InvariantError("label byte out of range");
  }
}

void SemanticVolume::validate() const {
  spec.validate();
  if (frames < 1) throw InvariantError("semantic volume: frame count must be >= 1");
  if (labels.size() != static_cast<std::size_t>(frames) * spec.voxel_count())
    throw InvariantError("semantic volume: label storage size mismatch");
  for (std::uint8_t b : labels)
    if (b > 3) throw InvariantError("semantic volume: label byte out of range");
}

SemanticVolume rasterize(const EntitySnapshot& entity, const VolumeSpec& spec) {
  spec.validate();
  entity.validate();
  SemanticVolume vol(spec, 1);
  const std::uint8_t label = label_of(entity.entity_class);
  for (const Eigen::Vector3d& p : entity.points) {
    const Eigen::Vector3d c = world_to_voxel(p, spec);
    const long h = static_cast<long>(std::floor(c[0] + 0.5));
    const long w = static_cast<long>(std::floor(c[1] + 0.5));
    const long d = static_cast<long>(std::floor(c[2] + 0.5));
    if (h < 0 || h >= spec.dims[0] || w < 0 || w >= spec.dims[1] || d < 0 || d >= spec.dims[2])
      continue;
    vol.at(0, static_cast<int>(h), static_cast<int>(w), static_cast<int>(d)) = label;
  }
  return vol;
}

namespace {

inline std::uint8_t combine_labels(std::uint8_t a, std::uint8_t b) {
  return (a != 0 && b != 0) ? std::min(a, b) : static_cast<std::uint8_t>(a + b);
}

}  // namespace

SemanticVolume merge(std::span<const SemanticVolume> volumes) {
  if (volumes.empty()) throw InvariantError("merge: need at least one volume");
  for (const SemanticVolume& v : volumes) {
    if (v.frames != 1) throw InvariantError("merge: expects single-frame volumes");
    if (!(v.spec == volumes.front().spec)) throw InvariantError("merge: spec mismatch");
  }
  SemanticVolume out = volumes.front();
  for (std::size_t i = 1; i < volumes.size(); ++i)
    for (std::size_t v = 0; v < out.labels.size(); ++v)
      out.labels[v] = combine_labels(out.labels[v], volumes[i].labels[v]);
  return out;
}

SemanticVolume build_volume_sequence(
    const std::vector<std::vector<EntitySnapshot>>& entities_per_frame, const VolumeSpec& spec) {
  if (entities_per_frame.empty()) throw InvariantError("build_volume_sequence: need T >= 1 frames");
  SemanticVolume out(spec, static_cast<int>(entities_per_frame.size()));
  const std::size_t stride = spec.voxel_count();
  for (std::size_t t = 0; t < entities_per_frame.size(); ++t) {
    std::vector<SemanticVolume> parts;
    parts.reserve(entities_per_frame[t].size());
    for (const EntitySnapshot& e : entities_per_frame[t]) parts.push_back(rasterize(e, spec));
    if (parts.empty()) continue;  // frame stays empty
    const SemanticVolume merged = merge(parts);
    std::copy(merged.labels.begin(), merged.labels.end(), out.labels.begin() + t * stride);
  }
  return out;
}

}  // namespace voxmotion
