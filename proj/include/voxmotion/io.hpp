#pragma once

#include <filesystem>

#include "voxmotion/denoiser.hpp"
#include "voxmotion/geometry.hpp"
#include "voxmotion/heatmap.hpp"
#include "voxmotion/volume.hpp"

namespace voxmotion {

/// Motion clip plus the skeleton it indexes, as stored in "UIM1" text files.
/// Capsule radii are not part of the file; readers rebuild the defaults
/// (0.05 m, 0.10 m for a bone ending at the named head joint).
struct MotionFile {
  double fps = 10.0;
  SkeletonTopology topo;
  MotionSequence motion;
};

/// Text format, one "x y z" line per joint, frame-major, nine decimals.
void write_motion(const std::filesystem::path& path, const MotionFile& file);

/// Throws FormatError on malformed content, InvariantError on inconsistent
/// shapes or indices.
MotionFile read_motion(const std::filesystem::path& path);

/// Binary "UIV1": magic, u32 frame/dim header, f32 pitch and origin, then one
/// label byte per voxel (t-major, then h, w, d).
void write_volume(const std::filesystem::path& path, const SemanticVolume& volume);

/// Rejects wrong magic, truncation, trailing bytes, and labels above 3 with
/// FormatError. pitch/origin are widened from the stored f32.
SemanticVolume read_volume(const std::filesystem::path& path);

/// Binary "UHF1": the UIV1 header plus joint count and a mode byte, then f32
/// values (t-major, then k, h, w, d). Values are quantized to f32.
void write_field(const std::filesystem::path& path, const HeatmapField& field);
HeatmapField read_field(const std::filesystem::path& path);

/// Binary "UCK1" checkpoint: a JSON block holding the model shape, grid, and
/// optimizer step, then named f32 tensors (the nine parameter tensors plus
/// the optimizer moments when present). Loading validates every tensor's
/// length against the stored shape.
void write_checkpoint(const std::filesystem::path& path, const DenoiserParams& params);
DenoiserParams read_checkpoint(const std::filesystem::path& path);

/// ASCII point-cloud export: occupied voxel centers colored by class (human
/// red, object green, scene gray) for every frame, plus joint trajectory
/// points in yellow. Either input may be null.
void export_ply(const std::filesystem::path& path, const SemanticVolume* volume,
                const MotionSequence* motion);

}  // namespace voxmotion
