#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "trackflow/video.hpp"

namespace trackflow {

struct Displacement {
  double dx = 0.0;
  double dy = 0.0;
};

/// Dense displacement from frame t to frame t+1, in pixels.
struct FlowField {
  int t = 0;
  Image dx;
  Image dy;
  /// Set when both source frames were constant and the field was zeroed.
  bool degenerate = false;

  int width() const { return dx.width(); }
  int height() const { return dx.height(); }
};

/// T-1 fields; fields[t] maps frame t onto frame t+1.
struct FlowVolume {
  int width = 0;
  int height = 0;
  int frame_count = 0;
  std::vector<FlowField> fields;

  const FlowField& at(int t) const { return fields.at(static_cast<std::size_t>(t)); }
};

enum class FlowBackend { dis, block_match };

struct FlowConfig {
  FlowBackend backend = FlowBackend::dis;
  int patch_size = 8;
  int patch_stride = 4;
  /// Unset selects floor(log2(min(W, H) / 16)) clamped to [1, 6].
  std::optional<int> pyramid_levels;
  int gradient_descent_iters = 12;
  bool refinement = true;
  int refinement_iters = 5;
  /// Weight of the densified estimate against the 4-neighbour mean in each
  /// smoothing sweep.
  float refinement_data_weight = 4.0f;
  /// Exhaustive search radius for block_match.
  int search_radius = 8;
  bool equalize = false;

  /// Throws BadConfig when the parameters are inconsistent.
  void validate() const;
  int levels_for(int width, int height) const;
};

using FlowProgress = std::function<void(int done, int total)>;

/// Flow between two frames of equal size.
FlowField compute_flow_pair(const Image& from, const Image& to, const FlowConfig& cfg);

FlowVolume compute_flow(const VideoSequence& video, const FlowConfig& cfg,
                        const FlowProgress& progress = {});

/// Bilinear sample of a flow field; coordinates are clamped to the image
/// before interpolation so the function is total.
inline Displacement sample_flow(const FlowField& field, Point2D p) {
  return {field.dx.sample_bilinear(p.x, p.y), field.dy.sample_bilinear(p.x, p.y)};
}

/// Flow cache: little-endian, header {"RPLF", u32 version, u32 T, u32 H,
/// u32 W}, then for t = 0..T-2 the dx plane followed by the dy plane as
/// row-major f32.
inline constexpr std::uint32_t kFlowCacheVersion = 1;

void save_flow_cache(const FlowVolume& flow, const std::filesystem::path& path);
FlowVolume load_flow_cache(const std::filesystem::path& path);

/// Constant-displacement volume, mostly for tests and baselines.
FlowVolume uniform_flow(int width, int height, int frame_count, Displacement d);

}  // namespace trackflow
