#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trackflow/flow.hpp"
#include "trackflow/video.hpp"

namespace trackflow {

enum class AnchorOrigin { seed, correction };

/// A user-asserted (frame, position) the track must pass through exactly.
struct Anchor {
  int frame = 0;
  Point2D pos;
  bool visible = true;
  /// Milliseconds since the Unix epoch; 0 when unknown.
  std::int64_t created_at = 0;
  AnchorOrigin origin = AnchorOrigin::correction;

  friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// Forward trace from the left anchor and backward trace from the right one
/// over frames [t0, t1]; index i holds frame t0 + i.
struct PropagationTrace {
  int t0 = 0;
  int t1 = 0;
  std::vector<Point2D> forward;
  std::vector<Point2D> backward;

  /// Blend weight of the backward trace at frame t, affine in t.
  double weight(int t) const { return static_cast<double>(t - t0) / (t1 - t0); }
};

struct SegmentRebuild {
  PropagationTrace trace;
  std::vector<Point2D> points;  // frames [t0, t1]
};

/// Iterative flow lookup from one anchor over every frame of the volume.
std::vector<Point2D> propagate(const FlowVolume& flow, const Anchor& seed);

SegmentRebuild rebuild_segment(const FlowVolume& flow, const Anchor& left, const Anchor& right);

/// Flow-blend reconstruction over all T frames from frame-sorted anchors.
std::vector<Point2D> rebuild_track(const FlowVolume& flow, std::span<const Anchor> anchors);

/// Straight lines between anchors, held constant outside them.
std::vector<Point2D> interpolate_linear(std::span<const Anchor> anchors, int frame_count);

struct CorridorConfig {
  double radius = 16.0;
  double lattice_step = 1.0;
};

struct CorridorPath {
  std::vector<Point2D> points;  // frames [left.frame, right.frame]
  double cost = 0.0;
};

/// Minimum flow-disagreement path between two anchors over a lattice of
/// candidates around the straight line joining them. Among equal-cost paths
/// the lexicographically smallest position sequence wins.
CorridorPath interpolate_corridor_dp(const FlowVolume& flow, const Anchor& left, const Anchor& right,
                                     const CorridorConfig& cfg = {});

enum class Strategy { flow_blend, linear, corridor_dp };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct RebuildOptions {
  Strategy strategy = Strategy::flow_blend;
  CorridorConfig corridor;
};

/// Whole-track reconstruction with any strategy. Edges outside the anchors
/// use one-directional propagation for the flow-based strategies.
std::vector<Point2D> rebuild_with(const FlowVolume& flow, std::span<const Anchor> anchors,
                                  const RebuildOptions& options);

struct Track {
  std::string id;
  std::string label;
  std::vector<Anchor> anchors;  // frame-sorted, one per frame
  std::vector<Point2D> points;
  std::vector<bool> visibility;

  int frame_count() const { return static_cast<int>(points.size()); }
  const Anchor* anchor_at(int frame) const;
  int correction_count() const;
};

struct RebuildStats {
  double elapsed_ms = 0.0;
  int frames_touched = 0;
  int span_begin = 0;  // inclusive
  int span_end = 0;    // inclusive
};

/// Seed-only track covering every frame of the volume.
Track create_track(const FlowVolume& flow, Anchor seed, std::string id, std::string label = {});

/// Rebuilds a whole track from its anchor list.
void rebuild_all(Track& track, const FlowVolume& flow, const RebuildOptions& options = {});

/// Inserts (or replaces, if the frame already holds one) an anchor and
/// rebuilds only the segments adjacent to it.
RebuildStats insert_anchor(Track& track, Anchor anchor, const FlowVolume& flow,
                           const RebuildOptions& options = {});

RebuildStats remove_anchor(Track& track, int frame, const FlowVolume& flow,
                           const RebuildOptions& options = {});

/// Visibility mask implied by the anchors: a span that starts at an
/// invisible anchor stays invisible until the next visible anchor.
std::vector<bool> visibility_from_anchors(std::span<const Anchor> anchors, int frame_count);

}  // namespace trackflow
