#include "trackflow/track.hpp"

#include <algorithm>
#include <chrono>

#include "trackflow/error.hpp"

namespace trackflow {

namespace {

void check_frame(const FlowVolume& flow, int frame) {
  if (frame < 0 || frame >= flow.frame_count) {
    throw Error(ErrorCode::FrameOutOfRange, "frame " + std::to_string(frame) + " outside [0, " +
                                                std::to_string(flow.frame_count - 1) + "]");
  }
}

Point2D step_forward(const FlowVolume& flow, int t, Point2D p) {
  const Displacement d = sample_flow(flow.fields[static_cast<std::size_t>(t)], p);
  return {p.x + d.dx, p.y + d.dy};
}

Point2D step_backward(const FlowVolume& flow, int t, Point2D p) {
  const Displacement d = sample_flow(flow.fields[static_cast<std::size_t>(t - 1)], p);
  return {p.x - d.dx, p.y - d.dy};
}

// Writes frames [from, to] of `out` by forward propagation from out[from].
void forward_fill(const FlowVolume& flow, std::span<Point2D> out, int from, int to) {
  for (int t = from; t < to; ++t) out[t + 1] = step_forward(flow, t, out[t]);
}

// Writes frames [to, from] of `out` by backward propagation from out[from].
void backward_fill(const FlowVolume& flow, std::span<Point2D> out, int from, int to) {
  for (int t = from; t > to; --t) out[t - 1] = step_backward(flow, t, out[t]);
}

void blend_fill(const FlowVolume& flow, const Anchor& left, const Anchor& right, std::span<Point2D> out,
                std::vector<Point2D>& backward) {
  const int t0 = left.frame;
  const int t1 = right.frame;
  const int n = t1 - t0;
  backward.resize(static_cast<std::size_t>(n) + 1);
  backward[n] = right.pos;
  for (int i = n; i > 0; --i) backward[i - 1] = step_backward(flow, t0 + i, backward[i]);
  Point2D f = left.pos;
  out[t0] = left.pos;
  for (int i = 1; i < n; ++i) {
    f = step_forward(flow, t0 + i - 1, f);
    const double a = static_cast<double>(i) / n;
    const Point2D& b = backward[i];
    out[t0 + i] = {(1.0 - a) * f.x + a * b.x, (1.0 - a) * f.y + a * b.y};
  }
  out[t1] = right.pos;
}

void linear_fill(const Anchor& left, const Anchor& right, std::span<Point2D> out) {
  const int t0 = left.frame;
  const int n = right.frame - t0;
  for (int i = 1; i < n; ++i) {
    const double a = static_cast<double>(i) / n;
    out[t0 + i] = {(1.0 - a) * left.pos.x + a * right.pos.x, (1.0 - a) * left.pos.y + a * right.pos.y};
  }
  out[left.frame] = left.pos;
  out[right.frame] = right.pos;
}

// Piece p of an n-anchor track: 0 is the leading edge, n the trailing edge,
// otherwise the segment between anchors p-1 and p.
struct Piece {
  int begin;
  int end;
};

Piece piece_span(std::span<const Anchor> anchors, std::size_t p, int frame_count) {
  const std::size_t n = anchors.size();
  if (p == 0) return {0, anchors.front().frame};
  if (p == n) return {anchors.back().frame, frame_count - 1};
  return {anchors[p - 1].frame, anchors[p].frame};
}

void rebuild_piece(const FlowVolume* flow, std::span<const Anchor> anchors, std::size_t p,
                   const RebuildOptions& options, std::span<Point2D> out, std::vector<Point2D>& scratch) {
  const std::size_t n = anchors.size();
  const int frame_count = static_cast<int>(out.size());
  const bool linear = options.strategy == Strategy::linear;
  if (p == 0) {
    const Anchor& a = anchors.front();
    out[a.frame] = a.pos;
    if (linear) {
      std::fill(out.begin(), out.begin() + a.frame, a.pos);
    } else {
      backward_fill(*flow, out, a.frame, 0);
    }
    return;
  }
  if (p == n) {
    const Anchor& a = anchors.back();
    out[a.frame] = a.pos;
    if (linear) {
      std::fill(out.begin() + a.frame + 1, out.end(), a.pos);
    } else {
      forward_fill(*flow, out, a.frame, frame_count - 1);
    }
    return;
  }
  const Anchor& left = anchors[p - 1];
  const Anchor& right = anchors[p];
  switch (options.strategy) {
    case Strategy::flow_blend:
      blend_fill(*flow, left, right, out, scratch);
      break;
    case Strategy::linear:
      linear_fill(left, right, out);
      break;
    case Strategy::corridor_dp: {
      CorridorPath path = interpolate_corridor_dp(*flow, left, right, options.corridor);
      std::copy(path.points.begin(), path.points.end(), out.begin() + left.frame);
      break;
    }
  }
}

void check_sorted(std::span<const Anchor> anchors, int frame_count) {
  if (anchors.empty()) throw Error(ErrorCode::NoAnchors, "at least one anchor is required");
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (anchors[i].frame < 0 || anchors[i].frame >= frame_count) {
      throw Error(ErrorCode::FrameOutOfRange, "anchor frame " + std::to_string(anchors[i].frame) +
                                                  " outside [0, " + std::to_string(frame_count - 1) + "]");
    }
    if (i > 0 && anchors[i].frame <= anchors[i - 1].frame) {
      throw Error(ErrorCode::BadOrder, "anchors must be strictly frame-ordered");
    }
  }
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::flow_blend: return "flow_blend";
    case Strategy::linear: return "linear";
    case Strategy::corridor_dp: return "corridor_dp";
  }
  return "flow_blend";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "flow_blend") return Strategy::flow_blend;
  if (name == "linear") return Strategy::linear;
  if (name == "corridor_dp") return Strategy::corridor_dp;
  throw Error(ErrorCode::BadConfig, "unknown strategy '" + std::string(name) + "'");
}

std::vector<Point2D> propagate(const FlowVolume& flow, const Anchor& seed) {
  check_frame(flow, seed.frame);
  std::vector<Point2D> out(static_cast<std::size_t>(flow.frame_count));
  out[seed.frame] = seed.pos;
  forward_fill(flow, out, seed.frame, flow.frame_count - 1);
  backward_fill(flow, out, seed.frame, 0);
  return out;
}

SegmentRebuild rebuild_segment(const FlowVolume& flow, const Anchor& left, const Anchor& right) {
  if (left.frame == right.frame) throw Error(ErrorCode::SameFrame, "segment anchors share a frame");
  if (left.frame > right.frame) throw Error(ErrorCode::BadOrder, "left anchor must precede right anchor");
  check_frame(flow, left.frame);
  check_frame(flow, right.frame);

  SegmentRebuild r;
  r.trace.t0 = left.frame;
  r.trace.t1 = right.frame;
  const int n = right.frame - left.frame;
  r.trace.forward.resize(static_cast<std::size_t>(n) + 1);
  r.trace.backward.resize(static_cast<std::size_t>(n) + 1);
  r.trace.forward[0] = left.pos;
  for (int i = 0; i < n; ++i) r.trace.forward[i + 1] = step_forward(flow, left.frame + i, r.trace.forward[i]);
  r.trace.backward[n] = right.pos;
  for (int i = n; i > 0; --i) r.trace.backward[i - 1] = step_backward(flow, left.frame + i, r.trace.backward[i]);

  std::vector<Point2D> full(static_cast<std::size_t>(flow.frame_count));
  std::vector<Point2D> scratch;
  blend_fill(flow, left, right, full, scratch);
  r.points.assign(full.begin() + left.frame, full.begin() + right.frame + 1);
  return r;
}

std::vector<Point2D> rebuild_with(const FlowVolume& flow, std::span<const Anchor> anchors,
                                  const RebuildOptions& options) {
  check_sorted(anchors, flow.frame_count);
  std::vector<Point2D> out(static_cast<std::size_t>(flow.frame_count));
  std::vector<Point2D> scratch;
  for (std::size_t p = 0; p <= anchors.size(); ++p) rebuild_piece(&flow, anchors, p, options, out, scratch);
  return out;
}

std::vector<Point2D> rebuild_track(const FlowVolume& flow, std::span<const Anchor> anchors) {
  return rebuild_with(flow, anchors, {});
}

std::vector<Point2D> interpolate_linear(std::span<const Anchor> anchors, int frame_count) {
  check_sorted(anchors, frame_count);
  std::vector<Point2D> out(static_cast<std::size_t>(frame_count));
  std::vector<Point2D> scratch;
  RebuildOptions options;
  options.strategy = Strategy::linear;
  for (std::size_t p = 0; p <= anchors.size(); ++p) rebuild_piece(nullptr, anchors, p, options, out, scratch);
  return out;
}

const Anchor* Track::anchor_at(int frame) const {
  auto it = std::lower_bound(anchors.begin(), anchors.end(), frame,
                             [](const Anchor& a, int f) { return a.frame < f; });
  return it != anchors.end() && it->frame == frame ? &*it : nullptr;
}

int Track::correction_count() const {
  return static_cast<int>(std::count_if(anchors.begin(), anchors.end(),
                                        [](const Anchor& a) { return a.origin == AnchorOrigin::correction; }));
}

std::vector<bool> visibility_from_anchors(std::span<const Anchor> anchors, int frame_count) {
  std::vector<bool> vis(static_cast<std::size_t>(frame_count), true);
  if (anchors.empty()) return vis;
  // The leading edge inherits the first anchor's flag.
  bool current = anchors.front().visible;
  std::size_t next = 0;
  for (int t = 0; t < frame_count; ++t) {
    while (next < anchors.size() && anchors[next].frame == t) current = anchors[next++].visible;
    vis[static_cast<std::size_t>(t)] = current;
  }
  return vis;
}

Track create_track(const FlowVolume& flow, Anchor seed, std::string id, std::string label) {
  check_frame(flow, seed.frame);
  seed.origin = AnchorOrigin::seed;
  Track track;
  track.id = std::move(id);
  track.label = std::move(label);
  track.anchors.push_back(seed);
  rebuild_all(track, flow);
  return track;
}

void rebuild_all(Track& track, const FlowVolume& flow, const RebuildOptions& options) {
  track.points = rebuild_with(flow, track.anchors, options);
  track.visibility = visibility_from_anchors(track.anchors, flow.frame_count);
}

namespace {

RebuildStats rebuild_pieces(Track& track, const FlowVolume& flow, const RebuildOptions& options,
                            std::size_t first_piece, std::size_t last_piece,
                            std::chrono::steady_clock::time_point start) {
  const int frame_count = flow.frame_count;
  if (track.points.size() != static_cast<std::size_t>(frame_count)) {
    track.points.assign(static_cast<std::size_t>(frame_count), Point2D{});
    first_piece = 0;
    last_piece = track.anchors.size();
  }
  std::vector<Point2D> scratch;
  for (std::size_t p = first_piece; p <= last_piece; ++p) {
    rebuild_piece(&flow, track.anchors, p, options, track.points, scratch);
  }
  track.visibility = visibility_from_anchors(track.anchors, frame_count);

  RebuildStats stats;
  stats.span_begin = piece_span(track.anchors, first_piece, frame_count).begin;
  stats.span_end = piece_span(track.anchors, last_piece, frame_count).end;
  stats.frames_touched = stats.span_end - stats.span_begin + 1;
  stats.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

}  // namespace

RebuildStats insert_anchor(Track& track, Anchor anchor, const FlowVolume& flow, const RebuildOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  check_frame(flow, anchor.frame);
  auto it = std::lower_bound(track.anchors.begin(), track.anchors.end(), anchor.frame,
                             [](const Anchor& a, int f) { return a.frame < f; });
  if (it != track.anchors.end() && it->frame == anchor.frame) {
    if (it->origin == AnchorOrigin::seed) anchor.origin = AnchorOrigin::seed;
    *it = anchor;
  } else {
    it = track.anchors.insert(it, anchor);
  }
  const auto i = static_cast<std::size_t>(it - track.anchors.begin());
  return rebuild_pieces(track, flow, options, i, i + 1, start);
}

RebuildStats remove_anchor(Track& track, int frame, const FlowVolume& flow, const RebuildOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  auto it = std::lower_bound(track.anchors.begin(), track.anchors.end(), frame,
                             [](const Anchor& a, int f) { return a.frame < f; });
  if (it == track.anchors.end() || it->frame != frame) {
    throw Error(ErrorCode::NoSuchAnchor, "no anchor at frame " + std::to_string(frame));
  }
  if (track.anchors.size() == 1) {
    throw Error(ErrorCode::LastAnchor, "cannot remove the only anchor of a track");
  }
  const auto i = static_cast<std::size_t>(it - track.anchors.begin());
  track.anchors.erase(it);
  return rebuild_pieces(track, flow, options, i, i, start);
}

}  // namespace trackflow
