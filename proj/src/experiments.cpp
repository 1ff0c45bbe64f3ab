#include "trackflow/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "trackflow/error.hpp"
#include "trackflow/parallel.hpp"

namespace trackflow {

namespace {

std::vector<bool> visibility_or_all(const Track& t) {
  if (t.visibility.size() == t.points.size()) return t.visibility;
  return std::vector<bool>(t.points.size(), true);
}

void check_reference(const FlowVolume& flow, const Track& ref) {
  if (ref.points.empty() || ref.anchors.empty()) {
    throw Error(ErrorCode::NoReference, "reference track '" + ref.id + "' has no points or no seed");
  }
  if (static_cast<int>(ref.points.size()) != flow.frame_count) {
    throw Error(ErrorCode::LengthMismatch, "reference track '" + ref.id + "' has " +
                                               std::to_string(ref.points.size()) + " points, flow has " +
                                               std::to_string(flow.frame_count) + " frames");
  }
}

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int reference_seed_frame(const Track& ref) {
  if (ref.anchors.empty()) throw Error(ErrorCode::NoReference, "reference track has no anchors");
  for (const auto& a : ref.anchors) {
    if (a.origin == AnchorOrigin::seed) return a.frame;
  }
  return ref.anchors.front().frame;
}

std::vector<int> correction_order(const Track& ref, std::uint64_t rng_seed, int trial) {
  const int seed = reference_seed_frame(ref);
  const std::vector<bool> vis = visibility_or_all(ref);
  std::vector<int> frames;
  for (int t = 0; t < static_cast<int>(vis.size()); ++t) {
    if (vis[static_cast<std::size_t>(t)] && t != seed) frames.push_back(t);
  }
  CounterRng rng(rng_seed, static_cast<std::uint64_t>(trial));
  for (std::size_t i = frames.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(frames[i - 1], frames[j]);
  }
  return frames;
}

std::vector<Anchor> reference_anchors(const Track& ref, std::span<const int> frames) {
  const int seed = reference_seed_frame(ref);
  const std::vector<bool> vis = visibility_or_all(ref);
  std::vector<int> all(frames.begin(), frames.end());
  all.push_back(seed);
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<Anchor> anchors;
  for (int t : all) {
    if (t < 0 || t >= static_cast<int>(ref.points.size())) {
      throw Error(ErrorCode::FrameOutOfRange, "frame " + std::to_string(t) + " outside the reference track");
    }
    Anchor a;
    a.frame = t;
    a.pos = ref.points[static_cast<std::size_t>(t)];
    a.visible = vis[static_cast<std::size_t>(t)];
    a.origin = t == seed ? AnchorOrigin::seed : AnchorOrigin::correction;
    anchors.push_back(a);
  }
  return anchors;
}

ScalingCurve scaling_curve(const FlowVolume& flow, const Track& ref, const ScalingOptions& options) {
  check_reference(flow, ref);
  if (options.trials < 1) throw Error(ErrorCode::BadConfig, "trials must be >= 1");
  options.app.validate();
  const int seed = reference_seed_frame(ref);
  const std::vector<bool> ref_vis = visibility_or_all(ref);
  const RebuildOptions rebuild{options.strategy, options.corridor};

  const int available = static_cast<int>(correction_order(ref, options.rng_seed, 0).size());
  const int max_k = options.max_k ? std::clamp(*options.max_k, 0, available) : available;
  const auto row_count = static_cast<std::size_t>(max_k) + 1;

  // apps[trial][k]
  std::vector<std::vector<double>> apps(static_cast<std::size_t>(options.trials));
  parallel_for(options.trials, [&](int trial) {
    const std::vector<int> order = correction_order(ref, options.rng_seed, trial);
    const std::vector<int> none;
    Track track;
    track.anchors = reference_anchors(ref, none);
    rebuild_all(track, flow, rebuild);
    auto& out = apps[static_cast<std::size_t>(trial)];
    out.reserve(row_count);
    out.push_back(app(track.points, ref.points, joint_visibility(ref_vis, track.visibility), options.app).app);
    for (int k = 1; k <= max_k; ++k) {
      const int t = order[static_cast<std::size_t>(k - 1)];
      Anchor a;
      a.frame = t;
      a.pos = ref.points[static_cast<std::size_t>(t)];
      a.visible = true;
      insert_anchor(track, a, flow, rebuild);
      out.push_back(app(track.points, ref.points, joint_visibility(ref_vis, track.visibility), options.app).app);
    }
  });

  ScalingCurve curve;
  curve.strategy = options.strategy;
  curve.trials = options.trials;
  curve.rng_seed = options.rng_seed;
  curve.seed_frame = seed;
  for (std::size_t k = 0; k < row_count; ++k) {
    ScalingRow row;
    row.k = static_cast<int>(k);
    row.app_min = std::numeric_limits<double>::infinity();
    row.app_max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const auto& trial : apps) {
      sum += trial[k];
      row.app_min = std::min(row.app_min, trial[k]);
      row.app_max = std::max(row.app_max, trial[k]);
    }
    // Rounding in the sum can push the mean just outside [min, max].
    row.app_mean = std::clamp(sum / static_cast<double>(apps.size()), row.app_min, row.app_max);
    curve.rows.push_back(row);
  }
  return curve;
}

void write_scaling_csv(std::ostream& out, const ScalingCurve& curve) {
  out << "k,app_mean,app_min,app_max\n";
  for (const auto& r : curve.rows) {
    out << r.k << ',' << number(r.app_mean) << ',' << number(r.app_min) << ',' << number(r.app_max) << '\n';
  }
}

nlohmann::ordered_json scaling_to_json(const ScalingCurve& curve) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(curve.strategy);
  j["trials"] = curve.trials;
  j["rng_seed"] = curve.rng_seed;
  j["seed_frame"] = curve.seed_frame;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : curve.rows) {
    rows.push_back({{"k", r.k}, {"app_mean", r.app_mean}, {"app_min", r.app_min}, {"app_max", r.app_max}});
  }
  j["rows"] = std::move(rows);
  return j;
}

int corrections_to_target(const FlowVolume& flow, const Track& ref, double target, const ScalingOptions& options) {
  if (!(target > 0.0 && target <= 1.0)) throw Error(ErrorCode::BadConfig, "target must be in (0, 1]");
  ScalingOptions full = options;
  full.max_k.reset();
  const ScalingCurve curve = scaling_curve(flow, ref, full);
  for (const auto& row : curve.rows) {
    if (row.app_max >= target) return row.k;
  }
  // Full anchoring reproduces every visible reference frame exactly.
  throw Error(ErrorCode::BadConfig, "target APP unreachable even with every frame anchored");
}

APPReport point_replacement(const FlowVolume& flow, std::span<const int> correction_frames, const Track& ref,
                            const APPConfig& cfg) {
  if (correction_frames.empty()) throw Error(ErrorCode::EmptyFrames, "no correction frames given");
  check_reference(flow, ref);
  Track track;
  track.anchors = reference_anchors(ref, correction_frames);
  rebuild_all(track, flow);
  return app(track.points, ref.points, joint_visibility(visibility_or_all(ref), track.visibility), cfg);
}

ReplacementStudy point_replacement_study(const FlowVolume& flow, const Track& annotated, const Track& ref,
                                         const APPConfig& cfg) {
  check_reference(flow, ref);
  if (annotated.anchors.empty()) throw Error(ErrorCode::EmptyFrames, "annotated track has no anchors");
  Track original;
  original.anchors = annotated.anchors;
  rebuild_all(original, flow);
  ReplacementStudy study;
  study.original = app(original.points, ref.points,
                       joint_visibility(visibility_or_all(ref), original.visibility), cfg);
  std::vector<int> frames;
  for (const auto& a : annotated.anchors) frames.push_back(a.frame);
  study.replaced = point_replacement(flow, frames, ref, cfg);
  return study;
}

std::optional<Point2D> first_visible(const Track& track) {
  if (track.points.empty()) {
    // Anchors-only tracks: the earliest visible anchor.
    for (const auto& a : track.anchors) {
      if (a.visible) return a.pos;
    }
    return std::nullopt;
  }
  const std::vector<bool> vis = visibility_or_all(track);
  for (std::size_t t = 0; t < track.points.size(); ++t) {
    if (vis[t]) return track.points[t];
  }
  return std::nullopt;
}

Pairing match_tracks(std::span<const Track> gt, std::span<const Track> candidates) {
  std::vector<std::optional<Point2D>> starts;
  for (const auto& c : candidates) starts.push_back(first_visible(c));
  std::vector<bool> used(candidates.size(), false);
  Pairing pairing;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const auto start = first_visible(gt[g]);
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    if (start) {
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (used[c] || !starts[c]) continue;
        const double d = std::hypot(starts[c]->x - start->x, starts[c]->y - start->y);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
    }
    if (best) {
      used[*best] = true;
      pairing.pairs.push_back({g, *best, best_d});
    } else {
      pairing.unmatched_gt.push_back(g);
    }
  }
  return pairing;
}

InterventionCount intervention_cost(const Track& gt, const FragmentSet& fragments, double tolerance) {
  if (!(tolerance > 0.0)) throw Error(ErrorCode::BadConfig, "tolerance must be > 0");
  const std::vector<bool> vis = visibility_or_all(gt);
  InterventionCount count;
  std::optional<std::string> followed;
  for (std::size_t t = 0; t < gt.points.size(); ++t) {
    if (!vis[t]) continue;
    const Detection* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    if (t < fragments.frames.size()) {
      for (const auto& d : fragments.frames[t]) {
        const double dist = std::hypot(d.pos.x - gt.points[t].x, d.pos.y - gt.points[t].y);
        if (dist < best) {
          best = dist;
          nearest = &d;
        }
      }
    }
    if (!nearest || !(best < tolerance)) {
      ++count.manual;
      followed.reset();
    } else if (!followed) {
      ++count.init_pick;
      followed = nearest->fragment;
    } else if (*followed != nearest->fragment) {
      ++count.relink;
      followed = nearest->fragment;
    }
  }
  return count;
}

FragmentSet fragments_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("frames") || !j.at("frames").is_array()) {
    throw Error(ErrorCode::BadRequest, "fragments: missing array field 'frames'");
  }
  FragmentSet set;
  for (const auto& f : j.at("frames")) {
    if (!f.contains("t")) throw Error(ErrorCode::BadRequest, "fragments: frame entry missing field 't'");
    const int t = f.at("t").get<int>();
    if (t < 0) throw Error(ErrorCode::BadRequest, "fragments: negative frame index");
    if (set.frames.size() <= static_cast<std::size_t>(t)) set.frames.resize(static_cast<std::size_t>(t) + 1);
    if (!f.contains("detections")) continue;
    for (const auto& d : f.at("detections")) {
      if (!d.contains("x") || !d.contains("y") || !d.contains("fragment")) {
        throw Error(ErrorCode::BadRequest,
                    "fragments: detection in frame " + std::to_string(t) + " needs fields 'x', 'y', 'fragment'");
      }
      Detection det;
      det.pos = {d.at("x").get<double>(), d.at("y").get<double>()};
      const auto& frag = d.at("fragment");
      det.fragment = frag.is_string() ? frag.get<std::string>() : frag.dump();
      set.frames[static_cast<std::size_t>(t)].push_back(std::move(det));
    }
  }
  return set;
}

nlohmann::ordered_json fragments_to_json(const FragmentSet& fragments) {
  nlohmann::ordered_json j;
  j["frames"] = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < fragments.frames.size(); ++t) {
    nlohmann::ordered_json f;
    f["t"] = static_cast<int>(t);
    f["detections"] = nlohmann::ordered_json::array();
    for (const auto& d : fragments.frames[t]) {
      f["detections"].push_back({{"x", d.pos.x}, {"y", d.pos.y}, {"fragment", d.fragment}});
    }
    j["frames"].push_back(std::move(f));
  }
  return j;
}

double calibrate_fragments(FragmentSet& fragments, Size2D image) {
  double max_x = 0.0;
  double max_y = 0.0;
  for (const auto& frame : fragments.frames) {
    for (const auto& d : frame) {
      max_x = std::max(max_x, d.pos.x);
      max_y = std::max(max_y, d.pos.y);
    }
  }
  if (max_x <= image.width - 1 && max_y <= image.height - 1) return 1.0;
  const double scale = max_x >= max_y ? image.width / max_x : image.height / max_y;
  for (auto& frame : fragments.frames) {
    for (auto& d : frame) d.pos = {d.pos.x * scale, d.pos.y * scale};
  }
  return scale;
}

}  // namespace trackflow
