#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trackflow/metrics.hpp"
#include "trackflow/rng.hpp"
#include "trackflow/track.hpp"

namespace trackflow {

// ---------------------------------------------------------------------------
// Sparse-correction scaling
// ---------------------------------------------------------------------------

/// APP statistics over trials at one correction count k.
struct ScalingRow {
  int k = 0;
  double app_mean = 0.0;
  double app_min = 0.0;
  double app_max = 0.0;  // best trial
};

struct ScalingCurve {
  Strategy strategy = Strategy::flow_blend;
  int trials = 0;
  std::uint64_t rng_seed = 0;
  int seed_frame = 0;
  std::vector<ScalingRow> rows;  // k = 0, 1, ...
};

struct ScalingOptions {
  int trials = 100;
  Strategy strategy = Strategy::flow_blend;
  std::uint64_t rng_seed = 0;
  APPConfig app;
  CorridorConfig corridor;
  /// Stop after this many corrections; unset runs to full anchoring.
  std::optional<int> max_k;
};

/// Frame of the reference seed: the anchor marked seed, else the first anchor.
int reference_seed_frame(const Track& ref);

/// Non-seed visible frames of `ref` in the random order used by `trial`.
std::vector<int> correction_order(const Track& ref, std::uint64_t rng_seed, int trial);

/// Anchors copied from the reference at `frames` (plus its seed frame).
std::vector<Anchor> reference_anchors(const Track& ref, std::span<const int> frames);

ScalingCurve scaling_curve(const FlowVolume& flow, const Track& ref, const ScalingOptions& options = {});

void write_scaling_csv(std::ostream& out, const ScalingCurve& curve);
nlohmann::ordered_json scaling_to_json(const ScalingCurve& curve);

/// Smallest k whose best-of-trials APP reaches `target`.
int corrections_to_target(const FlowVolume& flow, const Track& ref, double target,
                          const ScalingOptions& options = {});

// ---------------------------------------------------------------------------
// Point replacement
// ---------------------------------------------------------------------------

/// Anchors at `correction_frames` take the reference coordinates; the track
/// is rebuilt with flow blending and scored against the reference.
APPReport point_replacement(const FlowVolume& flow, std::span<const int> correction_frames, const Track& ref,
                            const APPConfig& cfg = {});

struct ReplacementStudy {
  APPReport original;  // annotator's own anchor coordinates
  APPReport replaced;  // same frames, reference coordinates
};

ReplacementStudy point_replacement_study(const FlowVolume& flow, const Track& annotated, const Track& ref,
                                         const APPConfig& cfg = {});

// ---------------------------------------------------------------------------
// Track matching and intervention cost
// ---------------------------------------------------------------------------

struct TrackPair {
  std::size_t gt = 0;
  std::size_t candidate = 0;
  double distance = 0.0;
};

struct Pairing {
  std::vector<TrackPair> pairs;
  std::vector<std::size_t> unmatched_gt;
};

/// First visible position of a track, if any; tracks without points use
/// their earliest visible anchor.
std::optional<Point2D> first_visible(const Track& track);

/// Each ground truth, in order, takes the unused candidate whose first
/// visible position is closest to its own.
Pairing match_tracks(std::span<const Track> gt, std::span<const Track> candidates);

struct Detection {
  Point2D pos;
  std::string fragment;
};

/// Detections per frame; fragment ids partition them into linked chains.
struct FragmentSet {
  std::vector<std::vector<Detection>> frames;
};

struct InterventionCount {
  int init_pick = 0;
  int relink = 0;
  int manual = 0;

  int total() const { return init_pick + relink + manual; }
  friend bool operator==(const InterventionCount&, const InterventionCount&) = default;
};

inline constexpr double kDefaultMatchTolerance = 5.0;

/// Clicks needed to rebuild `gt` from detect-and-link fragments: a pick to
/// start following a fragment, a relink when the nearest in-tolerance
/// detection belongs to another fragment, and a manual placement when no
/// detection is closer than `tolerance`.
InterventionCount intervention_cost(const Track& gt, const FragmentSet& fragments,
                                    double tolerance = kDefaultMatchTolerance);

/// {frames: [{t, detections: [{x, y, fragment}]}]}
FragmentSet fragments_from_json(const nlohmann::json& j);
nlohmann::ordered_json fragments_to_json(const FragmentSet& fragments);

/// TrackMate-style XML: spots (ID, FRAME, POSITION_X, POSITION_Y) and track
/// edges (SPOT_SOURCE_ID, SPOT_TARGET_ID). Each track becomes one fragment;
/// unlinked spots become singleton fragments.
FragmentSet fragments_from_trackmate_xml(const std::filesystem::path& path);

/// When detections extend past the image, rescales them isotropically so the
/// largest coordinate maps onto its image dimension. Returns the factor used
/// (1 when no rescale was needed).
double calibrate_fragments(FragmentSet& fragments, Size2D image);

}  // namespace trackflow
