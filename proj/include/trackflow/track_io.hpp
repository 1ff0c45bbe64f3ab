#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "trackflow/track.hpp"

namespace trackflow {

struct TrackMeta {
  std::string source;
  int width = 0;
  int height = 0;
  int frame_count = 0;
  std::string created;
};

/// {id, label, anchors, points, meta} in that order. Coordinates use the
/// shortest round-trip representation, so import is bit-exact.
nlohmann::ordered_json track_to_json(const Track& track, const TrackMeta& meta);

/// Accepts the export layout; `points` may be absent, in which case the
/// returned track has no points and must be rebuilt.
Track track_from_json(const nlohmann::json& j, TrackMeta* meta = nullptr);

nlohmann::ordered_json tracks_to_json(const std::vector<Track>& tracks, const TrackMeta& meta);

/// Accepts either {"tracks": [...]} or a single track object.
std::vector<Track> tracks_from_json(const nlohmann::json& j, TrackMeta* meta = nullptr);

void write_tracks(const std::filesystem::path& path, const std::vector<Track>& tracks, const TrackMeta& meta);
std::vector<Track> read_tracks(const std::filesystem::path& path, TrackMeta* meta = nullptr);

nlohmann::json read_json_file(const std::filesystem::path& path);

std::string_view to_string(AnchorOrigin origin);

/// Current UTC time as ISO-8601, or the SOURCE_DATE_EPOCH time when set.
std::string timestamp_now();

}  // namespace trackflow
