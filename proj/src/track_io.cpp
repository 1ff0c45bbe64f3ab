#include "trackflow/track_io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "trackflow/error.hpp"

namespace trackflow {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(AnchorOrigin origin) {
  return origin == AnchorOrigin::seed ? "seed" : "correction";
}

std::string timestamp_now() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json track_to_json(const Track& track, const TrackMeta& meta) {
  ordered_json j;
  j["id"] = track.id;
  j["label"] = track.label;
  ordered_json anchors = ordered_json::array();
  for (const auto& a : track.anchors) {
    ordered_json aj;
    aj["frame"] = a.frame;
    aj["x"] = a.pos.x;
    aj["y"] = a.pos.y;
    aj["visible"] = a.visible;
    aj["origin"] = to_string(a.origin);
    anchors.push_back(std::move(aj));
  }
  j["anchors"] = std::move(anchors);
  ordered_json points = ordered_json::array();
  for (std::size_t t = 0; t < track.points.size(); ++t) {
    ordered_json pj;
    pj["frame"] = static_cast<int>(t);
    pj["x"] = track.points[t].x;
    pj["y"] = track.points[t].y;
    pj["visible"] = t < track.visibility.size() ? static_cast<bool>(track.visibility[t]) : true;
    points.push_back(std::move(pj));
  }
  j["points"] = std::move(points);
  ordered_json m;
  m["source"] = meta.source;
  m["W"] = meta.width;
  m["H"] = meta.height;
  m["T"] = meta.frame_count;
  m["created"] = meta.created;
  j["meta"] = std::move(m);
  return j;
}

namespace {

template <typename T>
T field(const json& j, const char* name, const std::string& where) {
  if (!j.is_object() || !j.contains(name)) {
    throw Error(ErrorCode::BadRequest, where + ": missing field '" + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::BadRequest, where + ": field '" + name + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& j, const char* name, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(name) || j.at(name).is_null()) return fallback;
  return field<T>(j, name, where);
}

}  // namespace

Track track_from_json(const json& j, TrackMeta* meta) {
  const std::string where = "track";
  Track track;
  track.id = field_or<std::string>(j, "id", "", where);
  track.label = field_or<std::string>(j, "label", "", where);
  const std::string twhere = "track '" + track.id + "'";
  const json anchors = field<json>(j, "anchors", twhere);
  if (!anchors.is_array()) throw Error(ErrorCode::BadRequest, twhere + ": 'anchors' must be an array");
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const std::string aw = twhere + " anchors[" + std::to_string(i) + "]";
    Anchor a;
    a.frame = field<int>(anchors[i], "frame", aw);
    a.pos = {field<double>(anchors[i], "x", aw), field<double>(anchors[i], "y", aw)};
    a.visible = field_or<bool>(anchors[i], "visible", true, aw);
    const std::string origin = field_or<std::string>(anchors[i], "origin", i == 0 ? "seed" : "correction", aw);
    if (origin != "seed" && origin != "correction") {
      throw Error(ErrorCode::BadRequest, aw + ": field 'origin' must be 'seed' or 'correction'");
    }
    a.origin = origin == "seed" ? AnchorOrigin::seed : AnchorOrigin::correction;
    track.anchors.push_back(a);
  }
  std::sort(track.anchors.begin(), track.anchors.end(),
            [](const Anchor& a, const Anchor& b) { return a.frame < b.frame; });
  if (j.contains("points")) {
    const json& points = j.at("points");
    if (!points.is_array()) throw Error(ErrorCode::BadRequest, twhere + ": 'points' must be an array");
    track.points.resize(points.size());
    track.visibility.assign(points.size(), true);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::string pw = twhere + " points[" + std::to_string(i) + "]";
      const int frame = field_or<int>(points[i], "frame", static_cast<int>(i), pw);
      if (frame < 0 || static_cast<std::size_t>(frame) >= points.size()) {
        throw Error(ErrorCode::BadRequest, pw + ": field 'frame' out of range");
      }
      track.points[static_cast<std::size_t>(frame)] = {field<double>(points[i], "x", pw),
                                                       field<double>(points[i], "y", pw)};
      track.visibility[static_cast<std::size_t>(frame)] = field_or<bool>(points[i], "visible", true, pw);
    }
  }
  if (meta && j.contains("meta")) {
    const json& m = j.at("meta");
    meta->source = field_or<std::string>(m, "source", "", twhere + " meta");
    meta->width = field_or<int>(m, "W", 0, twhere + " meta");
    meta->height = field_or<int>(m, "H", 0, twhere + " meta");
    meta->frame_count = field_or<int>(m, "T", 0, twhere + " meta");
    meta->created = field_or<std::string>(m, "created", "", twhere + " meta");
  }
  return track;
}

ordered_json tracks_to_json(const std::vector<Track>& tracks, const TrackMeta& meta) {
  ordered_json doc;
  doc["tracks"] = ordered_json::array();
  for (const auto& t : tracks) doc["tracks"].push_back(track_to_json(t, meta));
  return doc;
}

std::vector<Track> tracks_from_json(const json& j, TrackMeta* meta) {
  std::vector<Track> out;
  if (j.is_object() && j.contains("tracks")) {
    const json& arr = j.at("tracks");
    if (!arr.is_array()) throw Error(ErrorCode::BadRequest, "'tracks' must be an array");
    for (const auto& t : arr) out.push_back(track_from_json(t, meta));
  } else if (j.is_array()) {
    for (const auto& t : j) out.push_back(track_from_json(t, meta));
  } else {
    out.push_back(track_from_json(j, meta));
  }
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_tracks(const std::filesystem::path& path, const std::vector<Track>& tracks, const TrackMeta& meta) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, path.string() + ": cannot open for writing");
  out << tracks_to_json(tracks, meta).dump(2) << '\n';
}

std::vector<Track> read_tracks(const std::filesystem::path& path, TrackMeta* meta) {
  const json j = read_json_file(path);
  try {
    return tracks_from_json(j, meta);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace trackflow
