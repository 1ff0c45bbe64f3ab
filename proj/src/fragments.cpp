// TrackMate-style XML ingestion for fragment sets.

#include <map>
#include <string>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "trackflow/error.hpp"
#include "trackflow/experiments.hpp"

namespace trackflow {

namespace {

namespace pt = boost::property_tree;

struct Spot {
  int frame = 0;
  Point2D pos;
};

const pt::ptree* find_child(const pt::ptree& node, const std::string& name) {
  for (const auto& [key, child] : node) {
    if (key == name) return &child;
    if (key == "<xmlattr>") continue;
    if (const pt::ptree* found = find_child(child, name)) return found;
  }
  return nullptr;
}

template <typename T>
T attr(const pt::ptree& node, const std::string& name, const std::string& where) {
  const auto value = node.get_optional<T>("<xmlattr>." + name);
  if (!value) throw Error(ErrorCode::BadRequest, where + ": missing attribute '" + name + "'");
  return *value;
}

}  // namespace

FragmentSet fragments_from_trackmate_xml(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::NotFound, path.string() + ": not found");
  pt::ptree doc;
  try {
    pt::read_xml(path.string(), doc);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  const std::string where = path.string();

  std::map<long long, Spot> spots;
  const pt::ptree* all_spots = find_child(doc, "AllSpots");
  if (!all_spots) throw Error(ErrorCode::BadRequest, where + ": no AllSpots element");
  for (const auto& [key, in_frame] : *all_spots) {
    if (key != "SpotsInFrame") continue;
    for (const auto& [skey, spot] : in_frame) {
      if (skey != "Spot") continue;
      Spot s;
      const auto id = attr<long long>(spot, "ID", where + " Spot");
      s.frame = attr<int>(spot, "FRAME", where + " Spot " + std::to_string(id));
      s.pos = {attr<double>(spot, "POSITION_X", where + " Spot " + std::to_string(id)),
               attr<double>(spot, "POSITION_Y", where + " Spot " + std::to_string(id))};
      spots[id] = s;
    }
  }

  std::map<long long, std::string> fragment_of;
  if (const pt::ptree* all_tracks = find_child(doc, "AllTracks")) {
    for (const auto& [key, track] : *all_tracks) {
      if (key != "Track") continue;
      const std::string id = attr<std::string>(track, "TRACK_ID", where + " Track");
      for (const auto& [ekey, edge] : track) {
        if (ekey != "Edge") continue;
        fragment_of[attr<long long>(edge, "SPOT_SOURCE_ID", where + " Edge")] = id;
        fragment_of[attr<long long>(edge, "SPOT_TARGET_ID", where + " Edge")] = id;
      }
    }
  }

  FragmentSet set;
  for (const auto& [id, s] : spots) {
    if (s.frame < 0) continue;
    if (set.frames.size() <= static_cast<std::size_t>(s.frame)) set.frames.resize(static_cast<std::size_t>(s.frame) + 1);
    auto it = fragment_of.find(id);
    const std::string fragment = it != fragment_of.end() ? it->second : "spot-" + std::to_string(id);
    set.frames[static_cast<std::size_t>(s.frame)].push_back({s.pos, fragment});
  }
  return set;
}

}  // namespace trackflow
