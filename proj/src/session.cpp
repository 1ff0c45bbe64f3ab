#include "trackflow/session.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "trackflow/error.hpp"
#include "trackflow/metrics.hpp"

namespace trackflow {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct FlowCancelled {};

std::string base64(const std::vector<unsigned char>& bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::vector<unsigned char>::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

template <typename T>
T need(const json& p, const char* name) {
  if (!p.is_object() || !p.contains(name) || p.at(name).is_null()) {
    throw Error(ErrorCode::BadRequest, std::string("payload: missing field '") + name + "'");
  }
  try {
    return p.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::BadRequest, std::string("payload: field '") + name + "' has the wrong type");
  }
}

template <typename T>
T want(const json& p, const char* name, T fallback) {
  if (!p.is_object() || !p.contains(name) || p.at(name).is_null()) return fallback;
  return need<T>(p, name);
}

FlowConfig flow_config_from(const json& j) {
  FlowConfig cfg;
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw Error(ErrorCode::BadRequest, "payload: field 'flow' must be an object");
  const std::string backend = want<std::string>(j, "backend", "dis");
  if (backend == "dis") {
    cfg.backend = FlowBackend::dis;
  } else if (backend == "block_match") {
    cfg.backend = FlowBackend::block_match;
  } else {
    throw Error(ErrorCode::BadConfig, "flow.backend: unknown backend '" + backend + "'");
  }
  cfg.patch_size = want<int>(j, "patch_size", cfg.patch_size);
  cfg.patch_stride = want<int>(j, "patch_stride", cfg.patch_stride);
  if (j.contains("pyramid_levels") && !j.at("pyramid_levels").is_null()) {
    cfg.pyramid_levels = need<int>(j, "pyramid_levels");
  }
  cfg.gradient_descent_iters = want<int>(j, "iterations", cfg.gradient_descent_iters);
  cfg.refinement = want<bool>(j, "refinement", cfg.refinement);
  cfg.search_radius = want<int>(j, "search_radius", cfg.search_radius);
  cfg.equalize = want<bool>(j, "equalize", cfg.equalize);
  cfg.validate();
  return cfg;
}

ordered_json points_json(const Track& track, int begin, int end) {
  ordered_json out = ordered_json::array();
  for (int t = begin; t <= end; ++t) {
    const auto i = static_cast<std::size_t>(t);
    ordered_json pj;
    pj["frame"] = t;
    pj["x"] = track.points[i].x;
    pj["y"] = track.points[i].y;
    pj["visible"] = static_cast<bool>(track.visibility[i]);
    out.push_back(std::move(pj));
  }
  return out;
}

ordered_json stats_json(const RebuildStats& s) {
  ordered_json j;
  j["elapsed_ms"] = s.elapsed_ms;
  j["frames_touched"] = s.frames_touched;
  j["span_begin"] = s.span_begin;
  j["span_end"] = s.span_end;
  return j;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string_view to_string(FlowStatus status) {
  switch (status) {
    case FlowStatus::none: return "none";
    case FlowStatus::pending: return "pending";
    case FlowStatus::ready: return "ready";
    case FlowStatus::failed: return "failed";
  }
  return "none";
}

Session::Session(Push push, RebuildOptions options) : push_(std::move(push)), options_(options) {}

Session::~Session() {
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
  }
}

ordered_json Session::handle_line(std::string_view line) {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::parse_error& e) {
    ordered_json reply;
    reply["op"] = nullptr;
    reply["request_id"] = nullptr;
    reply["ok"] = false;
    reply["error"] = {{"code", to_string(ErrorCode::ParseError)}, {"message", e.what()}};
    return reply;
  }
  return handle_message(msg);
}

ordered_json Session::handle_message(const json& msg) {
  ordered_json reply;
  reply["op"] = msg.is_object() && msg.contains("op") ? msg.at("op") : json(nullptr);
  reply["request_id"] = msg.is_object() && msg.contains("request_id") ? msg.at("request_id") : json(nullptr);
  try {
    if (!msg.is_object()) throw Error(ErrorCode::BadRequest, "message must be a JSON object");
    if (!msg.contains("op") || !msg.at("op").is_string()) {
      throw Error(ErrorCode::BadRequest, "message: missing string field 'op'");
    }
    const json payload =
        msg.contains("payload") && !msg.at("payload").is_null() ? msg.at("payload") : json::object();
    if (!payload.is_object()) throw Error(ErrorCode::BadRequest, "message: 'payload' must be an object");
    ordered_json result = dispatch(msg.at("op").get<std::string>(), payload);
    reply["ok"] = true;
    reply["payload"] = std::move(result);
  } catch (const Error& e) {
    reply["ok"] = false;
    reply["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
  } catch (const json::exception& e) {
    reply["ok"] = false;
    reply["error"] = {{"code", to_string(ErrorCode::BadRequest)}, {"message", e.what()}};
  } catch (const std::exception& e) {
    reply["ok"] = false;
    reply["error"] = {{"code", to_string(ErrorCode::IoError)}, {"message", e.what()}};
  }
  return reply;
}

ordered_json Session::dispatch(const std::string& op, const json& p) {
  if (op == "load_video") return op_load_video(p);
  if (op == "flow_status") return op_flow_status();
  if (op == "create_track") return op_create_track(p);
  if (op == "insert_anchor") return op_insert_anchor(p);
  if (op == "remove_anchor") return op_remove_anchor(p);
  if (op == "set_visibility") return op_set_visibility(p);
  if (op == "get_track") return op_get_track(p);
  if (op == "list_tracks") return op_list_tracks();
  if (op == "delete_track") return op_delete_track(p);
  if (op == "get_frame") return op_get_frame(p);
  if (op == "evaluate_app") return op_evaluate_app(p);
  if (op == "export_tracks") return op_export_tracks(p);
  if (op == "import_tracks") return op_import_tracks(p);
  throw Error(ErrorCode::UnknownOp, "unknown op '" + op + "'");
}

void Session::attach(std::shared_ptr<const VideoSequence> video, std::shared_ptr<const FlowVolume> flow) {
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
  }
  if (video && flow &&
      (flow->width != video->width() || flow->height != video->height() ||
       flow->frame_count != video->frame_count())) {
    throw Error(ErrorCode::DimensionMismatch, "flow volume does not match the video");
  }
  std::lock_guard lock(mutex_);
  ++generation_;
  video_ = std::move(video);
  flow_ = std::move(flow);
  status_ = flow_ ? FlowStatus::ready : FlowStatus::none;
  progress_done_ = progress_total_ = flow_ ? flow_->frame_count - 1 : 0;
  flow_error_.clear();
  tracks_.clear();
  next_track_ = 0;
}

FlowStatus Session::flow_status() const {
  std::lock_guard lock(mutex_);
  return status_;
}

void Session::wait_for_flow() {
  if (worker_.joinable()) worker_.join();
}

std::shared_ptr<const VideoSequence> Session::require_video() const {
  std::lock_guard lock(mutex_);
  if (!video_) throw Error(ErrorCode::SessionStateError, "no video loaded");
  return video_;
}

std::shared_ptr<const FlowVolume> Session::require_flow() const {
  std::lock_guard lock(mutex_);
  if (!video_) throw Error(ErrorCode::SessionStateError, "no video loaded");
  if (status_ != FlowStatus::ready) {
    throw Error(ErrorCode::SessionStateError, "flow is not ready (status " + std::string(to_string(status_)) + ")");
  }
  return flow_;
}

Track& Session::require_track(const json& p) {
  const auto id = need<std::string>(p, "track_id");
  const auto it = tracks_.find(id);
  if (it == tracks_.end()) throw Error(ErrorCode::NoSuchTrack, "no track '" + id + "'");
  return it->second;
}

TrackMeta Session::meta() const {
  std::lock_guard lock(mutex_);
  TrackMeta m;
  if (video_) {
    m.source = video_->source_path();
    m.width = video_->width();
    m.height = video_->height();
    m.frame_count = video_->frame_count();
  }
  m.created = timestamp_now();
  return m;
}

ordered_json Session::edit_reply(const Track& track, const RebuildStats& stats) const {
  ordered_json out;
  out["track_id"] = track.id;
  out["span_begin"] = stats.span_begin;
  out["span_end"] = stats.span_end;
  out["points"] = points_json(track, stats.span_begin, stats.span_end);
  out["anchors"] = track_to_json(track, {})["anchors"];
  out["stats"] = stats_json(stats);
  return out;
}

ordered_json Session::op_load_video(const json& p) {
  const std::filesystem::path path = need<std::string>(p, "path");
  LoadOptions load;
  if (p.contains("channel") && !p.at("channel").is_null()) load.channel = need<int>(p, "channel");
  const std::string kind = want<std::string>(p, "kind", "auto");
  std::shared_ptr<const VideoSequence> video;
  if (kind == "auto") {
    video = std::make_shared<VideoSequence>(load_sequence(path, load));
  } else if (kind == "tiff_stack") {
    video = std::make_shared<VideoSequence>(load_sequence(path, SequenceKind::tiff_stack, load));
  } else if (kind == "image_dir") {
    video = std::make_shared<VideoSequence>(load_sequence(path, SequenceKind::image_dir, load));
  } else {
    throw Error(ErrorCode::BadRequest, "payload: field 'kind' must be auto, tiff_stack or image_dir");
  }
  const FlowConfig cfg = flow_config_from(p.contains("flow") ? p.at("flow") : json(nullptr));
  const std::string cache = want<std::string>(p, "flow_cache", "");
  const bool wait = want<bool>(p, "wait", false);

  attach(video, nullptr);
  std::shared_ptr<const FlowVolume> cached;
  if (!cache.empty() && std::filesystem::exists(cache)) {
    cached = std::make_shared<FlowVolume>(load_flow_cache(cache));
    attach(video, cached);
  } else {
    unsigned generation = 0;
    {
      std::lock_guard lock(mutex_);
      status_ = FlowStatus::pending;
      progress_done_ = 0;
      progress_total_ = video->frame_count() - 1;
      generation = generation_;
    }
    worker_ = std::jthread([this, video, cfg, cache, generation](std::stop_token stop) {
      ordered_json done_msg;
      try {
        auto progress = [&](int done, int total) {
          if (stop.stop_requested()) throw FlowCancelled{};
          {
            std::lock_guard lock(mutex_);
            progress_done_ = done;
            progress_total_ = total;
          }
          if (push_) push_({{"op", "flow_progress"}, {"payload", {{"done", done}, {"total", total}}}});
        };
        auto flow = std::make_shared<FlowVolume>(compute_flow(*video, cfg, progress));
        if (!cache.empty()) save_flow_cache(*flow, cache);
        std::lock_guard lock(mutex_);
        if (generation != generation_) return;
        flow_ = std::move(flow);
        status_ = FlowStatus::ready;
        done_msg = {{"op", "flow_ready"}, {"payload", {{"frames", video->frame_count()}}}};
      } catch (const FlowCancelled&) {
        return;
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        if (generation != generation_) return;
        status_ = FlowStatus::failed;
        flow_error_ = e.what();
        const auto* err = dynamic_cast<const Error*>(&e);
        done_msg = {{"op", "flow_failed"},
                    {"payload",
                     {{"code", to_string(err ? err->code() : ErrorCode::IoError)}, {"message", e.what()}}}};
      }
      if (push_) push_(done_msg);
    });
    if (wait) wait_for_flow();
  }

  ordered_json out;
  out["source"] = video->source_path();
  out["width"] = video->width();
  out["height"] = video->height();
  out["frames"] = video->frame_count();
  out["bit_depth"] = video->bit_depth();
  out["flow_status"] = to_string(flow_status());
  out["flow_cached"] = static_cast<bool>(cached);
  return out;
}

ordered_json Session::op_flow_status() {
  std::lock_guard lock(mutex_);
  ordered_json out;
  out["status"] = to_string(status_);
  out["done"] = progress_done_;
  out["total"] = progress_total_;
  if (status_ == FlowStatus::failed) out["error"] = flow_error_;
  return out;
}

ordered_json Session::op_create_track(const json& p) {
  const auto flow = require_flow();
  Anchor seed;
  seed.frame = need<int>(p, "frame");
  seed.pos = {need<double>(p, "x"), need<double>(p, "y")};
  seed.visible = want<bool>(p, "visible", true);
  seed.origin = AnchorOrigin::seed;
  seed.created_at = now_ms();
  std::string id = want<std::string>(p, "id", "");
  if (!id.empty() && tracks_.contains(id)) throw Error(ErrorCode::BadRequest, "track id '" + id + "' already exists");
  Track track = create_track(*flow, seed, id, want<std::string>(p, "label", ""));
  if (options_.strategy != Strategy::flow_blend) rebuild_all(track, *flow, options_);
  if (id.empty()) {
    do {
      id = "track-" + std::to_string(next_track_++);
    } while (tracks_.contains(id));
    track.id = id;
  }
  auto [it, inserted] = tracks_.emplace(id, std::move(track));
  return track_to_json(it->second, meta());
}

ordered_json Session::op_insert_anchor(const json& p) {
  const auto flow = require_flow();
  Track& track = require_track(p);
  Anchor a;
  a.frame = need<int>(p, "frame");
  a.pos = {need<double>(p, "x"), need<double>(p, "y")};
  a.visible = want<bool>(p, "visible", true);
  a.origin = AnchorOrigin::correction;
  a.created_at = now_ms();
  const RebuildStats stats = insert_anchor(track, a, *flow, options_);
  return edit_reply(track, stats);
}

ordered_json Session::op_remove_anchor(const json& p) {
  const auto flow = require_flow();
  Track& track = require_track(p);
  const RebuildStats stats = remove_anchor(track, need<int>(p, "frame"), *flow, options_);
  return edit_reply(track, stats);
}

ordered_json Session::op_set_visibility(const json& p) {
  const auto flow = require_flow();
  Track& track = require_track(p);
  const int frame = need<int>(p, "frame");
  const Anchor* existing = track.anchor_at(frame);
  if (!existing) throw Error(ErrorCode::NoSuchAnchor, "no anchor at frame " + std::to_string(frame));
  Anchor a = *existing;
  a.visible = need<bool>(p, "visible");
  const RebuildStats stats = insert_anchor(track, a, *flow, options_);
  return edit_reply(track, stats);
}

ordered_json Session::op_get_track(const json& p) { return track_to_json(require_track(p), meta()); }

ordered_json Session::op_list_tracks() {
  ordered_json list = ordered_json::array();
  for (const auto& [id, track] : tracks_) {
    ordered_json j;
    j["id"] = id;
    j["label"] = track.label;
    j["anchors"] = track.anchors.size();
    j["corrections"] = track.correction_count();
    list.push_back(std::move(j));
  }
  return {{"tracks", std::move(list)}};
}

ordered_json Session::op_delete_track(const json& p) {
  const Track& track = require_track(p);
  const std::string id = track.id;
  tracks_.erase(id);
  return {{"track_id", id}};
}

ordered_json Session::op_get_frame(const json& p) {
  const auto video = require_video();
  const int t = need<int>(p, "frame");
  if (t < 0 || t >= video->frame_count()) {
    throw Error(ErrorCode::FrameOutOfRange, "frame " + std::to_string(t) + " outside [0, " +
                                                std::to_string(video->frame_count() - 1) + "]");
  }
  const Image& pixels = video->frame(t).pixels;
  const auto png = encode_png(want<bool>(p, "equalize", false) ? equalize_histogram(pixels) : pixels);
  ordered_json out;
  out["frame"] = t;
  out["width"] = video->width();
  out["height"] = video->height();
  out["mime"] = "image/png";
  out["data"] = base64(png);
  return out;
}

ordered_json Session::op_evaluate_app(const json& p) {
  const Track& track = require_track(p);
  Track ref;
  if (p.contains("reference_id") && !p.at("reference_id").is_null()) {
    const auto id = need<std::string>(p, "reference_id");
    const auto it = tracks_.find(id);
    if (it == tracks_.end()) throw Error(ErrorCode::NoSuchTrack, "no track '" + id + "'");
    ref = it->second;
  } else if (p.contains("reference")) {
    ref = track_from_json(p.at("reference"));
  } else {
    throw Error(ErrorCode::NoReference, "payload: give 'reference' or 'reference_id'");
  }
  if (ref.points.size() != track.points.size()) {
    throw Error(ErrorCode::LengthMismatch, "reference has " + std::to_string(ref.points.size()) +
                                               " points, track has " + std::to_string(track.points.size()));
  }
  APPConfig cfg;
  if (p.contains("thresholds")) cfg.thresholds = need<std::vector<double>>(p, "thresholds");
  cfg.validate();
  const auto report = app(track.points, ref.points, joint_visibility(track.visibility, ref.visibility), cfg);
  return report_to_json(track.id, report);
}

ordered_json Session::op_export_tracks(const json& p) {
  std::vector<Track> list;
  if (p.contains("track_ids")) {
    for (const auto& id : need<std::vector<std::string>>(p, "track_ids")) {
      const auto it = tracks_.find(id);
      if (it == tracks_.end()) throw Error(ErrorCode::NoSuchTrack, "no track '" + id + "'");
      list.push_back(it->second);
    }
  } else {
    for (const auto& [id, track] : tracks_) list.push_back(track);
  }
  ordered_json doc = tracks_to_json(list, meta());
  const std::string path = want<std::string>(p, "path", "");
  if (!path.empty()) {
    write_tracks(path, list, meta());
    return {{"path", path}, {"tracks", list.size()}};
  }
  return doc;
}

ordered_json Session::op_import_tracks(const json& p) {
  const auto flow = require_flow();
  std::vector<Track> imported;
  if (p.contains("path")) {
    imported = read_tracks(need<std::string>(p, "path"));
  } else if (p.contains("document")) {
    imported = tracks_from_json(p.at("document"));
  } else {
    throw Error(ErrorCode::BadRequest, "payload: give 'document' or 'path'");
  }
  const bool replace = want<bool>(p, "replace", false);
  for (auto& track : imported) {
    if (track.anchors.empty()) throw Error(ErrorCode::NoAnchors, "track '" + track.id + "' has no anchors");
    if (track.id.empty() || (!replace && tracks_.contains(track.id))) {
      throw Error(ErrorCode::BadRequest, "track id '" + track.id + "' is empty or already exists");
    }
    for (const auto& a : track.anchors) {
      if (a.frame < 0 || a.frame >= flow->frame_count) {
        throw Error(ErrorCode::FrameOutOfRange, "track '" + track.id + "': anchor frame " +
                                                    std::to_string(a.frame) + " out of range");
      }
    }
  }
  if (replace) tracks_.clear();
  ordered_json ids = ordered_json::array();
  for (auto& track : imported) {
    // Stored points are kept as exported; tracks without a full point list
    // are rebuilt from their anchors.
    if (track.frame_count() != flow->frame_count) rebuild_all(track, *flow, options_);
    ids.push_back(track.id);
    tracks_[track.id] = std::move(track);
  }
  return {{"imported", std::move(ids)}};
}

}  // namespace trackflow
