#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>

#include <json.hpp>

#include "trackflow/flow.hpp"
#include "trackflow/track.hpp"
#include "trackflow/track_io.hpp"
#include "trackflow/video.hpp"

namespace trackflow {

enum class FlowStatus { none, pending, ready, failed };

std::string_view to_string(FlowStatus status);

/// One client's editing state. Requests are handled synchronously on the
/// caller's thread; flow computation started by load_video runs on a
/// background thread and reports through the push callback.
///
/// Replies: {op, request_id, ok: true, payload} or
///          {op, request_id, ok: false, error: {code, message}}.
class Session {
 public:
  /// Receives unsolicited messages (flow_progress, flow_ready, flow_failed).
  /// May be called from the flow worker thread.
  using Push = std::function<void(const nlohmann::ordered_json&)>;

  explicit Session(Push push = {}, RebuildOptions options = {});
  ~Session();

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Parses one protocol line; malformed input yields a ParseError reply.
  nlohmann::ordered_json handle_line(std::string_view line);
  nlohmann::ordered_json handle_message(const nlohmann::json& msg);

  /// Installs an already loaded video and its flow; drops existing tracks.
  void attach(std::shared_ptr<const VideoSequence> video, std::shared_ptr<const FlowVolume> flow);

  FlowStatus flow_status() const;
  /// Blocks until the background flow job (if any) has finished.
  void wait_for_flow();

  const std::map<std::string, Track>& tracks() const { return tracks_; }

 private:
  nlohmann::ordered_json dispatch(const std::string& op, const nlohmann::json& payload);

  nlohmann::ordered_json op_load_video(const nlohmann::json& p);
  nlohmann::ordered_json op_flow_status();
  nlohmann::ordered_json op_create_track(const nlohmann::json& p);
  nlohmann::ordered_json op_insert_anchor(const nlohmann::json& p);
  nlohmann::ordered_json op_remove_anchor(const nlohmann::json& p);
  nlohmann::ordered_json op_set_visibility(const nlohmann::json& p);
  nlohmann::ordered_json op_get_track(const nlohmann::json& p);
  nlohmann::ordered_json op_list_tracks();
  nlohmann::ordered_json op_delete_track(const nlohmann::json& p);
  nlohmann::ordered_json op_get_frame(const nlohmann::json& p);
  nlohmann::ordered_json op_evaluate_app(const nlohmann::json& p);
  nlohmann::ordered_json op_export_tracks(const nlohmann::json& p);
  nlohmann::ordered_json op_import_tracks(const nlohmann::json& p);

  std::shared_ptr<const VideoSequence> require_video() const;
  std::shared_ptr<const FlowVolume> require_flow() const;
  Track& require_track(const nlohmann::json& p);
  TrackMeta meta() const;
  nlohmann::ordered_json edit_reply(const Track& track, const RebuildStats& stats) const;

  Push push_;
  RebuildOptions options_;

  mutable std::mutex mutex_;  // guards the fields below
  std::shared_ptr<const VideoSequence> video_;
  std::shared_ptr<const FlowVolume> flow_;
  FlowStatus status_ = FlowStatus::none;
  int progress_done_ = 0;
  int progress_total_ = 0;
  std::string flow_error_;
  unsigned generation_ = 0;

  std::jthread worker_;
  std::map<std::string, Track> tracks_;
  int next_track_ = 0;
};

}  // namespace trackflow
