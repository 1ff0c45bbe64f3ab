#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "trackflow/error.hpp"
#include "trackflow/experiments.hpp"
#include "trackflow/flow.hpp"
#include "trackflow/metrics.hpp"
#include "trackflow/readout.hpp"
#include "trackflow/server.hpp"
#include "trackflow/synth.hpp"
#include "trackflow/track.hpp"
#include "trackflow/track_io.hpp"
#include "trackflow/video.hpp"

namespace trackflow::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct FlowOptions {
  std::string backend = "dis";
  int patch_size = 8;
  int patch_stride = 4;
  int levels = 0;  // 0 = automatic
  int iterations = 12;
  bool no_refine = false;
  int search_radius = 8;
  bool equalize = false;

  FlowConfig config() const {
    FlowConfig cfg;
    cfg.backend = backend == "block_match" ? FlowBackend::block_match : FlowBackend::dis;
    cfg.patch_size = patch_size;
    cfg.patch_stride = patch_stride;
    if (levels > 0) cfg.pyramid_levels = levels;
    cfg.gradient_descent_iters = iterations;
    cfg.refinement = !no_refine;
    cfg.search_radius = search_radius;
    cfg.equalize = equalize;
    cfg.validate();
    return cfg;
  }
};

struct VideoInput {
  std::string video;
  std::string flow_cache;
  int channel = -1;
  FlowOptions flow;
};

void add_flow_options(CLI::App* app, FlowOptions& f) {
  app->add_option("--backend", f.backend, "Flow backend")
      ->check(CLI::IsMember({"dis", "block_match"}))
      ->capture_default_str();
  app->add_option("--patch-size", f.patch_size, "DIS patch size")->capture_default_str();
  app->add_option("--patch-stride", f.patch_stride, "DIS patch stride")->capture_default_str();
  app->add_option("--levels", f.levels, "Pyramid levels (0 = automatic)")->capture_default_str();
  app->add_option("--iterations", f.iterations, "Gradient-descent iterations per patch")->capture_default_str();
  app->add_flag("--no-refine", f.no_refine, "Skip the smoothing refinement");
  app->add_option("--search-radius", f.search_radius, "block_match search radius")->capture_default_str();
  app->add_flag("--equalize", f.equalize, "Histogram-equalize frames before flow");
}

void add_video_input(CLI::App* app, VideoInput& in) {
  app->add_option("--video", in.video, "TIFF stack or image directory");
  app->add_option("--flow-cache", in.flow_cache, "Flow cache file (read if present, else written)");
  app->add_option("--channel", in.channel, "Channel to keep, RGB order (default: channel mean)");
  add_flow_options(app, in.flow);
}

VideoSequence load_video(const std::string& path, int channel) {
  if (!fs::exists(path)) throw Error(ErrorCode::NotFound, path + ": video not found (--video)");
  LoadOptions opts;
  if (channel >= 0) opts.channel = channel;
  return load_sequence(path, opts);
}

FlowProgress progress_printer(std::ostream& err) {
  return [&err, last = -1](int done, int total) mutable {
    const int decile = total > 0 ? done * 10 / total : 10;
    if (decile != last) {
      last = decile;
      err << "flow " << done << '/' << total << '\n';
    }
  };
}

struct Loaded {
  std::optional<VideoSequence> video;
  FlowVolume flow;
  TrackMeta meta;
};

/// Flow from the cache when it exists, otherwise computed from the video
/// (and cached when a path was given).
Loaded load_flow(const VideoInput& in, std::ostream& err, bool need_video = false) {
  const FlowConfig cfg = in.flow.config();
  Loaded out;
  const bool cached = !in.flow_cache.empty() && fs::exists(in.flow_cache);
  if (!cached && in.video.empty()) {
    if (in.flow_cache.empty()) throw Error(ErrorCode::NotFound, "missing input: give --flow-cache or --video");
    throw Error(ErrorCode::NotFound,
                in.flow_cache + ": flow cache not found (--flow-cache) and no --video to compute it from");
  }
  if (!in.video.empty() && (need_video || !cached)) out.video = load_video(in.video, in.channel);
  if (cached) {
    out.flow = load_flow_cache(in.flow_cache);
    if (out.video && (out.video->width() != out.flow.width || out.video->height() != out.flow.height ||
                      out.video->frame_count() != out.flow.frame_count)) {
      throw Error(ErrorCode::DimensionMismatch, in.flow_cache + ": flow cache does not match --video " + in.video);
    }
  } else {
    out.flow = compute_flow(*out.video, cfg, progress_printer(err));
    if (!in.flow_cache.empty()) save_flow_cache(out.flow, in.flow_cache);
  }
  out.meta.source = out.video ? out.video->source_path() : in.flow_cache;
  out.meta.width = out.flow.width;
  out.meta.height = out.flow.height;
  out.meta.frame_count = out.flow.frame_count;
  return out;
}

std::string created_or_now(const std::string& created) { return created.empty() ? timestamp_now() : created; }

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, path + ": cannot open for writing");
  f << text;
  if (!f) throw Error(ErrorCode::IoError, path + ": write failed");
}

const Track& pick_track(const std::vector<Track>& tracks, const std::string& id, const std::string& file) {
  if (tracks.empty()) throw Error(ErrorCode::NoReference, file + ": no tracks");
  if (id.empty()) return tracks.front();
  for (const auto& t : tracks) {
    if (t.id == id) return t;
  }
  throw Error(ErrorCode::NoSuchTrack, file + ": no track with id '" + id + "' (--track-id)");
}

/// Pairs tracks by id; two single-track files pair regardless of id.
std::vector<std::pair<const Track*, const Track*>> pair_by_id(const std::vector<Track>& a, const std::vector<Track>& b,
                                                              const std::string& a_file, const std::string& b_file) {
  std::vector<std::pair<const Track*, const Track*>> pairs;
  if (a.size() == 1 && b.size() == 1) {
    pairs.emplace_back(&a.front(), &b.front());
    return pairs;
  }
  std::map<std::string, const Track*> by_id;
  for (const auto& t : a) by_id[t.id] = &t;
  for (const auto& t : b) {
    const auto it = by_id.find(t.id);
    if (it == by_id.end()) throw Error(ErrorCode::NoSuchTrack, a_file + ": no track with id '" + t.id + "' from " + b_file);
    pairs.emplace_back(it->second, &t);
  }
  return pairs;
}

std::vector<bool> visibility_or_all(const Track& t) {
  if (t.visibility.size() == t.points.size()) return t.visibility;
  return std::vector<bool>(t.points.size(), true);
}

ordered_json count_json(const InterventionCount& c) {
  return {{"init_pick", c.init_pick}, {"relink", c.relink}, {"manual", c.manual}, {"total", c.total()}};
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App cli{"Sparse-correction point tracking on precomputed optical flow", "trackflow"};
  cli.require_subcommand(1);
  cli.set_help_all_flag("--help-all", "Help for every subcommand");

  // flow
  VideoInput flow_in;
  std::string flow_out;
  auto* flow_cmd = cli.add_subcommand("flow", "Precompute optical flow and write a flow cache");
  flow_cmd->add_option("--video", flow_in.video, "TIFF stack or image directory")->required();
  flow_cmd->add_option("--out", flow_out, "Flow cache to write")->required();
  flow_cmd->add_option("--channel", flow_in.channel, "Channel to keep, RGB order (default: channel mean)");
  add_flow_options(flow_cmd, flow_in.flow);

  // track
  VideoInput track_in;
  std::string track_anchors, track_out, track_strategy = "flow_blend";
  double track_radius = 16.0, track_step = 1.0;
  auto* track_cmd = cli.add_subcommand("track", "Build full tracks from seed/anchor JSON");
  track_cmd->add_option("--anchors", track_anchors, "Track JSON with anchors (points optional)")->required();
  track_cmd->add_option("--out", track_out, "Track JSON to write")->required();
  track_cmd->add_option("--strategy", track_strategy, "Interpolation strategy")
      ->check(CLI::IsMember({"flow_blend", "linear", "corridor_dp"}))
      ->capture_default_str();
  track_cmd->add_option("--radius", track_radius, "corridor_dp lattice radius (px)")->capture_default_str();
  track_cmd->add_option("--lattice-step", track_step, "corridor_dp lattice spacing (px)")->capture_default_str();
  add_video_input(track_cmd, track_in);

  // eval
  std::string eval_pred, eval_ref, eval_out, eval_csv;
  std::vector<double> eval_thresholds{1, 2, 4, 8, 16};
  auto* eval_cmd = cli.add_subcommand("eval", "Score predicted tracks against references (APP)");
  eval_cmd->add_option("--pred", eval_pred, "Predicted track JSON")->required();
  eval_cmd->add_option("--ref", eval_ref, "Reference track JSON")->required();
  eval_cmd->add_option("--thresholds", eval_thresholds, "Pixel thresholds")->delimiter(',')->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Report JSON (default stdout)");
  eval_cmd->add_option("--csv", eval_csv, "Also write a per-track CSV");

  // scaling
  VideoInput scaling_in;
  std::string scaling_ref, scaling_track, scaling_out, scaling_json, scaling_strategy = "flow_blend";
  int scaling_trials = 100, scaling_max_k = -1;
  std::uint64_t scaling_seed = 0;
  double scaling_radius = 16.0, scaling_target = 0.0;
  auto* scaling_cmd = cli.add_subcommand("scaling", "APP versus number of corrections over random orders");
  scaling_cmd->add_option("--ref", scaling_ref, "Reference track JSON")->required();
  scaling_cmd->add_option("--track-id", scaling_track, "Reference track to use (default: first)");
  scaling_cmd->add_option("--trials", scaling_trials, "Random correction orders")->capture_default_str();
  scaling_cmd->add_option("--strategy", scaling_strategy, "Interpolation strategy")
      ->check(CLI::IsMember({"flow_blend", "linear", "corridor_dp"}))
      ->capture_default_str();
  scaling_cmd->add_option("--rng-seed", scaling_seed, "Seed of the correction orders")->capture_default_str();
  scaling_cmd->add_option("--max-k", scaling_max_k, "Stop after k corrections (default: all)");
  scaling_cmd->add_option("--radius", scaling_radius, "corridor_dp lattice radius (px)")->capture_default_str();
  scaling_cmd->add_option("--target", scaling_target, "Also report the smallest k reaching this APP");
  scaling_cmd->add_option("--out", scaling_out, "CSV to write (default stdout)");
  scaling_cmd->add_option("--json", scaling_json, "Also write the curve as JSON");
  add_video_input(scaling_cmd, scaling_in);

  // replace
  VideoInput replace_in;
  std::string replace_annotated, replace_ref, replace_out;
  auto* replace_cmd = cli.add_subcommand("replace", "Point-replacement study: annotator anchors vs reference anchors");
  replace_cmd->add_option("--annotated", replace_annotated, "Annotated track JSON (anchors used)")->required();
  replace_cmd->add_option("--ref", replace_ref, "Reference track JSON")->required();
  replace_cmd->add_option("--out", replace_out, "Report JSON (default stdout)");
  add_video_input(replace_cmd, replace_in);

  // cost
  std::string cost_gt, cost_fragments, cost_candidates, cost_out, cost_video;
  double cost_tolerance = kDefaultMatchTolerance;
  int cost_width = 0, cost_height = 0;
  auto* cost_cmd = cli.add_subcommand("cost", "Clicks needed to rebuild references from detect-and-link fragments");
  cost_cmd->add_option("--gt", cost_gt, "Reference track JSON")->required();
  cost_cmd->add_option("--fragments", cost_fragments, "Fragments (.json or TrackMate-style .xml)")->required();
  cost_cmd->add_option("--candidates", cost_candidates, "Corrected tracks whose anchors count as clicks");
  cost_cmd->add_option("--tolerance", cost_tolerance, "Match tolerance (px)")->capture_default_str();
  cost_cmd->add_option("--width", cost_width, "Image width for coordinate calibration");
  cost_cmd->add_option("--height", cost_height, "Image height for coordinate calibration");
  cost_cmd->add_option("--video", cost_video, "Take the calibration size from this video");
  cost_cmd->add_option("--out", cost_out, "Report JSON (default stdout)");

  // rescale
  std::string rescale_video, rescale_tracks, rescale_out_video, rescale_out_tracks;
  int rescale_width = 0, rescale_height = 0;
  auto* rescale_cmd = cli.add_subcommand("rescale", "Resample a video and its tracks to a new size");
  rescale_cmd->add_option("--video", rescale_video, "Input video")->required();
  rescale_cmd->add_option("--width", rescale_width, "New width")->required();
  rescale_cmd->add_option("--height", rescale_height, "New height")->required();
  rescale_cmd->add_option("--out-video", rescale_out_video, "Output 16-bit TIFF stack")->required();
  rescale_cmd->add_option("--tracks", rescale_tracks, "Track JSON to rescale");
  rescale_cmd->add_option("--out-tracks", rescale_out_tracks, "Rescaled track JSON");

  // readout
  std::string readout_video, readout_tracks, readout_track, readout_out, readout_dir, readout_mode = "nearest";
  int readout_baseline = 11;
  auto* readout_cmd = cli.add_subcommand("readout", "Sample intensity along tracks; dF/F0 and z-score CSV");
  readout_cmd->add_option("--video", readout_video, "Input video")->required();
  readout_cmd->add_option("--tracks", readout_tracks, "Track JSON")->required();
  readout_cmd->add_option("--track-id", readout_track, "Only this track");
  readout_cmd->add_option("--mode", readout_mode, "Sampling mode")
      ->check(CLI::IsMember({"nearest", "bilinear"}))
      ->capture_default_str();
  readout_cmd->add_option("--baseline", readout_baseline, "Baseline frames for F0")->capture_default_str();
  readout_cmd->add_option("--out", readout_out, "CSV for a single track (default stdout)");
  readout_cmd->add_option("--out-dir", readout_dir, "Directory for one <id>.csv per track");
  readout_cmd->add_option("--channel", flow_in.channel, "Channel to keep, RGB order (default: channel mean)");

  // synth
  SynthConfig synth_cfg;
  std::string synth_preset = "sinusoid", synth_video, synth_tracks;
  int synth_size = 0;
  auto* synth_cmd = cli.add_subcommand("synth", "Generate a synthetic video with exact reference tracks");
  synth_cmd->add_option("--preset", synth_preset, "Motion preset")
      ->check(CLI::IsMember({"static", "translate", "sinusoid", "deform"}))
      ->capture_default_str();
  synth_cmd->add_option("--frames", synth_cfg.frames, "Frame count")->capture_default_str();
  synth_cmd->add_option("--size", synth_size, "Square frame size (sets width and height)");
  synth_cmd->add_option("--width", synth_cfg.width, "Frame width")->capture_default_str();
  synth_cmd->add_option("--height", synth_cfg.height, "Frame height")->capture_default_str();
  synth_cmd->add_option("--targets", synth_cfg.targets, "Number of targets")->capture_default_str();
  synth_cmd->add_option("--noise", synth_cfg.noise, "Additive noise SD")->capture_default_str();
  synth_cmd->add_option("--seed", synth_cfg.seed, "Texture/noise seed")->capture_default_str();
  synth_cmd->add_option("--out-video", synth_video, "Output 16-bit TIFF stack")->required();
  synth_cmd->add_option("--out-tracks", synth_tracks, "Output reference track JSON")->required();

  // serve
  VideoInput serve_in;
  std::string serve_host = "127.0.0.1", serve_strategy = "flow_blend";
  std::uint16_t serve_port = kDefaultPort;
  auto* serve_cmd = cli.add_subcommand("serve", "Serve the JSON-lines protocol (TCP, websocket upgrade on GET)");
  serve_cmd->add_option("--host", serve_host, "Listen address")->capture_default_str();
  serve_cmd->add_option("--port", serve_port, "Listen port")->capture_default_str();
  serve_cmd->add_option("--strategy", serve_strategy, "Interpolation strategy")
      ->check(CLI::IsMember({"flow_blend", "linear", "corridor_dp"}))
      ->capture_default_str();
  add_video_input(serve_cmd, serve_in);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << cli.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << cli.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : cli.get_subcommands()) sub = s;
    err << (sub ? sub->help() : cli.help());
    return kExitUsage;
  }

  try {
    if (*flow_cmd) {
      const FlowConfig cfg = flow_in.flow.config();
      const VideoSequence video = load_video(flow_in.video, flow_in.channel);
      const FlowVolume flow = compute_flow(video, cfg, progress_printer(err));
      save_flow_cache(flow, flow_out);
      out << "wrote " << flow_out << " (" << flow.fields.size() << " fields, " << flow.width << 'x' << flow.height
          << ")\n";
    } else if (*track_cmd) {
      RebuildOptions options{parse_strategy(track_strategy), {track_radius, track_step}};
      track_in.flow.config();
      TrackMeta in_meta;
      std::vector<Track> tracks = read_tracks(track_anchors, &in_meta);
      const Loaded loaded = load_flow(track_in, err);
      for (auto& t : tracks) {
        if (t.anchors.empty()) throw Error(ErrorCode::NoAnchors, track_anchors + ": track '" + t.id + "' field 'anchors' is empty");
        for (const auto& a : t.anchors) {
          if (a.frame < 0 || a.frame >= loaded.flow.frame_count) {
            throw Error(ErrorCode::FrameOutOfRange, track_anchors + ": track '" + t.id + "' anchor field 'frame' = " +
                                                        std::to_string(a.frame) + " outside the video");
          }
        }
        rebuild_all(t, loaded.flow, options);
      }
      TrackMeta meta = loaded.meta;
      meta.created = created_or_now(in_meta.created);
      write_tracks(track_out, tracks, meta);
      out << "wrote " << track_out << " (" << tracks.size() << " tracks)\n";
    } else if (*eval_cmd) {
      APPConfig cfg{eval_thresholds};
      cfg.validate();
      const auto pred = read_tracks(eval_pred);
      const auto ref = read_tracks(eval_ref);
      ordered_json reports = ordered_json::array();
      std::vector<APPReport> all;
      std::ostringstream csv;
      write_report_csv_header(csv, cfg);
      for (const auto& [p, r] : pair_by_id(pred, ref, eval_pred, eval_ref)) {
        if (p->points.size() != r->points.size()) {
          throw Error(ErrorCode::LengthMismatch, eval_pred + ": track '" + p->id + "' field 'points' has " +
                                                     std::to_string(p->points.size()) + " entries, " + eval_ref +
                                                     " has " + std::to_string(r->points.size()));
        }
        const APPReport report =
            app(p->points, r->points, joint_visibility(visibility_or_all(*p), visibility_or_all(*r)), cfg);
        reports.push_back(report_to_json(r->id, report));
        write_report_csv_row(csv, r->id, report);
        all.push_back(report);
      }
      ordered_json doc;
      doc["tracks"] = std::move(reports);
      doc["dataset_app"] = dataset_app(all);
      doc["dataset_app_percent"] = format_percent(doc["dataset_app"].get<double>());
      write_text(eval_out, doc.dump(2) + "\n", out);
      if (!eval_csv.empty()) write_text(eval_csv, csv.str(), out);
    } else if (*scaling_cmd) {
      ScalingOptions options;
      options.trials = scaling_trials;
      options.strategy = parse_strategy(scaling_strategy);
      options.rng_seed = scaling_seed;
      options.corridor.radius = scaling_radius;
      if (scaling_max_k >= 0) options.max_k = scaling_max_k;
      if (scaling_trials < 1) throw Error(ErrorCode::BadConfig, "--trials must be >= 1");
      scaling_in.flow.config();
      const auto refs = read_tracks(scaling_ref);
      const Track& ref = pick_track(refs, scaling_track, scaling_ref);
      const Loaded loaded = load_flow(scaling_in, err);
      const ScalingCurve curve = scaling_curve(loaded.flow, ref, options);
      std::ostringstream csv;
      write_scaling_csv(csv, curve);
      write_text(scaling_out, csv.str(), out);
      ordered_json j = scaling_to_json(curve);
      if (scaling_target > 0.0) {
        j["target"] = scaling_target;
        j["k_min"] = nullptr;
        for (const auto& row : curve.rows) {
          if (row.app_max >= scaling_target) {
            j["k_min"] = row.k;
            break;
          }
        }
        err << "k_min for APP >= " << scaling_target << ": " << j["k_min"].dump() << '\n';
      }
      if (!scaling_json.empty()) write_text(scaling_json, j.dump(2) + "\n", out);
    } else if (*replace_cmd) {
      replace_in.flow.config();
      const auto annotated = read_tracks(replace_annotated);
      const auto refs = read_tracks(replace_ref);
      const Loaded loaded = load_flow(replace_in, err);
      ordered_json rows = ordered_json::array();
      for (const auto& [a, r] : pair_by_id(annotated, refs, replace_annotated, replace_ref)) {
        const ReplacementStudy study = point_replacement_study(loaded.flow, *a, *r);
        ordered_json row;
        row["id"] = r->id;
        row["anchors"] = a->anchors.size();
        row["original"] = report_to_json(r->id, study.original);
        row["replaced"] = report_to_json(r->id, study.replaced);
        row["delta_app"] = study.replaced.app - study.original.app;
        rows.push_back(std::move(row));
      }
      write_text(replace_out, ordered_json{{"tracks", std::move(rows)}}.dump(2) + "\n", out);
    } else if (*cost_cmd) {
      if (!(cost_tolerance > 0.0)) throw Error(ErrorCode::BadConfig, "--tolerance must be > 0");
      const auto gt = read_tracks(cost_gt);
      FragmentSet fragments;
      if (fs::path(cost_fragments).extension() == ".xml") {
        fragments = fragments_from_trackmate_xml(cost_fragments);
      } else {
        try {
          fragments = fragments_from_json(read_json_file(cost_fragments));
        } catch (const Error& e) {
          if (e.code() == ErrorCode::NotFound) throw;
          throw Error(e.code(), cost_fragments + ": " + e.what());
        }
      }
      Size2D image{cost_width, cost_height};
      if (!cost_video.empty()) {
        const VideoSequence v = load_video(cost_video, -1);
        image = {v.width(), v.height()};
      }
      double scale = 1.0;
      if (image.width > 0 && image.height > 0) scale = calibrate_fragments(fragments, image);

      std::vector<Track> candidates;
      if (!cost_candidates.empty()) candidates = read_tracks(cost_candidates);
      const Pairing pairing = match_tracks(gt, candidates);
      std::map<std::size_t, const Track*> matched;
      for (const auto& p : pairing.pairs) matched[p.gt] = &candidates[p.candidate];

      ordered_json rows = ordered_json::array();
      InterventionCount sum;
      int clicks = 0;
      for (std::size_t i = 0; i < gt.size(); ++i) {
        const InterventionCount c = intervention_cost(gt[i], fragments, cost_tolerance);
        sum.init_pick += c.init_pick;
        sum.relink += c.relink;
        sum.manual += c.manual;
        ordered_json row;
        row["id"] = gt[i].id;
        row["fragments"] = count_json(c);
        if (const auto it = matched.find(i); it != matched.end()) {
          const int n = static_cast<int>(it->second->anchors.size());
          clicks += n;
          row["candidate"] = it->second->id;
          row["anchors"] = n;
        }
        rows.push_back(std::move(row));
      }
      ordered_json doc;
      doc["tolerance"] = cost_tolerance;
      doc["calibration_scale"] = scale;
      doc["tracks"] = std::move(rows);
      doc["total"] = count_json(sum);
      if (!cost_candidates.empty()) {
        doc["candidate_clicks"] = clicks;
        doc["unmatched"] = pairing.unmatched_gt.size();
        if (clicks > 0) doc["ratio"] = static_cast<double>(sum.total()) / clicks;
      }
      write_text(cost_out, doc.dump(2) + "\n", out);
    } else if (*rescale_cmd) {
      if (rescale_width < 2 || rescale_height < 2) throw Error(ErrorCode::BadConfig, "--width and --height must be >= 2");
      if (!rescale_tracks.empty() && rescale_out_tracks.empty()) {
        throw Error(ErrorCode::BadConfig, "--tracks needs --out-tracks");
      }
      const VideoSequence video = load_video(rescale_video, -1);
      const VideoSequence scaled = rescale_sequence(video, rescale_width, rescale_height);
      write_tiff_stack(scaled, rescale_out_video);
      if (!rescale_tracks.empty()) {
        TrackMeta meta;
        auto tracks = read_tracks(rescale_tracks, &meta);
        const Size2D from{video.width(), video.height()};
        const Size2D to{rescale_width, rescale_height};
        for (auto& t : tracks) {
          t.points = rescale_points(t.points, from, to);
          for (auto& a : t.anchors) a.pos = rescale_points(std::span<const Point2D>(&a.pos, 1), from, to).front();
        }
        meta.source = rescale_out_video;
        meta.width = rescale_width;
        meta.height = rescale_height;
        meta.frame_count = video.frame_count();
        meta.created = created_or_now(meta.created);
        write_tracks(rescale_out_tracks, tracks, meta);
      }
      out << "wrote " << rescale_out_video << " (" << rescale_width << 'x' << rescale_height << ")\n";
    } else if (*readout_cmd) {
      if (!readout_out.empty() && !readout_dir.empty()) throw Error(ErrorCode::BadConfig, "give --out or --out-dir, not both");
      const VideoSequence video = load_video(readout_video, flow_in.channel);
      const auto tracks = read_tracks(readout_tracks);
      std::vector<const Track*> chosen;
      if (!readout_track.empty()) {
        chosen.push_back(&pick_track(tracks, readout_track, readout_tracks));
      } else {
        for (const auto& t : tracks) chosen.push_back(&t);
      }
      if (readout_dir.empty() && chosen.size() != 1) {
        throw Error(ErrorCode::BadConfig, "several tracks: use --track-id or --out-dir");
      }
      const SampleMode mode = readout_mode == "bilinear" ? SampleMode::bilinear : SampleMode::nearest;
      if (!readout_dir.empty()) fs::create_directories(readout_dir);
      for (const Track* t : chosen) {
        const SignalTrace trace = sample_intensity(video, *t, mode);
        std::vector<double> d;
        try {
          d = dff(trace, readout_baseline);
        } catch (const Error& e) {
          throw Error(e.code(), readout_tracks + ": track '" + t->id + "': " + e.what());
        }
        const std::vector<double> z = zscore(d);
        std::ostringstream csv;
        write_trace_csv(csv, trace, d, z);
        write_text(readout_dir.empty() ? readout_out : (fs::path(readout_dir) / (t->id + ".csv")).string(), csv.str(),
                   out);
      }
    } else if (*synth_cmd) {
      synth_cfg.preset = parse_preset(synth_preset);
      if (synth_size > 0) synth_cfg.width = synth_cfg.height = synth_size;
      const SynthScene scene = generate_synthetic(synth_cfg);
      write_tiff_stack(scene.video, synth_video);
      TrackMeta meta;
      meta.source = synth_video;
      meta.width = synth_cfg.width;
      meta.height = synth_cfg.height;
      meta.frame_count = synth_cfg.frames;
      // Synthetic data has no acquisition time; keep the output reproducible.
      meta.created = std::getenv("SOURCE_DATE_EPOCH") ? timestamp_now() : "1970-01-01T00:00:00Z";
      write_tracks(synth_tracks, scene.references, meta);
      out << "wrote " << synth_video << " and " << synth_tracks << " (" << scene.references.size() << " targets)\n";
    } else if (*serve_cmd) {
      ServerConfig cfg;
      cfg.host = serve_host;
      cfg.port = serve_port;
      cfg.options.strategy = parse_strategy(serve_strategy);
      serve_in.flow.config();
      if (!serve_in.video.empty() || !serve_in.flow_cache.empty()) {
        Loaded loaded = load_flow(serve_in, err, true);
        if (!loaded.video) throw Error(ErrorCode::NotFound, "serve: --video is required to preload frames");
        cfg.video = std::make_shared<VideoSequence>(std::move(*loaded.video));
        cfg.flow = std::make_shared<FlowVolume>(std::move(loaded.flow));
      }
      Server server(cfg);
      out << "listening on " << serve_host << ':' << server.port() << std::endl;
      server.run();
    }
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return e.code() == ErrorCode::BadConfig ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace trackflow::cli
