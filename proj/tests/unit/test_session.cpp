#include <doctest.h>

#include <atomic>
#include <mutex>

#include "oracles.hpp"
#include "trackflow/session.hpp"
#include "trackflow/synth.hpp"

using namespace trackflow;
using nlohmann::json;

namespace {

std::shared_ptr<const VideoSequence> flat_video(int frames, int size = 40) {
  return std::make_shared<VideoSequence>(std::vector<Image>(static_cast<std::size_t>(frames), Image(size, size, 0.3f)),
                                         "mem", 8);
}

json request(Session& s, const std::string& op, const json& payload = json::object(), int id = 1) {
  return json::parse(s.handle_message({{"op", op}, {"request_id", id}, {"payload", payload}}).dump());
}

std::string error_code(const json& reply) {
  REQUIRE(reply["ok"] == false);
  return reply["error"]["code"];
}

}  // namespace

TEST_SUITE("session") {
  TEST_CASE("create_track on zero flow yields a constant track") {
    Session s;
    s.attach(flat_video(8), std::make_shared<FlowVolume>(uniform_flow(40, 40, 8, {0, 0})));
    const json r = request(s, "create_track", {{"frame", 0}, {"x", 10}, {"y", 10}}, 7);
    CHECK(r["ok"] == true);
    CHECK(r["op"] == "create_track");
    CHECK(r["request_id"] == 7);
    const json& t = r["payload"];
    CHECK(t["id"] == "track-0");
    REQUIRE(t["points"].size() == 8);
    for (const auto& p : t["points"]) {
      CHECK(p["x"] == 10.0);
      CHECK(p["y"] == 10.0);
    }
    CHECK(t["anchors"][0]["origin"] == "seed");
    CHECK(t["meta"]["T"] == 8);
  }

  TEST_CASE("inserting the current estimate leaves the track unchanged") {
    Session s;
    s.attach(flat_video(10), std::make_shared<FlowVolume>(uniform_flow(40, 40, 10, {0.5, 0.25})));
    const json t = request(s, "create_track", {{"frame", 2}, {"x", 10}, {"y", 12}, {"id", "a"}})["payload"];
    const json est = t["points"][7];
    const json r = request(s, "insert_anchor", {{"track_id", "a"}, {"frame", 7}, {"x", est["x"]}, {"y", est["y"]}});
    REQUIRE(r["ok"] == true);
    const auto& after = s.tracks().at("a").points;
    for (int f = 0; f < 10; ++f) {
      CHECK(std::abs(after[static_cast<std::size_t>(f)].x - t["points"][f]["x"].get<double>()) <= 1e-9);
      CHECK(std::abs(after[static_cast<std::size_t>(f)].y - t["points"][f]["y"].get<double>()) <= 1e-9);
    }
    CHECK(r["payload"]["span_begin"] == 2);
    CHECK(r["payload"]["span_end"] == 9);
    CHECK(r["payload"]["points"].size() == 8);
    CHECK(r["payload"]["stats"]["frames_touched"] == 8);
    CHECK(r["payload"]["anchors"].size() == 2);
  }

  TEST_CASE("malformed input, unknown ops and bad payloads leave the session usable") {
    Session s;
    s.attach(flat_video(5), std::make_shared<FlowVolume>(uniform_flow(40, 40, 5, {0, 0})));
    const json bad = json::parse(s.handle_line("{").dump());
    CHECK(error_code(bad) == "ParseError");
    CHECK(bad["request_id"].is_null());
    CHECK(error_code(json::parse(s.handle_line("[1,2]").dump())) == "BadRequest");
    CHECK(error_code(json::parse(s.handle_line(R"({"request_id":3})").dump())) == "BadRequest");
    const json unknown = request(s, "fly", {}, 4);
    CHECK(error_code(unknown) == "UnknownOp");
    CHECK(unknown["request_id"] == 4);
    const json missing = request(s, "create_track", {{"frame", 0}, {"x", 1}});
    CHECK(error_code(missing) == "BadRequest");
    CHECK(missing["error"]["message"].get<std::string>().find("'y'") != std::string::npos);
    CHECK(error_code(request(s, "create_track", {{"frame", 9}, {"x", 1}, {"y", 1}})) == "FrameOutOfRange");
    CHECK(error_code(request(s, "get_track", {{"track_id", "nope"}})) == "NoSuchTrack");
    CHECK(request(s, "create_track", {{"frame", 0}, {"x", 1}, {"y", 2}})["ok"] == true);
    CHECK(error_code(request(s, "create_track", {{"frame", 0}, {"x", 1}, {"y", 2}, {"id", "track-0"}})) ==
          "BadRequest");
    CHECK(error_code(request(s, "remove_anchor", {{"track_id", "track-0"}, {"frame", 0}})) == "LastAnchor");
    CHECK(error_code(request(s, "remove_anchor", {{"track_id", "track-0"}, {"frame", 3}})) == "NoSuchAnchor");
    CHECK(error_code(request(s, "set_visibility", {{"track_id", "track-0"}, {"frame", 3}, {"visible", false}})) ==
          "NoSuchAnchor");
    const json line = json::parse(s.handle_line(R"({"op":"list_tracks","request_id":"x"})").dump());
    CHECK(line["ok"] == true);
    CHECK(line["request_id"] == "x");
    CHECK(line["payload"]["tracks"].size() == 1);
  }

  TEST_CASE("mutations wait for flow") {
    Session s;
    CHECK(error_code(request(s, "create_track", {{"frame", 0}, {"x", 1}, {"y", 1}})) == "SessionStateError");
    CHECK(error_code(request(s, "get_frame", {{"frame", 0}})) == "SessionStateError");
    s.attach(flat_video(4), nullptr);
    CHECK(s.flow_status() == FlowStatus::none);
    CHECK(error_code(request(s, "create_track", {{"frame", 0}, {"x", 1}, {"y", 1}})) == "SessionStateError");
    const json frame = request(s, "get_frame", {{"frame", 1}});
    CHECK(frame["ok"] == true);
    CHECK(frame["payload"]["mime"] == "image/png");
    CHECK(frame["payload"]["data"].get<std::string>().rfind("iVBORw0KGgo", 0) == 0);
    CHECK(error_code(request(s, "get_frame", {{"frame", 4}})) == "FrameOutOfRange");
  }

  TEST_CASE("load_video computes flow in the background and pushes progress") {
    oracle::TempDir dir;
    SynthConfig cfg;
    cfg.preset = SynthPreset::static_scene;
    cfg.frames = 4;
    cfg.width = cfg.height = 48;
    write_tiff_stack(generate_synthetic(cfg).video, dir / "v.tif");

    std::mutex m;
    std::vector<json> pushes;
    Session s([&](const nlohmann::ordered_json& msg) {
      std::lock_guard lock(m);
      pushes.push_back(json::parse(msg.dump()));
    });
    const json r = request(s, "load_video",
                           {{"path", (dir / "v.tif").string()}, {"flow_cache", (dir / "v.rplf").string()}});
    REQUIRE(r["ok"] == true);
    CHECK(r["payload"]["frames"] == 4);
    CHECK(r["payload"]["width"] == 48);
    CHECK(r["payload"]["flow_cached"] == false);
    s.wait_for_flow();
    CHECK(s.flow_status() == FlowStatus::ready);
    {
      std::lock_guard lock(m);
      REQUIRE(pushes.size() == 4);
      CHECK(pushes[0]["op"] == "flow_progress");
      CHECK(pushes[2]["payload"]["done"] == 3);
      CHECK(pushes[3]["op"] == "flow_ready");
    }
    const json st = request(s, "flow_status");
    CHECK(st["payload"]["status"] == "ready");
    CHECK(std::filesystem::exists(dir / "v.rplf"));

    // Second load hits the cache and is ready at once.
    const json again = request(s, "load_video",
                               {{"path", (dir / "v.tif").string()}, {"flow_cache", (dir / "v.rplf").string()}});
    CHECK(again["payload"]["flow_cached"] == true);
    CHECK(again["payload"]["flow_status"] == "ready");

    CHECK(error_code(request(s, "load_video", {{"path", (dir / "none.tif").string()}})) == "NotFound");
  }

  TEST_CASE("bad flow settings are rejected; worker failures are reported") {
    Session s;
    oracle::TempDir dir;
    write_tiff_stack(*flat_video(3), dir / "v.tif");
    CHECK(error_code(request(s, "load_video", {{"path", (dir / "v.tif").string()}, {"flow", {{"patch_stride", 99}}}})) ==
          "BadConfig");
    const json r = request(s, "load_video", {{"path", (dir / "v.tif").string()},
                                             {"flow_cache", (dir / "missing-dir" / "f.rplf").string()},
                                             {"wait", true}});
    REQUIRE(r["ok"] == true);
    CHECK(r["payload"]["flow_status"] == "failed");
    const json st = request(s, "flow_status");
    CHECK(st["payload"]["status"] == "failed");
    CHECK(st["payload"].contains("error"));
  }

  TEST_CASE("export then import round-trips exactly") {
    const auto flow = std::make_shared<FlowVolume>(oracle::random_flow(40, 40, 12, 2.0, 5));
    Session a;
    a.attach(flat_video(12), flow);
    request(a, "create_track", {{"frame", 3}, {"x", 11.5}, {"y", 20.25}, {"id", "n1"}, {"label", "cell"}});
    request(a, "insert_anchor", {{"track_id", "n1"}, {"frame", 9}, {"x", 15.125}, {"y", 22}});
    request(a, "insert_anchor", {{"track_id", "n1"}, {"frame", 6}, {"x", 14}, {"y", 21}, {"visible", false}});
    const json doc = request(a, "export_tracks")["payload"];

    Session b;
    b.attach(flat_video(12), flow);
    const json imp = request(b, "import_tracks", {{"document", doc}});
    REQUIRE(imp["ok"] == true);
    CHECK(imp["payload"]["imported"] == json::array({"n1"}));
    CHECK(request(b, "export_tracks")["payload"] == doc);
    CHECK(b.tracks().at("n1").points == a.tracks().at("n1").points);
    CHECK(b.tracks().at("n1").visibility == a.tracks().at("n1").visibility);

    CHECK(error_code(request(b, "import_tracks", {{"document", doc}})) == "BadRequest");
    CHECK(request(b, "import_tracks", {{"document", doc}, {"replace", true}})["ok"] == true);

    // Anchors only: rebuilt on import and identical to the original.
    json bare = doc;
    bare["tracks"][0].erase("points");
    bare["tracks"][0]["id"] = "n2";
    REQUIRE(request(b, "import_tracks", {{"document", bare}})["ok"] == true);
    CHECK(b.tracks().at("n2").points == a.tracks().at("n1").points);

    json far = bare;
    far["tracks"][0]["id"] = "n3";
    far["tracks"][0]["anchors"][0]["frame"] = 40;
    CHECK(error_code(request(b, "import_tracks", {{"document", far}})) == "FrameOutOfRange");
    CHECK_FALSE(b.tracks().contains("n3"));

    oracle::TempDir dir;
    const json saved = request(a, "export_tracks", {{"path", (dir / "t.json").string()}});
    CHECK(saved["payload"]["tracks"] == 1);
    Session c;
    c.attach(flat_video(12), flow);
    CHECK(request(c, "import_tracks", {{"path", (dir / "t.json").string()}})["ok"] == true);
    CHECK(c.tracks().at("n1").points == a.tracks().at("n1").points);
  }

  TEST_CASE("protocol edits match direct engine calls") {
    const auto flow = std::make_shared<FlowVolume>(oracle::random_flow(40, 40, 15, 2.0, 9));
    Session s;
    s.attach(flat_video(15), flow);
    Anchor seed;
    seed.frame = 0;
    seed.pos = {20, 20};
    Track direct = create_track(*flow, seed, "d");
    request(s, "create_track", {{"frame", 0}, {"x", 20}, {"y", 20}, {"id", "d"}});
    for (auto [f, x, y] : {std::tuple{8, 22.0, 18.0}, {4, 19.0, 21.5}, {14, 25.0, 17.0}}) {
      Anchor a;
      a.frame = f;
      a.pos = {x, y};
      insert_anchor(direct, a, *flow);
      request(s, "insert_anchor", {{"track_id", "d"}, {"frame", f}, {"x", x}, {"y", y}});
    }
    remove_anchor(direct, 4, *flow);
    request(s, "remove_anchor", {{"track_id", "d"}, {"frame", 4}});
    CHECK(s.tracks().at("d").points == direct.points);

    const json vis = request(s, "set_visibility", {{"track_id", "d"}, {"frame", 8}, {"visible", false}});
    REQUIRE(vis["ok"] == true);
    CHECK(s.tracks().at("d").visibility[10] == false);
    CHECK(s.tracks().at("d").visibility[14] == true);

    const json list = request(s, "list_tracks")["payload"]["tracks"];
    CHECK(list[0]["anchors"] == 3);
    CHECK(list[0]["corrections"] == 2);
  }

  TEST_CASE("evaluate_app against another track or an inline reference") {
    Session s;
    s.attach(flat_video(6), std::make_shared<FlowVolume>(uniform_flow(40, 40, 6, {0, 0})));
    request(s, "create_track", {{"frame", 0}, {"x", 10}, {"y", 10}, {"id", "p"}});
    request(s, "create_track", {{"frame", 0}, {"x", 13}, {"y", 10}, {"id", "r"}});
    const json rep = request(s, "evaluate_app", {{"track_id", "p"}, {"reference_id", "r"}});
    REQUIRE(rep["ok"] == true);
    CHECK(rep["payload"]["app"].get<double>() == doctest::Approx(0.6));
    CHECK(rep["payload"]["app_percent"] == "60.00");
    const json inline_ref = request(s, "export_tracks", {{"track_ids", {"p"}}})["payload"]["tracks"][0];
    const json same = request(s, "evaluate_app", {{"track_id", "r"}, {"reference", inline_ref}, {"thresholds", {3}}});
    CHECK(same["payload"]["app"] == 1.0);
    CHECK(error_code(request(s, "evaluate_app", {{"track_id", "p"}})) == "NoReference");
    CHECK(request(s, "delete_track", {{"track_id", "p"}})["ok"] == true);
    CHECK(s.tracks().size() == 1);
  }

  TEST_CASE("session strategy applies to every rebuild") {
    const auto flow = std::make_shared<FlowVolume>(oracle::random_flow(40, 40, 10, 2.0, 3));
    RebuildOptions lin;
    lin.strategy = Strategy::linear;
    Session s({}, lin);
    s.attach(flat_video(10), flow);
    request(s, "create_track", {{"frame", 0}, {"x", 5}, {"y", 5}, {"id", "l"}});
    request(s, "insert_anchor", {{"track_id", "l"}, {"frame", 9}, {"x", 14}, {"y", 5}});
    const auto& pts = s.tracks().at("l").points;
    CHECK(pts[3].x == doctest::Approx(8.0));
    CHECK(pts[3].y == doctest::Approx(5.0));
  }
}
