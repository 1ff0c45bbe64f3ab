#include <doctest.h>

#include <cmath>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "oracles.hpp"
#include "trackflow/error.hpp"
#include "trackflow/video.hpp"

using namespace trackflow;

namespace {

void write_png(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                              static_cast<std::streamsize>(bytes.size()));
}

Image ramp(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<float>((x + 2 * y) % 256) / 255.0f;
  return img;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Empty;
}

}  // namespace

TEST_SUITE("video") {
  TEST_CASE("directory of identical frames loads with its geometry") {
    oracle::TempDir dir;
    const Image img = ramp(64, 64);
    for (int i = 0; i < 5; ++i) write_png(dir / ("f" + std::to_string(i) + ".png"), img);
    const VideoSequence v = load_sequence(dir.path(), SequenceKind::image_dir);
    CHECK(v.frame_count() == 5);
    CHECK(v.width() == 64);
    CHECK(v.height() == 64);
    CHECK(v.bit_depth() == 8);
    for (int t = 0; t < 5; ++t) CHECK(v.frame(t).index == t);
    CHECK(v.frame(4).pixels.at(10, 3) == doctest::Approx(img.at(10, 3)).epsilon(1e-6));
  }

  TEST_CASE("image_dir frames sort lexicographically") {
    oracle::TempDir dir;
    write_png(dir / "b.png", Image(8, 8, 1.0f));
    write_png(dir / "a.png", Image(8, 8, 0.0f));
    write_png(dir / "c.png", Image(8, 8, 0.5f));
    const VideoSequence v = load_sequence(dir.path());
    CHECK(v.frame(0).pixels.at(0, 0) == 0.0f);
    CHECK(v.frame(1).pixels.at(0, 0) == 1.0f);
    CHECK(v.frame(2).pixels.at(0, 0) == doctest::Approx(128.0 / 255.0));
  }

  TEST_CASE("mismatched frame size is rejected") {
    oracle::TempDir dir;
    write_png(dir / "0.png", Image(64, 64));
    write_png(dir / "1.png", Image(32, 64));
    write_png(dir / "2.png", Image(64, 64));
    CHECK(code_of([&] { load_sequence(dir.path(), SequenceKind::image_dir); }) == ErrorCode::DimensionMismatch);
  }

  TEST_CASE("single frame is too short, missing path is not found") {
    oracle::TempDir dir;
    write_png(dir / "only.png", Image(16, 16));
    CHECK(code_of([&] { load_sequence(dir.path(), SequenceKind::image_dir); }) == ErrorCode::TooShort);
    CHECK(code_of([&] { load_sequence(dir / "missing.tif"); }) == ErrorCode::NotFound);
    CHECK(code_of([] { VideoSequence({Image(4, 4)}, "x", 8); }) == ErrorCode::TooShort);
    CHECK(code_of([] { VideoSequence({Image(4, 4), Image(4, 4)}, "x", 12); }) == ErrorCode::UnsupportedDepth);
  }

  TEST_CASE("16-bit stack is normalized by its own maximum") {
    oracle::TempDir dir;
    std::vector<Image> frames;
    for (int t = 0; t < 3; ++t) {
      Image img(16, 8);
      for (int i = 0; i < 16 * 8; ++i) img.pixels()[static_cast<std::size_t>(i)] = 0.25f * (i % 3) * (t + 1) / 3.0f;
      frames.push_back(img);
    }
    write_tiff_stack(VideoSequence(frames, "mem", 16), dir / "s.tif");
    const VideoSequence v = load_sequence(dir / "s.tif", SequenceKind::tiff_stack);
    CHECK(v.bit_depth() == 16);
    CHECK(v.frame_count() == 3);
    float hi = 0.0f;
    for (const auto& f : v.frames())
      for (float p : f.pixels.pixels()) hi = std::max(hi, p);
    CHECK(hi == 1.0f);
    // Ratios survive: frame 0 max is a third of frame 2 max.
    CHECK(v.frame(0).pixels.at(2, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-4));
  }

  TEST_CASE("colour frames: channel mean by default, explicit channel in RGB order") {
    oracle::TempDir dir;
    for (int i = 0; i < 2; ++i) {
      cv::Mat m(4, 4, CV_8UC3, cv::Scalar(30, 60, 90));  // BGR: blue 30, green 60, red 90
      cv::imwrite((dir / ("c" + std::to_string(i) + ".png")).string(), m);
    }
    const VideoSequence mean = load_sequence(dir.path());
    CHECK(mean.frame(0).pixels.at(1, 1) == doctest::Approx(60.0 / 255.0).epsilon(1e-6));
    LoadOptions red;
    red.channel = 0;
    CHECK(load_sequence(dir.path(), red).frame(1).pixels.at(2, 2) == doctest::Approx(90.0 / 255.0).epsilon(1e-6));
    LoadOptions bad;
    bad.channel = 5;
    CHECK(code_of([&] { load_sequence(dir.path(), bad); }) == ErrorCode::BadConfig);
  }

  TEST_CASE("loading is deterministic") {
    oracle::TempDir dir;
    std::vector<Image> frames{ramp(20, 10), ramp(20, 10)};
    write_tiff_stack(VideoSequence(frames, "mem", 16), dir / "s.tif");
    const VideoSequence a = load_sequence(dir / "s.tif");
    const VideoSequence b = load_sequence(dir / "s.tif");
    for (int t = 0; t < 2; ++t) {
      const auto pa = a.frame(t).pixels.pixels();
      const auto pb = b.frame(t).pixels.pixels();
      CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));
    }
  }

  TEST_CASE("rescale keeps constants, frame count, and checkerboard mean") {
    const VideoSequence flat(std::vector<Image>(3, Image(100, 100, 0.4f)), "mem", 8);
    const VideoSequence up = rescale_sequence(flat, 256, 256);
    CHECK(up.width() == 256);
    CHECK(up.frame_count() == 3);
    for (float p : up.frame(2).pixels.pixels()) CHECK(p == doctest::Approx(0.4f).epsilon(1e-6));

    const VideoSequence big(std::vector<Image>(10, Image(600, 600)), "mem", 8);
    CHECK(rescale_sequence(big, 256, 256).frame_count() == 10);

    Image board(64, 64);
    double src_mean = 0.0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        board.at(x, y) = ((x + y) % 2) ? 0.9f : 0.1f;
        src_mean += board.at(x, y);
      }
    src_mean /= 64.0 * 64.0;
    const Image half = resize_bilinear(board, 32, 32);
    double dst_mean = 0.0;
    for (float p : half.pixels()) dst_mean += p;
    dst_mean /= 32.0 * 32.0;
    CHECK(std::abs(dst_mean - src_mean) <= 1e-6);

    CHECK(code_of([&] { rescale_sequence(flat, 1, 10); }) == ErrorCode::BadSize);
  }

  TEST_CASE("rescale_points follows the ratio and round-trips") {
    const std::vector<Point2D> pts{{100, 100}, {0, 0}, {12.5, 599}};
    const auto s = rescale_points(pts, {600, 600}, {256, 256});
    CHECK(s[0].x == doctest::Approx(42.666666666666664));
    CHECK(s[0].y == doctest::Approx(42.666666666666664));
    CHECK(s[1] == Point2D{0, 0});
    const auto same = rescale_points(pts, {600, 600}, {600, 600});
    CHECK(same == pts);
    const auto back = rescale_points(rescale_points(pts, {600, 400}, {256, 300}), {256, 300}, {600, 400});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(std::abs(back[i].x - pts[i].x) <= 1e-9);
      CHECK(std::abs(back[i].y - pts[i].y) <= 1e-9);
    }
  }

  TEST_CASE("bilinear image sampling clamps to the border") {
    Image img(2, 2);
    img.at(0, 0) = 0.0f;
    img.at(1, 0) = 1.0f;
    img.at(0, 1) = 2.0f;
    img.at(1, 1) = 3.0f;
    CHECK(img.sample_bilinear(0.5, 0.5) == doctest::Approx(1.5));
    CHECK(img.sample_bilinear(-3, -3) == 0.0);
    CHECK(img.sample_bilinear(9, 9) == 3.0);
  }

  TEST_CASE("PNG encoding round-trips 8-bit values") {
    oracle::TempDir dir;
    const Image img = ramp(12, 7);
    write_png(dir / "a.png", img);
    write_png(dir / "b.png", img);
    const VideoSequence v = load_sequence(dir.path());
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 12; ++x) CHECK(v.frame(0).pixels.at(x, y) == doctest::Approx(img.at(x, y)).epsilon(1e-6));
  }
}
