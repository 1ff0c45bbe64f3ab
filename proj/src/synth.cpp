#include "trackflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "trackflow/error.hpp"
#include "trackflow/rng.hpp"

namespace trackflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSinusoidPeriod = 50.0;
constexpr double kRotationPeriod = 120.0;
constexpr double kScalePeriod = 90.0;

struct Motion {
  const SynthConfig& cfg;
  double cx;
  double cy;

  explicit Motion(const SynthConfig& c)
      : cfg(c), cx((c.width - 1) / 2.0), cy((c.height - 1) / 2.0) {}

  double sinusoid_amplitude() const { return std::max(6.0, 0.04 * std::min(cfg.width, cfg.height)); }

  Point2D sinusoid_offset(Point2D p, int t) const {
    const double gain = 1.0 + 0.25 * (p.x - cx) / cfg.width;
    const double a = gain * sinusoid_amplitude();
    const double phase = kTwoPi * t / kSinusoidPeriod;
    return {a * std::sin(phase), 0.5 * a * std::sin(2.0 * phase)};
  }

  void rotation_scale(int t, double& c, double& s, double& scale) const {
    const double theta = 0.12 * std::sin(kTwoPi * t / kRotationPeriod);
    scale = 1.0 + 0.06 * std::sin(kTwoPi * t / kScalePeriod);
    c = std::cos(theta);
    s = std::sin(theta);
  }

  Point2D forward(Point2D p, int t) const {
    switch (cfg.preset) {
      case SynthPreset::static_scene:
        return p;
      case SynthPreset::translate: {
        const double span = std::max(cfg.frames - 1, 1);
        return {p.x + 0.2 * cfg.width * t / span, p.y + 0.1 * cfg.height * t / span};
      }
      case SynthPreset::sinusoid: {
        const Point2D d = sinusoid_offset(p, t);
        return {p.x + d.x, p.y + d.y};
      }
      case SynthPreset::deform: {
        double c, s, k;
        rotation_scale(t, c, s, k);
        const double rx = p.x - cx;
        const double ry = p.y - cy;
        return {cx + k * (c * rx - s * ry), cy + k * (s * rx + c * ry)};
      }
    }
    return p;
  }

  Point2D inverse(Point2D x, int t) const {
    switch (cfg.preset) {
      case SynthPreset::static_scene:
        return x;
      case SynthPreset::translate: {
        const double span = std::max(cfg.frames - 1, 1);
        return {x.x - 0.2 * cfg.width * t / span, x.y - 0.1 * cfg.height * t / span};
      }
      case SynthPreset::sinusoid: {
        // The offset varies slowly in x, so the fixed point converges fast.
        Point2D p = x;
        for (int i = 0; i < 6; ++i) {
          const Point2D d = sinusoid_offset(p, t);
          p = {x.x - d.x, x.y - d.y};
        }
        return p;
      }
      case SynthPreset::deform: {
        double c, s, k;
        rotation_scale(t, c, s, k);
        const double rx = (x.x - cx) / k;
        const double ry = (x.y - cy) / k;
        return {cx + c * rx + s * ry, cy - s * rx + c * ry};
      }
    }
    return x;
  }
};

void add_gaussian(cv::Mat& tex, Point2D center, double sigma, double amplitude) {
  const int reach = static_cast<int>(std::ceil(4.0 * sigma));
  const int x0 = std::max(0, static_cast<int>(std::floor(center.x)) - reach);
  const int x1 = std::min(tex.cols - 1, static_cast<int>(std::ceil(center.x)) + reach);
  const int y0 = std::max(0, static_cast<int>(std::floor(center.y)) - reach);
  const int y1 = std::min(tex.rows - 1, static_cast<int>(std::ceil(center.y)) + reach);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = y0; y <= y1; ++y) {
    float* row = tex.ptr<float>(y);
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - center.x;
      const double dy = y - center.y;
      row[x] += static_cast<float>(amplitude * std::exp(-(dx * dx + dy * dy) * inv));
    }
  }
}

cv::Mat noise_mat(int width, int height, double sigma, std::uint64_t seed) {
  CounterRng rng(seed, 0x7465787475726531ULL);
  cv::Mat m(height, width, CV_32F);
  for (int y = 0; y < height; ++y) {
    float* row = m.ptr<float>(y);
    for (int x = 0; x < width; ++x) row[x] = static_cast<float>(rng.uniform());
  }
  cv::GaussianBlur(m, m, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT);
  double lo = 0.0, hi = 0.0;
  cv::minMaxLoc(m, &lo, &hi);
  if (hi > lo) m = (m - lo) / (hi - lo);
  return m;
}

}  // namespace

std::string_view to_string(SynthPreset preset) {
  switch (preset) {
    case SynthPreset::static_scene: return "static";
    case SynthPreset::translate: return "translate";
    case SynthPreset::sinusoid: return "sinusoid";
    case SynthPreset::deform: return "deform";
  }
  return "static";
}

SynthPreset parse_preset(std::string_view name) {
  if (name == "static") return SynthPreset::static_scene;
  if (name == "translate") return SynthPreset::translate;
  if (name == "sinusoid") return SynthPreset::sinusoid;
  if (name == "deform") return SynthPreset::deform;
  throw Error(ErrorCode::BadConfig, "unknown synth preset '" + std::string(name) + "'");
}

Image smooth_texture(int width, int height, double sigma, std::uint64_t seed) {
  const cv::Mat m = noise_mat(width, height, sigma, seed);
  Image img(width, height);
  for (int y = 0; y < height; ++y) std::copy_n(m.ptr<float>(y), width, img.row(y));
  return img;
}

Image shift_wrap(const Image& img, int dx, int dy) {
  const int w = img.width();
  const int h = img.height();
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    const int sy = ((y - dy) % h + h) % h;
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(((x - dx) % w + w) % w, sy);
  }
  return out;
}

Point2D synth_position(const SynthConfig& cfg, Point2D p, int t) { return Motion(cfg).forward(p, t); }

SynthScene generate_synthetic(const SynthConfig& cfg) {
  if (cfg.frames < 2) throw Error(ErrorCode::TooShort, "synthetic sequence needs at least 2 frames");
  if (cfg.width < 32 || cfg.height < 32) throw Error(ErrorCode::BadSize, "synthetic frames must be >= 32x32");
  if (cfg.targets < 0 || cfg.noise < 0.0) throw Error(ErrorCode::BadConfig, "targets and noise must be >= 0");

  const Motion motion(cfg);
  const int w = cfg.width;
  const int h = cfg.height;

  // Texture margin large enough for every inverse-mapped frame corner.
  double reach = 0.0;
  for (int t = 0; t < cfg.frames; ++t) {
    for (Point2D corner : {Point2D{0, 0}, Point2D{w - 1.0, 0}, Point2D{0, h - 1.0}, Point2D{w - 1.0, h - 1.0}}) {
      const Point2D q = motion.inverse(corner, t);
      reach = std::max({reach, std::abs(q.x - corner.x), std::abs(q.y - corner.y)});
    }
  }
  const int margin = static_cast<int>(std::ceil(reach)) + 4;
  const int tw = w + 2 * margin;
  const int th = h + 2 * margin;

  cv::Mat tex = 0.45 * noise_mat(tw, th, 2.0, cfg.seed) + 0.25 * noise_mat(tw, th, 7.0, cfg.seed + 1);
  CounterRng layout(cfg.seed, 0x626c6f6273ULL);
  const int cells = tw * th / 900;
  for (int i = 0; i < cells; ++i) {
    const Point2D c{layout.uniform() * tw, layout.uniform() * th};
    add_gaussian(tex, c, 2.0 + 2.0 * layout.uniform(), 0.1 + 0.1 * layout.uniform());
  }

  std::vector<Point2D> starts;
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double ring = 0.2 * std::min(w, h);
  const double sigma = 3.0 + 0.005 * std::min(w, h);
  for (int i = 0; i < cfg.targets; ++i) {
    const double angle = kTwoPi * (i + 0.3 * layout.uniform()) / std::max(cfg.targets, 1);
    const Point2D p{cx + ring * std::cos(angle) - 0.1 * w, cy + ring * std::sin(angle)};
    starts.push_back(p);
    add_gaussian(tex, {p.x + margin, p.y + margin}, sigma, 0.6);
  }
  cv::min(tex, 1.0, tex);

  Image texture(tw, th);
  for (int y = 0; y < th; ++y) std::copy_n(tex.ptr<float>(y), tw, texture.row(y));
  tex.release();

  std::vector<Image> frames;
  frames.reserve(static_cast<std::size_t>(cfg.frames));
  CounterRng noise(cfg.seed, 0x6e6f697365ULL);
  for (int t = 0; t < cfg.frames; ++t) {
    Image frame(w, h);
    for (int y = 0; y < h; ++y) {
      float* row = frame.row(y);
      for (int x = 0; x < w; ++x) {
        const Point2D q = motion.inverse({static_cast<double>(x), static_cast<double>(y)}, t);
        double v = texture.sample_bilinear(q.x + margin, q.y + margin);
        if (cfg.noise > 0.0) v += cfg.noise * noise.normal();
        row[x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    frames.push_back(std::move(frame));
  }

  SynthScene scene{VideoSequence(std::move(frames), "synth:" + std::string(to_string(cfg.preset)), 16), {}};
  for (int i = 0; i < cfg.targets; ++i) {
    Track ref;
    ref.id = "target-" + std::to_string(i);
    ref.label = std::string(to_string(cfg.preset)) + " target " + std::to_string(i);
    for (int t = 0; t < cfg.frames; ++t) ref.points.push_back(motion.forward(starts[static_cast<std::size_t>(i)], t));
    ref.visibility.assign(static_cast<std::size_t>(cfg.frames), true);
    Anchor seed;
    seed.frame = 0;
    seed.pos = ref.points.front();
    seed.origin = AnchorOrigin::seed;
    ref.anchors.push_back(seed);
    scene.references.push_back(std::move(ref));
  }
  return scene;
}

}  // namespace trackflow
