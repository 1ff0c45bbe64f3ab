#include "trackflow/readout.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "trackflow/error.hpp"

namespace trackflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string number(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SignalTrace sample_intensity(const VideoSequence& video, const Track& track, SampleMode mode) {
  if (track.frame_count() != video.frame_count()) {
    throw Error(ErrorCode::GeometryMismatch, "track has " + std::to_string(track.frame_count()) +
                                                 " frames, video has " + std::to_string(video.frame_count()));
  }
  SignalTrace trace;
  trace.track_id = track.id;
  trace.values.assign(track.points.size(), kNaN);
  trace.valid.assign(track.points.size(), false);
  const double max_x = video.width() - 1;
  const double max_y = video.height() - 1;
  for (std::size_t t = 0; t < track.points.size(); ++t) {
    if (t < track.visibility.size() && !track.visibility[t]) continue;
    const Point2D p = track.points[t];
    const Image& img = video.frame(static_cast<int>(t)).pixels;
    if (mode == SampleMode::nearest) {
      const double cx = std::round(p.x);
      const double cy = std::round(p.y);
      if (!(cx >= 0 && cx <= max_x && cy >= 0 && cy <= max_y)) continue;
      trace.values[t] = img.at(static_cast<int>(cx), static_cast<int>(cy));
    } else {
      if (!(p.x >= 0 && p.x <= max_x && p.y >= 0 && p.y <= max_y)) continue;
      trace.values[t] = img.sample_bilinear(p.x, p.y);
    }
    trace.valid[t] = true;
  }
  return trace;
}

std::vector<double> dff(const SignalTrace& trace, int baseline_frames) {
  if (baseline_frames < 1 || trace.values.size() < static_cast<std::size_t>(baseline_frames)) {
    throw Error(ErrorCode::ShortTrace, "trace shorter than the baseline window");
  }
  double f0 = 0.0;
  for (int t = 0; t < baseline_frames; ++t) {
    if (!trace.valid[static_cast<std::size_t>(t)]) {
      throw Error(ErrorCode::ShortTrace, "baseline frame " + std::to_string(t) + " is not valid");
    }
    f0 += trace.values[static_cast<std::size_t>(t)];
  }
  f0 /= baseline_frames;
  if (f0 == 0.0) throw Error(ErrorCode::ZeroBaseline, "baseline mean is zero");
  std::vector<double> out(trace.values.size(), kNaN);
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (trace.valid[t]) out[t] = (trace.values[t] - f0) / f0;
  }
  return out;
}

std::vector<double> zscore(std::span<const double> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::ZeroVariance, "no finite values");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (!(sd > 0.0)) throw Error(ErrorCode::ZeroVariance, "standard deviation is zero");
  std::vector<double> out(values.begin(), values.end());
  for (double& v : out) {
    if (std::isfinite(v)) v = (v - mean) / sd;
  }
  return out;
}

void write_trace_csv(std::ostream& out, const SignalTrace& trace, std::span<const double> dff_values,
                     std::span<const double> z_values) {
  out << "frame,raw,dff,zscore,valid\n";
  for (std::size_t t = 0; t < trace.values.size(); ++t) {
    out << t << ',' << number(trace.values[t]) << ','
        << (t < dff_values.size() ? number(dff_values[t]) : "") << ','
        << (t < z_values.size() ? number(z_values[t]) : "") << ',' << (trace.valid[t] ? 1 : 0) << '\n';
  }
}

}  // namespace trackflow
