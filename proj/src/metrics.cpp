#include "trackflow/metrics.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "trackflow/error.hpp"

namespace trackflow {

void APPConfig::validate() const {
  if (thresholds.empty()) throw Error(ErrorCode::BadConfig, "at least one threshold is required");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0)) throw Error(ErrorCode::BadConfig, "thresholds must be positive");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw Error(ErrorCode::BadConfig, "thresholds must be strictly increasing");
    }
  }
}

namespace {

void check_inputs(std::span<const Point2D> pred, std::span<const Point2D> ref, const std::vector<bool>& visible) {
  if (pred.size() != ref.size() || pred.size() != visible.size()) {
    throw Error(ErrorCode::LengthMismatch, "pred/ref/visibility lengths differ (" + std::to_string(pred.size()) +
                                               "/" + std::to_string(ref.size()) + "/" +
                                               std::to_string(visible.size()) + ")");
  }
}

}  // namespace

double point_precision(std::span<const Point2D> pred, std::span<const Point2D> ref,
                       const std::vector<bool>& visible, double tau) {
  APPConfig cfg;
  cfg.thresholds = {tau};
  return app(pred, ref, visible, cfg).per_threshold.front().precision;
}

APPReport app(std::span<const Point2D> pred, std::span<const Point2D> ref, const std::vector<bool>& visible,
              const APPConfig& cfg) {
  cfg.validate();
  check_inputs(pred, ref, visible);
  std::vector<int> hits(cfg.thresholds.size(), 0);
  int scored = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (!visible[t]) continue;
    ++scored;
    const double err = std::hypot(pred[t].x - ref[t].x, pred[t].y - ref[t].y);
    if (std::isnan(err)) continue;
    // Thresholds ascend, so the first one passed is passed by all later ones.
    auto it = std::lower_bound(cfg.thresholds.begin(), cfg.thresholds.end(), err);
    for (auto k = static_cast<std::size_t>(it - cfg.thresholds.begin()); k < hits.size(); ++k) ++hits[k];
  }
  if (scored == 0) throw Error(ErrorCode::NoVisibleFrames, "no visible frames to score");
  APPReport report;
  report.scored_frames = scored;
  double sum = 0.0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    const double pp = static_cast<double>(hits[k]) / scored;
    report.per_threshold.push_back({cfg.thresholds[k], pp});
    sum += pp;
  }
  report.app = sum / static_cast<double>(hits.size());
  return report;
}

double dataset_app(std::span<const double> apps) {
  if (apps.empty()) throw Error(ErrorCode::Empty, "no reports to aggregate");
  return std::accumulate(apps.begin(), apps.end(), 0.0) / static_cast<double>(apps.size());
}

double dataset_app(std::span<const APPReport> reports) {
  std::vector<double> apps;
  apps.reserve(reports.size());
  for (const auto& r : reports) apps.push_back(r.app);
  return dataset_app(std::span<const double>(apps));
}

std::vector<bool> joint_visibility(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "visibility masks differ in length");
  std::vector<bool> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
  return out;
}

DisagreementSummary disagreement(std::span<const Point2D> a, std::span<const Point2D> b,
                                 std::span<const int> paired_frames) {
  if (paired_frames.empty()) throw Error(ErrorCode::NoPairs, "no paired frames");
  DisagreementSummary s;
  for (int t : paired_frames) {
    if (t < 0 || static_cast<std::size_t>(t) >= a.size() || static_cast<std::size_t>(t) >= b.size()) {
      throw Error(ErrorCode::FrameOutOfRange, "paired frame " + std::to_string(t) + " not defined in both tracks");
    }
    s.frames.push_back(t);
    s.distances.push_back(std::hypot(a[t].x - b[t].x, a[t].y - b[t].y));
  }
  const auto n = static_cast<double>(s.distances.size());
  s.mean = std::accumulate(s.distances.begin(), s.distances.end(), 0.0) / n;
  std::vector<double> sorted = s.distances;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  s.median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  for (std::size_t i = 0; i < m; ++i) {
    if (i + 1 < m && sorted[i + 1] == sorted[i]) continue;
    s.cumulative.emplace_back(sorted[i], static_cast<double>(i + 1) / n);
  }
  return s;
}

std::string format_percent(double fraction) {
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double hundredths = std::nearbyint(fraction * 10000.0);
  std::fesetround(saved);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", hundredths / 100.0);
  return buf;
}

nlohmann::ordered_json report_to_json(const std::string& id, const APPReport& report) {
  nlohmann::ordered_json j;
  j["id"] = id;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& tp : report.per_threshold) {
    per.push_back({{"threshold", tp.threshold}, {"precision", tp.precision}});
  }
  j["per_threshold"] = std::move(per);
  j["app"] = report.app;
  j["app_percent"] = format_percent(report.app);
  j["scored_frames"] = report.scored_frames;
  return j;
}

namespace {

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_report_csv_header(std::ostream& out, const APPConfig& cfg) {
  out << "id";
  for (double tau : cfg.thresholds) out << ",pp_" << number(tau);
  out << ",app,scored_frames\n";
}

void write_report_csv_row(std::ostream& out, const std::string& id, const APPReport& report) {
  out << id;
  for (const auto& tp : report.per_threshold) out << ',' << number(tp.precision);
  out << ',' << number(report.app) << ',' << report.scored_frames << '\n';
}

}  // namespace trackflow
