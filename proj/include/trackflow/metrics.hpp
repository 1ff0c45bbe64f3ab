#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trackflow/video.hpp"

namespace trackflow {

struct APPConfig {
  std::vector<double> thresholds{1.0, 2.0, 4.0, 8.0, 16.0};

  /// Throws BadConfig unless thresholds are positive and strictly increasing.
  void validate() const;
};

struct ThresholdPrecision {
  double threshold = 0.0;
  double precision = 0.0;
};

struct APPReport {
  std::vector<ThresholdPrecision> per_threshold;
  double app = 0.0;
  int scored_frames = 0;
};

/// Fraction of visible frames whose L2 error is <= tau.
double point_precision(std::span<const Point2D> pred, std::span<const Point2D> ref,
                       const std::vector<bool>& visible, double tau);

APPReport app(std::span<const Point2D> pred, std::span<const Point2D> ref, const std::vector<bool>& visible,
              const APPConfig& cfg = {});

/// Unweighted mean of trajectory-level APP values.
double dataset_app(std::span<const APPReport> reports);
double dataset_app(std::span<const double> apps);

/// A frame is scored only when both tracks mark it visible.
std::vector<bool> joint_visibility(const std::vector<bool>& a, const std::vector<bool>& b);

struct DisagreementSummary {
  std::vector<int> frames;
  std::vector<double> distances;
  double mean = 0.0;
  double median = 0.0;
  /// (distance, fraction of pairs with distance <= it), one entry per
  /// distinct distance in ascending order.
  std::vector<std::pair<double, double>> cumulative;
};

DisagreementSummary disagreement(std::span<const Point2D> a, std::span<const Point2D> b,
                                 std::span<const int> paired_frames);

/// Percentage with two decimals, ties rounded to even (0.97905 -> "97.90").
std::string format_percent(double fraction);

nlohmann::ordered_json report_to_json(const std::string& id, const APPReport& report);

/// Header: id, pp_<tau>..., app, scored_frames.
void write_report_csv_header(std::ostream& out, const APPConfig& cfg);
void write_report_csv_row(std::ostream& out, const std::string& id, const APPReport& report);

}  // namespace trackflow
