#pragma once

// Independent reference implementations used to check the library. They are
// written for clarity, not speed, and share no code with src/ beyond types.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "trackflow/experiments.hpp"
#include "trackflow/flow.hpp"
#include "trackflow/track.hpp"

namespace oracle {

using trackflow::Point2D;

struct NaiveApp {
  std::vector<double> per_threshold;
  double app = 0.0;
  int scored = 0;
};

/// Per-threshold recount, one frame at a time.
NaiveApp naive_app(const std::vector<Point2D>& pred, const std::vector<Point2D>& ref,
                   const std::vector<bool>& vis, const std::vector<double>& thresholds);

/// Bilinear flow lookup with border clamping, written out longhand.
std::pair<double, double> bilinear_flow(const trackflow::FlowField& f, double x, double y);

struct ShortestPath {
  std::vector<Point2D> points;
  double cost = 0.0;
};

/// Dijkstra over the explicit corridor graph. Ties on cost go to the
/// lexicographically smallest position sequence (x before y per frame).
ShortestPath dijkstra_corridor(const trackflow::FlowVolume& flow, const trackflow::Anchor& left,
                               const trackflow::Anchor& right, double radius, double step);

/// Intervention count by splitting the visible frames into runs of matched
/// frames: each run costs one pick plus one relink per fragment change.
trackflow::InterventionCount run_based_cost(const std::vector<Point2D>& gt, const std::vector<bool>& vis,
                                            const trackflow::FragmentSet& fragments, double tolerance);

/// Flow volume whose fields are smooth random displacements of amplitude
/// up to `amplitude` px.
trackflow::FlowVolume random_flow(int width, int height, int frames, double amplitude, std::uint64_t seed);

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
