#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>
#include <stdexcept>

namespace oracle {

using trackflow::Anchor;
using trackflow::FlowField;
using trackflow::FlowVolume;

NaiveApp naive_app(const std::vector<Point2D>& pred, const std::vector<Point2D>& ref, const std::vector<bool>& vis,
                   const std::vector<double>& thresholds) {
  NaiveApp out;
  for (bool v : vis) out.scored += v ? 1 : 0;
  double total = 0.0;
  for (double tau : thresholds) {
    int within = 0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
      if (!vis[t]) continue;
      const double dx = pred[t].x - ref[t].x;
      const double dy = pred[t].y - ref[t].y;
      if (std::sqrt(dx * dx + dy * dy) <= tau) ++within;
    }
    const double pp = static_cast<double>(within) / out.scored;
    out.per_threshold.push_back(pp);
    total += pp;
  }
  out.app = total / static_cast<double>(thresholds.size());
  return out;
}

std::pair<double, double> bilinear_flow(const FlowField& f, double x, double y) {
  const int w = f.dx.width();
  const int h = f.dx.height();
  x = std::min(std::max(x, 0.0), w - 1.0);
  y = std::min(std::max(y, 0.0), h - 1.0);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  auto lerp2 = [&](const trackflow::Image& img) {
    const double top = img.at(x0, y0) * (1.0 - ax) + img.at(x1, y0) * ax;
    const double bottom = img.at(x0, y1) * (1.0 - ax) + img.at(x1, y1) * ax;
    return top * (1.0 - ay) + bottom * ay;
  };
  return {lerp2(f.dx), lerp2(f.dy)};
}

namespace {

bool path_less(const std::vector<Point2D>& a, const std::vector<Point2D>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [](const Point2D& p, const Point2D& q) {
    return p.x < q.x || (p.x == q.x && p.y < q.y);
  });
}

}  // namespace

ShortestPath dijkstra_corridor(const FlowVolume& flow, const Anchor& left, const Anchor& right, double radius,
                               double step) {
  const int n = right.frame - left.frame;
  std::vector<std::vector<Point2D>> layers(static_cast<std::size_t>(n) + 1);
  layers.front().push_back({std::round(left.pos.x), std::round(left.pos.y)});
  layers.back().push_back({std::round(right.pos.x), std::round(right.pos.y)});
  const int reach = static_cast<int>(std::floor(radius / step + 1e-9));
  for (int i = 1; i < n; ++i) {
    const double a = static_cast<double>(i) / n;
    const double cx = std::round((1.0 - a) * left.pos.x + a * right.pos.x);
    const double cy = std::round((1.0 - a) * left.pos.y + a * right.pos.y);
    for (int dx = -reach; dx <= reach; ++dx) {
      for (int dy = -reach; dy <= reach; ++dy) layers[static_cast<std::size_t>(i)].push_back({cx + dx * step, cy + dy * step});
    }
  }

  // Node ids: (layer, index) flattened.
  std::vector<int> offset(layers.size() + 1, 0);
  for (std::size_t l = 0; l < layers.size(); ++l) offset[l + 1] = offset[l] + static_cast<int>(layers[l].size());
  const int nodes = offset.back();
  auto layer_of = [&](int id) {
    return static_cast<int>(std::upper_bound(offset.begin(), offset.end(), id) - offset.begin()) - 1;
  };
  std::vector<double> dist(static_cast<std::size_t>(nodes), std::numeric_limits<double>::infinity());
  std::vector<std::vector<Point2D>> best(static_cast<std::size_t>(nodes));
  std::vector<bool> settled(static_cast<std::size_t>(nodes), false);

  using Key = std::tuple<double, int, int>;  // dist, layer, node
  std::set<Key> open;
  dist[0] = 0.0;
  best[0] = {layers[0][0]};
  open.insert({0.0, 0, 0});
  while (!open.empty()) {
    const auto [d, layer, u] = *open.begin();
    open.erase(open.begin());
    if (settled[static_cast<std::size_t>(u)]) continue;
    settled[static_cast<std::size_t>(u)] = true;
    if (layer == n) break;
    const Point2D pu = layers[static_cast<std::size_t>(layer)][static_cast<std::size_t>(u - offset[layer])];
    const auto [fx, fy] = bilinear_flow(flow.at(left.frame + layer), pu.x, pu.y);
    const auto& next = layers[static_cast<std::size_t>(layer) + 1];
    for (std::size_t j = 0; j < next.size(); ++j) {
      const int v = offset[layer + 1] + static_cast<int>(j);
      if (settled[static_cast<std::size_t>(v)]) continue;
      const double ex = (next[j].x - pu.x) - fx;
      const double ey = (next[j].y - pu.y) - fy;
      const double nd = d + std::sqrt(ex * ex + ey * ey);
      std::vector<Point2D> candidate = best[static_cast<std::size_t>(u)];
      candidate.push_back(next[j]);
      const auto vi = static_cast<std::size_t>(v);
      if (nd < dist[vi] || (nd == dist[vi] && path_less(candidate, best[vi]))) {
        if (dist[vi] < std::numeric_limits<double>::infinity()) open.erase({dist[vi], layer + 1, v});
        dist[vi] = nd;
        best[vi] = std::move(candidate);
        open.insert({nd, layer_of(v), v});
      }
    }
  }
  ShortestPath out;
  out.cost = dist.back();
  out.points = best.back();
  out.points.front() = left.pos;
  out.points.back() = right.pos;
  return out;
}

trackflow::InterventionCount run_based_cost(const std::vector<Point2D>& gt, const std::vector<bool>& vis,
                                            const trackflow::FragmentSet& fragments, double tolerance) {
  // Label each visible frame with the fragment of its nearest in-tolerance
  // detection, or "" when there is none.
  std::vector<std::string> labels;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if (!vis[t]) continue;
    std::string label;
    if (t < fragments.frames.size() && !fragments.frames[t].empty()) {
      const auto& dets = fragments.frames[t];
      std::vector<double> d;
      for (const auto& det : dets) {
        d.push_back(std::sqrt((det.pos.x - gt[t].x) * (det.pos.x - gt[t].x) +
                              (det.pos.y - gt[t].y) * (det.pos.y - gt[t].y)));
      }
      const auto k = static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
      if (d[k] < tolerance) label = "#" + dets[k].fragment;
    }
    labels.push_back(label);
  }
  trackflow::InterventionCount count;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i].empty()) {
      ++count.manual;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < labels.size() && !labels[j].empty()) ++j;
    count.init_pick += 1;
    for (std::size_t k = i + 1; k < j; ++k) count.relink += labels[k] != labels[k - 1] ? 1 : 0;
    i = j;
  }
  return count;
}

FlowVolume random_flow(int width, int height, int frames, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FlowVolume vol;
  vol.width = width;
  vol.height = height;
  vol.frame_count = frames;
  for (int t = 0; t + 1 < frames; ++t) {
    FlowField f;
    f.t = t;
    f.dx = trackflow::Image(width, height);
    f.dy = trackflow::Image(width, height);
    struct Wave {
      double fx, fy, phase, weight;
    };
    std::vector<Wave> wx, wy;
    for (int k = 0; k < 3; ++k) {
      wx.push_back({u(rng) * 0.2, u(rng) * 0.2, u(rng) * 6.283, u(rng)});
      wy.push_back({u(rng) * 0.2, u(rng) * 0.2, u(rng) * 6.283, u(rng)});
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double sx = 0.0, sy = 0.0;
        for (const auto& w : wx) sx += w.weight * std::sin(w.fx * x + w.fy * y + w.phase);
        for (const auto& w : wy) sy += w.weight * std::sin(w.fx * x + w.fy * y + w.phase);
        f.dx.at(x, y) = static_cast<float>(amplitude * sx / 3.0);
        f.dy.at(x, y) = static_cast<float>(amplitude * sy / 3.0);
      }
    }
    vol.fields.push_back(std::move(f));
  }
  return vol;
}

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "trackflow-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace oracle
