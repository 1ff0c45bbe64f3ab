#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "trackflow/error.hpp"
#include "trackflow/track.hpp"

namespace trackflow {

namespace {

struct Node {
  Point2D pos;
  double cost = std::numeric_limits<double>::infinity();
  int parent = -1;
  int rank = 0;  // order of this node's best prefix within its layer
};

bool position_less(const Point2D& a, const Point2D& b) {
  return a.x < b.x || (a.x == b.x && a.y < b.y);
}

Point2D snap(Point2D p) { return {std::round(p.x), std::round(p.y)}; }

std::vector<Node> lattice_around(Point2D center, double radius, double step) {
  const int reach = static_cast<int>(std::floor(radius / step + 1e-9));
  const Point2D c = snap(center);
  std::vector<Node> layer;
  layer.reserve(static_cast<std::size_t>((2 * reach + 1) * (2 * reach + 1)));
  for (int i = -reach; i <= reach; ++i) {
    for (int j = -reach; j <= reach; ++j) {
      layer.push_back(Node{{c.x + i * step, c.y + j * step}});
    }
  }
  return layer;
}

}  // namespace

CorridorPath interpolate_corridor_dp(const FlowVolume& flow, const Anchor& left, const Anchor& right,
                                     const CorridorConfig& cfg) {
  if (left.frame >= right.frame) throw Error(ErrorCode::BadOrder, "left anchor must precede right anchor");
  if (left.frame < 0 || right.frame >= flow.frame_count) {
    throw Error(ErrorCode::FrameOutOfRange, "corridor anchors outside the volume");
  }
  if (!(cfg.radius >= 1.0) || !(cfg.lattice_step > 0.0)) {
    throw Error(ErrorCode::BadConfig, "corridor radius must be >= 1 and lattice step > 0");
  }
  const int t0 = left.frame;
  const int t1 = right.frame;
  const int n = t1 - t0;

  std::vector<std::vector<Node>> layers(static_cast<std::size_t>(n) + 1);
  layers[0].push_back(Node{snap(left.pos), 0.0, -1, 0});
  for (int i = 1; i < n; ++i) {
    const double a = static_cast<double>(i) / n;
    const Point2D c{(1.0 - a) * left.pos.x + a * right.pos.x, (1.0 - a) * left.pos.y + a * right.pos.y};
    layers[static_cast<std::size_t>(i)] = lattice_around(c, cfg.radius, cfg.lattice_step);
    if (layers[static_cast<std::size_t>(i)].empty()) {
      throw Error(ErrorCode::EmptyCorridor, "corridor lattice is empty");
    }
  }
  layers[static_cast<std::size_t>(n)].push_back(Node{snap(right.pos)});

  std::vector<Displacement> motion;
  std::vector<int> order;
  for (int i = 0; i < n; ++i) {
    const auto& from = layers[static_cast<std::size_t>(i)];
    auto& to = layers[static_cast<std::size_t>(i) + 1];
    const FlowField& field = flow.at(t0 + i);
    motion.resize(from.size());
    for (std::size_t u = 0; u < from.size(); ++u) motion[u] = sample_flow(field, from[u].pos);

    for (auto& v : to) {
      for (std::size_t u = 0; u < from.size(); ++u) {
        const double ex = (v.pos.x - from[u].pos.x) - motion[u].dx;
        const double ey = (v.pos.y - from[u].pos.y) - motion[u].dy;
        const double c = from[u].cost + std::sqrt(ex * ex + ey * ey);
        if (c < v.cost || (c == v.cost && from[u].rank < from[static_cast<std::size_t>(v.parent)].rank)) {
          v.cost = c;
          v.parent = static_cast<int>(u);
        }
      }
    }
    order.resize(to.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const int ra = from[static_cast<std::size_t>(to[a].parent)].rank;
      const int rb = from[static_cast<std::size_t>(to[b].parent)].rank;
      if (ra != rb) return ra < rb;
      return position_less(to[a].pos, to[b].pos);
    });
    for (std::size_t r = 0; r < order.size(); ++r) to[static_cast<std::size_t>(order[r])].rank = static_cast<int>(r);
  }

  CorridorPath path;
  path.points.resize(static_cast<std::size_t>(n) + 1);
  path.cost = layers.back().front().cost;
  int idx = 0;
  for (int i = n; i >= 0; --i) {
    const Node& node = layers[static_cast<std::size_t>(i)][static_cast<std::size_t>(idx)];
    path.points[static_cast<std::size_t>(i)] = node.pos;
    idx = node.parent;
  }
  path.points.front() = left.pos;
  path.points.back() = right.pos;
  return path;
}

}  // namespace trackflow
