#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "marvin/errors.hpp"
#include "marvin/nav.hpp"

namespace marvin::nav {

std::strong_ordering ExactCost::operator<=>(const ExactCost& o) const {
  // Compare x against y*sqrt(2) with integers only.
  const std::int64_t x = linear - o.linear;
  const std::int64_t y = o.diagonal - diagonal;
  if (x == 0 && y == 0) return std::strong_ordering::equal;
  if (x >= 0 && y <= 0) return std::strong_ordering::greater;
  if (x <= 0 && y >= 0) return std::strong_ordering::less;
  const std::int64_t x2 = x * x;
  const std::int64_t y2 = 2 * y * y;
  if (x > 0) return x2 < y2 ? std::strong_ordering::less : std::strong_ordering::greater;
  return x2 > y2 ? std::strong_ordering::less : std::strong_ordering::greater;
}

double ExactCost::value() const {
  return static_cast<double>(linear) + static_cast<double>(diagonal) * std::numbers::sqrt2;
}

namespace {

struct Entry {
  ExactCost f;
  std::size_t index;
};

struct Worse {
  bool operator()(const Entry& a, const Entry& b) const {
    const auto c = a.f <=> b.f;
    if (c != 0) return c > 0;
    return a.index > b.index;
  }
};

ExactCost octile(CellIndex a, CellIndex b) {
  const std::int64_t dx = std::abs(a.x - b.x);
  const std::int64_t dy = std::abs(a.y - b.y);
  const std::int64_t lo = std::min(dx, dy);
  const std::int64_t hi = std::max(dx, dy);
  return {kMaxInflated * (hi - lo), kMaxInflated * lo};
}

CellIndex checked_cell(const Costmap& map, const kin::Pose2D& p, const char* what) {
  const auto c = map.geometry.cell_in_bounds({p.x, p.y});
  if (!c) throw std::invalid_argument(std::string(what) + " is outside the costmap");
  if (map.lethal(*c)) throw std::invalid_argument(std::string(what) + " is in a lethal cell");
  return *c;
}

}  // namespace

PlannedPath plan(const Costmap& map, const kin::Pose2D& start, const kin::Pose2D& goal, const PlanParams& params) {
  const auto& g = map.geometry;
  const CellIndex s = checked_cell(map, start, "start");
  const CellIndex t = checked_cell(map, goal, "goal");
  const std::size_t n = g.size();
  const std::size_t si = g.index(s);
  const std::size_t ti = g.index(t);

  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::vector<ExactCost> cost(n);
  std::vector<bool> seen(n, false);
  std::vector<bool> closed(n, false);
  std::vector<std::size_t> parent(n, none);
  std::priority_queue<Entry, std::vector<Entry>, Worse> open;

  seen[si] = true;
  open.push({octile(s, t), si});
  static constexpr int dirs[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};

  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    if (closed[e.index]) continue;
    closed[e.index] = true;
    if (e.index == ti) break;
    const CellIndex c = g.cell_of(e.index);
    for (const auto& d : dirs) {
      const CellIndex nb{c.x + d[0], c.y + d[1]};
      if (!g.in_bounds(nb) || map.lethal(nb)) continue;
      const std::size_t ni = g.index(nb);
      if (map.cost[ni] > params.max_cost && ni != ti) continue;
      const bool diagonal = d[0] != 0 && d[1] != 0;
      if (diagonal && (map.lethal({c.x + d[0], c.y}) || map.lethal({c.x, c.y + d[1]}))) continue;
      if (closed[ni]) continue;
      const std::int64_t step = kMaxInflated + map.at(nb);
      const ExactCost cand = cost[e.index] + (diagonal ? ExactCost{0, step} : ExactCost{step, 0});
      if (!seen[ni] || cand < cost[ni]) {
        seen[ni] = true;
        cost[ni] = cand;
        parent[ni] = e.index;
        open.push({cand + octile(nb, t), ni});
      }
    }
  }
  if (!closed[ti]) throw NoPathError("goal is unreachable from start");

  PlannedPath path;
  for (std::size_t i = ti; i != none; i = parent[i]) path.cells.push_back(g.cell_of(i));
  std::reverse(path.cells.begin(), path.cells.end());
  path.poses.reserve(path.cells.size());
  for (std::size_t k = 0; k < path.cells.size(); ++k) {
    const Point2D p = g.cell_center(path.cells[k]);
    double yaw = goal.yaw;
    if (k + 1 < path.cells.size()) {
      const Point2D q = g.cell_center(path.cells[k + 1]);
      yaw = std::atan2(q.y - p.y, q.x - p.x);
    }
    path.poses.push_back({p.x, p.y, yaw});
  }
  path.exact = cost[ti];
  path.total_cost = path.exact.value() * g.resolution / kMaxInflated;
  return path;
}

PlannedPath plan_with_clearance(const Costmap& map, const kin::Pose2D& start, const kin::Pose2D& goal,
                                double clearance) {
  const std::uint8_t ceiling = inflation_cost(clearance, map.inflation_radius);
  if (ceiling < kMaxInflated) {
    try {
      return plan(map, start, goal, {ceiling});
    } catch (const NoPathError&) {
    }
  }
  return plan(map, start, goal);
}

}  // namespace marvin::nav
