#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "marvin/nav.hpp"

namespace marvin::nav {

std::uint8_t inflation_cost(double d, double radius) {
  if (!(d < radius)) return 0;
  const long v = std::lround(kMaxInflated * (1.0 - d / radius));
  return static_cast<std::uint8_t>(std::clamp<long>(v, 0, kMaxInflated));
}

namespace {

int window_cells(const Costmap& map) {
  return static_cast<int>(std::ceil(map.inflation_radius / map.geometry.resolution));
}

double cell_distance(int dx, int dy, double res) { return std::sqrt(static_cast<double>(dx * dx + dy * dy)) * res; }

}  // namespace

namespace {

constexpr std::int64_t kFar = std::numeric_limits<std::int64_t>::max();

// Lower envelope of the parabolas (x - q)^2 + f[q] over the sites with finite f,
// evaluated at every x. Intersections are compared as exact rationals.
void envelope_1d(const std::vector<std::int64_t>& f, std::vector<std::int64_t>& out, std::vector<int>& sites) {
  const int n = static_cast<int>(f.size());
  auto lift = [&](int q) { return f[q] + static_cast<std::int64_t>(q) * q; };
  // true when the crossing of (a, b) is at or left of the crossing of (b, c), a < b < c
  auto dominated = [&](int a, int b, int c) {
    const std::int64_t n1 = lift(c) - lift(b), d1 = 2 * (c - b);
    const std::int64_t n2 = lift(b) - lift(a), d2 = 2 * (b - a);
    return n1 * d2 <= n2 * d1;
  };
  sites.clear();
  for (int q = 0; q < n; ++q) {
    if (f[q] == kFar) continue;
    while (sites.size() >= 2 && dominated(sites[sites.size() - 2], sites.back(), q)) sites.pop_back();
    sites.push_back(q);
  }
  out.assign(f.size(), kFar);
  if (sites.empty()) return;
  auto value = [&](int q, int x) { return static_cast<std::int64_t>(x - q) * (x - q) + f[q]; };
  std::size_t j = 0;
  for (int x = 0; x < n; ++x) {
    while (j + 1 < sites.size() && value(sites[j + 1], x) <= value(sites[j], x)) ++j;
    out[x] = value(sites[j], x);
  }
}

}  // namespace

void inflate(Costmap& map) {
  const auto& g = map.geometry;
  const int w = g.width, h = g.height;
  // Squared cell distance to the nearest lethal cell, first along columns then across rows.
  std::vector<std::int64_t> col(map.cost.size(), kFar);
#pragma omp parallel for schedule(static)
  for (int x = 0; x < w; ++x) {
    std::int64_t last = -1;
    for (int y = 0; y < h; ++y) {
      if (map.cost[g.index(x, y)] == kLethal) last = y;
      if (last >= 0) col[g.index(x, y)] = y - last;
    }
    last = -1;
    for (int y = h - 1; y >= 0; --y) {
      if (map.cost[g.index(x, y)] == kLethal) last = y;
      auto& c = col[g.index(x, y)];
      if (last >= 0) c = std::min(c, last - y);
      if (c != kFar) c *= c;
    }
  }
#pragma omp parallel
  {
    std::vector<std::int64_t> f(static_cast<std::size_t>(w)), d2;
    std::vector<int> sites;
#pragma omp for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) f[x] = col[g.index(x, y)];
      envelope_1d(f, d2, sites);
      for (int x = 0; x < w; ++x) {
        auto& cell = map.cost[g.index(x, y)];
        if (cell == kLethal) continue;
        cell = d2[x] == kFar ? 0 : inflation_cost(std::sqrt(static_cast<double>(d2[x])) * g.resolution,
                                                  map.inflation_radius);
      }
    }
  }
}

void inflate_serial(Costmap& map) {
  const auto& g = map.geometry;
  const int r = window_cells(map);
  std::vector<std::uint8_t> out(map.cost.size(), 0);
  for (std::size_t i = 0; i < map.cost.size(); ++i) {
    if (map.cost[i] == kLethal) out[i] = kLethal;
  }
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (map.cost[g.index(x, y)] != kLethal) continue;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (!g.in_bounds(nx, ny)) continue;
          auto& cell = out[g.index(nx, ny)];
          if (cell == kLethal) continue;
          cell = std::max(cell, inflation_cost(cell_distance(dx, dy, g.resolution), map.inflation_radius));
        }
      }
    }
  }
  map.cost = std::move(out);
}

Costmap build_costmap(const sim::LidarScan& scan, const kin::Pose2D& pose, const CostmapConfig& config,
                      const OccupancyGrid* static_map) {
  config.geometry.validate();
  Costmap map;
  map.geometry = config.geometry;
  map.inflation_radius = config.inflation_radius;
  map.cost.assign(map.geometry.size(), 0);
  const auto& g = map.geometry;

  if (static_map != nullptr) {
    if (static_map->geometry == g) {
      for (std::size_t i = 0; i < map.cost.size(); ++i) {
        if (static_map->cells[i] == Cell::Occupied) map.cost[i] = kLethal;
      }
    } else {
      const auto& sg = static_map->geometry;
      for (std::size_t i = 0; i < static_map->cells.size(); ++i) {
        if (static_map->cells[i] != Cell::Occupied) continue;
        if (auto c = g.cell_in_bounds(sg.cell_center(sg.cell_of(i)))) map.cost[g.index(*c)] = kLethal;
      }
    }
  }

  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    if (!scan.is_hit(i)) continue;
    const double a = pose.yaw + scan.angle(i);
    const Point2D end{pose.x + scan.ranges[i] * std::cos(a), pose.y + scan.ranges[i] * std::sin(a)};
    if (auto c = g.cell_in_bounds(end)) map.cost[g.index(*c)] = kLethal;
  }
  if (auto robot = g.cell_in_bounds({pose.x, pose.y})) map.cost[g.index(*robot)] = 0;

  inflate(map);
  return map;
}

}  // namespace marvin::nav
