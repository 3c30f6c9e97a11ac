#pragma once

#include <optional>
#include <vector>

#include "marvin/nav.hpp"
#include "support.hpp"

namespace test {

using namespace marvin;
using namespace marvin::nav;

/// Cost a + b*sqrt(2) held as integers; compared by the sign of the difference.
struct Octile {
  long long a = 0, b = 0;
};

inline int sign_of(long long x, long long y) {  // sign of x + y*sqrt(2)
  if (x >= 0 && y >= 0) return (x | y) ? 1 : 0;
  if (x <= 0 && y <= 0) return -1;
  const __int128 xx = static_cast<__int128>(x) * x, yy = 2 * static_cast<__int128>(y) * y;
  if (x > 0) return xx > yy ? 1 : -1;
  return yy > xx ? 1 : -1;
}

inline bool less(const Octile& l, const Octile& r) { return sign_of(l.a - r.a, l.b - r.b) < 0; }

// Textbook Dijkstra with linear-scan selection over the same move rules.
inline std::optional<Octile> dijkstra(const Costmap& m, CellIndex s, CellIndex t, std::uint8_t max_cost) {
  const auto& g = m.geometry;
  const std::size_t n = g.size();
  std::vector<std::optional<Octile>> dist(n);
  std::vector<bool> done(n, false);
  dist[g.index(s)] = Octile{};
  for (;;) {
    std::optional<std::size_t> u;
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i] && dist[i] && (!u || less(*dist[i], *dist[*u]))) u = i;
    }
    if (!u) return std::nullopt;
    if (*u == g.index(t)) return dist[*u];
    done[*u] = true;
    const CellIndex c = g.cell_of(*u);
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        if (!dx && !dy) continue;
        const CellIndex v{c.x + dx, c.y + dy};
        if (!g.in_bounds(v) || m.at(v) == kLethal) continue;
        if (m.at(v) > max_cost && !(v.x == t.x && v.y == t.y)) continue;
        if (dx && dy && (m.at({c.x + dx, c.y}) == kLethal || m.at({c.x, c.y + dy}) == kLethal)) continue;
        const long long w = 253 + m.at(v);
        Octile cand = *dist[*u];
        (dx && dy ? cand.b : cand.a) += w;
        auto& dv = dist[g.index(v)];
        if (!dv || less(cand, *dv)) dv = cand;
      }
    }
  }
}

inline Costmap random_costmap(Gen& g, int size, double obstacles, bool inflated) {
  Costmap m;
  m.geometry = GridGeometry{size, size, 0.05, {0, 0, 0}};
  m.inflation_radius = 0.2;
  m.cost.assign(m.geometry.size(), 0);
  for (auto& c : m.cost) {
    if (g.coin(obstacles)) {
      c = kLethal;
    } else if (!inflated) {
      c = static_cast<std::uint8_t>(g.integer(0, 253));
    }
  }
  if (inflated) inflate(m);
  return m;
}

inline CellIndex random_open_cell(Gen& g, const Costmap& m) {
  for (;;) {
    const CellIndex c{g.integer(0, m.geometry.width - 1), g.integer(0, m.geometry.height - 1)};
    if (!m.lethal(c)) return c;
  }
}

inline marvin::kin::Pose2D centre(const Costmap& m, CellIndex c) {
  const auto p = m.geometry.cell_center(c);
  return {p.x, p.y, 0.0};
}

}  // namespace test
