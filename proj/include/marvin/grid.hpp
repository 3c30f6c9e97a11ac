#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "marvin/kinematics.hpp"

namespace marvin {

struct Point2D {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2D&, const Point2D&) = default;
};

struct CellIndex {
  int x = 0;
  int y = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Placement of a raster in the world: cell (0,0) has its lower-left corner at
/// `origin`, columns run along the origin's x axis and rows along its y axis.
struct GridGeometry {
  int width = 0;
  int height = 0;
  double resolution = 0.05;
  kin::Pose2D origin;

  void validate() const;
  std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  bool in_bounds(int cx, int cy) const { return cx >= 0 && cy >= 0 && cx < width && cy < height; }
  bool in_bounds(CellIndex c) const { return in_bounds(c.x, c.y); }
  std::size_t index(int cx, int cy) const {
    return static_cast<std::size_t>(cy) * static_cast<std::size_t>(width) + static_cast<std::size_t>(cx);
  }
  std::size_t index(CellIndex c) const { return index(c.x, c.y); }
  CellIndex cell_of(std::size_t idx) const {
    return {static_cast<int>(idx % static_cast<std::size_t>(width)),
            static_cast<int>(idx / static_cast<std::size_t>(width))};
  }

  /// World point to grid-frame metres (relative to origin, unrotated).
  Point2D to_local(Point2D world) const;
  Point2D to_world(Point2D local) const;
  /// Cell containing the point; may be out of bounds.
  CellIndex cell_at(Point2D world) const;
  std::optional<CellIndex> cell_in_bounds(Point2D world) const;
  Point2D cell_center(CellIndex c) const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

enum class Cell : std::uint8_t { Free = 0, Occupied = 100, Unknown = 255 };

struct OccupancyGrid {
  GridGeometry geometry;
  std::vector<Cell> cells;

  OccupancyGrid() = default;
  OccupancyGrid(GridGeometry g, Cell fill);

  Cell at(int cx, int cy) const { return cells[geometry.index(cx, cy)]; }
  Cell at(CellIndex c) const { return at(c.x, c.y); }
  void set(int cx, int cy, Cell v) { cells[geometry.index(cx, cy)] = v; }
  /// Out-of-bounds cells read as Unknown.
  Cell at_or_unknown(CellIndex c) const { return geometry.in_bounds(c) ? at(c) : Cell::Unknown; }
  bool occupied(Point2D world) const;

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;
};

/// Walks the cells crossed by the segment from `from` toward `direction`
/// (world frame, need not be normalised) for up to `max_len` metres, in order.
/// `visit(CellIndex cell, double t_enter)` receives the distance at which the
/// segment enters the cell and returns false to stop. Cells outside the grid
/// end the walk; the return value tells whether that happened.
template <class Visit>
bool traverse(const GridGeometry& g, Point2D from, Point2D direction, double max_len, Visit&& visit) {
  const double c = std::cos(g.origin.yaw);
  const double s = std::sin(g.origin.yaw);
  double dx = c * direction.x + s * direction.y;
  double dy = -s * direction.x + c * direction.y;
  const double n = std::hypot(dx, dy);
  if (n == 0.0) return false;
  dx /= n;
  dy /= n;
  const Point2D p = g.to_local(from);
  const double res = g.resolution;
  int cx = static_cast<int>(std::floor(p.x / res));
  int cy = static_cast<int>(std::floor(p.y / res));
  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  constexpr double inf = INFINITY;
  double t_max_x = step_x == 0 ? inf : ((step_x > 0 ? (cx + 1) * res - p.x : p.x - cx * res) / std::abs(dx));
  double t_max_y = step_y == 0 ? inf : ((step_y > 0 ? (cy + 1) * res - p.y : p.y - cy * res) / std::abs(dy));
  const double t_delta_x = step_x == 0 ? inf : res / std::abs(dx);
  const double t_delta_y = step_y == 0 ? inf : res / std::abs(dy);
  double t = 0.0;
  while (t <= max_len) {
    if (!g.in_bounds(cx, cy)) return true;
    if (!visit(CellIndex{cx, cy}, t)) return false;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      t_max_x += t_delta_x;
      cx += step_x;
    } else {
      t = t_max_y;
      t_max_y += t_delta_y;
      cy += step_y;
    }
  }
  return false;
}

/// True when no Occupied cell lies strictly between the two points.
bool line_of_sight(const OccupancyGrid& grid, Point2D a, Point2D b);

}  // namespace marvin
