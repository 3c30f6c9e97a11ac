#include "marvin/grid.hpp"

#include <stdexcept>

namespace marvin {

void GridGeometry::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
  if (!(resolution > 0.0) || !std::isfinite(resolution)) throw std::invalid_argument("grid resolution must be > 0");
}

Point2D GridGeometry::to_local(Point2D world) const {
  const double c = std::cos(origin.yaw);
  const double s = std::sin(origin.yaw);
  const double dx = world.x - origin.x;
  const double dy = world.y - origin.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Point2D GridGeometry::to_world(Point2D local) const {
  const double c = std::cos(origin.yaw);
  const double s = std::sin(origin.yaw);
  return {origin.x + c * local.x - s * local.y, origin.y + s * local.x + c * local.y};
}

CellIndex GridGeometry::cell_at(Point2D world) const {
  const Point2D p = to_local(world);
  return {static_cast<int>(std::floor(p.x / resolution)), static_cast<int>(std::floor(p.y / resolution))};
}

std::optional<CellIndex> GridGeometry::cell_in_bounds(Point2D world) const {
  const CellIndex c = cell_at(world);
  if (!in_bounds(c)) return std::nullopt;
  return c;
}

Point2D GridGeometry::cell_center(CellIndex c) const {
  return to_world({(c.x + 0.5) * resolution, (c.y + 0.5) * resolution});
}

OccupancyGrid::OccupancyGrid(GridGeometry g, Cell fill) : geometry(g) {
  geometry.validate();
  cells.assign(geometry.size(), fill);
}

bool OccupancyGrid::occupied(Point2D world) const {
  const auto c = geometry.cell_in_bounds(world);
  return c && at(*c) == Cell::Occupied;
}

bool line_of_sight(const OccupancyGrid& grid, Point2D a, Point2D b) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  if (len == 0.0) return !grid.occupied(a);
  bool clear = true;
  traverse(grid.geometry, a, {b.x - a.x, b.y - a.y}, len, [&](CellIndex c, double) {
    if (grid.at(c) == Cell::Occupied) {
      clear = false;
      return false;
    }
    return true;
  });
  return clear;
}

}  // namespace marvin
