#include "marvin/worldsim.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "marvin/errors.hpp"

namespace marvin::sim {

// --- world files -------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string_view strip_comment(std::string_view s) {
  const auto h = s.find(" #");
  return trim(h == std::string_view::npos ? s : s.substr(0, h));
}

}  // namespace

OccupancyGrid parse_world(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(pos, end - pos));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }

  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]).empty()) ++i;
  if (i == lines.size() || trim(lines[i]) != "MARVINWORLD v1") throw ParseError(i + 1, "expected 'MARVINWORLD v1'");
  ++i;

  GridGeometry g;
  int char_cells = 1;
  bool have_resolution = false;
  for (; i < lines.size(); ++i) {
    const auto line = strip_comment(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    if (line == "grid") break;
    std::istringstream in{std::string(line)};
    std::string key;
    in >> key;
    if (key == "resolution") {
      in >> g.resolution;
      have_resolution = true;
    } else if (key == "char_cells") {
      in >> char_cells;
    } else if (key == "origin") {
      in >> g.origin.x >> g.origin.y >> g.origin.yaw;
    } else {
      throw ParseError(i + 1, "unknown key '" + key + "'");
    }
    if (in.fail() || !(g.resolution > 0.0) || char_cells < 1) throw ParseError(i + 1, "bad value for '" + key + "'");
  }
  if (!have_resolution) throw ParseError(i + 1, "missing 'resolution'");
  if (i == lines.size()) throw ParseError(i, "missing 'grid' section");
  const std::size_t grid_line = i + 2;
  ++i;

  std::vector<std::string_view> rows;
  for (; i < lines.size(); ++i) {
    auto row = lines[i];
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    if (row.empty()) continue;
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError(grid_line, "empty grid");
  const std::size_t cols = rows.front().size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw ParseError(grid_line + r, "ragged grid row");
  }

  g.width = static_cast<int>(cols) * char_cells;
  g.height = static_cast<int>(rows.size()) * char_cells;
  OccupancyGrid grid(g, Cell::Unknown);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int base_y = (static_cast<int>(rows.size() - 1 - r)) * char_cells;
    for (std::size_t c = 0; c < cols; ++c) {
      Cell v;
      switch (rows[r][c]) {
        case '#': v = Cell::Occupied; break;
        case '.': v = Cell::Free; break;
        case '?': v = Cell::Unknown; break;
        default: throw ParseError(grid_line + r, std::string("unexpected character '") + rows[r][c] + "'");
      }
      for (int dy = 0; dy < char_cells; ++dy) {
        for (int dx = 0; dx < char_cells; ++dx) grid.set(static_cast<int>(c) * char_cells + dx, base_y + dy, v);
      }
    }
  }
  return grid;
}

OccupancyGrid load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open world file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_world(ss.str());
}

std::string format_world(const OccupancyGrid& grid) {
  std::ostringstream out;
  out.precision(17);
  const auto& g = grid.geometry;
  out << "MARVINWORLD v1\nresolution " << g.resolution << "\norigin " << g.origin.x << ' ' << g.origin.y << ' '
      << g.origin.yaw << "\ngrid\n";
  for (int y = g.height - 1; y >= 0; --y) {
    for (int x = 0; x < g.width; ++x) {
      switch (grid.at(x, y)) {
        case Cell::Occupied: out << '#'; break;
        case Cell::Free: out << '.'; break;
        case Cell::Unknown: out << '?'; break;
      }
    }
    out << '\n';
  }
  return out.str();
}

// --- footprint ---------------------------------------------------------------

bool footprint_collides(const OccupancyGrid& grid, const kin::Pose2D& pose, double length, double width) {
  const auto& g = grid.geometry;
  const Point2D c = g.to_local({pose.x, pose.y});
  const double yaw = pose.yaw - g.origin.yaw;
  const double ca = std::cos(yaw);
  const double sa = std::sin(yaw);
  const double a = length / 2.0;
  const double b = width / 2.0;
  const double ex = a * std::abs(ca) + b * std::abs(sa);
  const double ey = a * std::abs(sa) + b * std::abs(ca);
  const double res = g.resolution;
  const double h = res / 2.0;
  constexpr double eps = 1e-9;

  const int x0 = std::max(0, static_cast<int>(std::floor((c.x - ex) / res)));
  const int x1 = std::min(g.width - 1, static_cast<int>(std::floor((c.x + ex) / res)));
  const int y0 = std::max(0, static_cast<int>(std::floor((c.y - ey) / res)));
  const int y1 = std::min(g.height - 1, static_cast<int>(std::floor((c.y + ey) / res)));

  for (int cy = y0; cy <= y1; ++cy) {
    for (int cx = x0; cx <= x1; ++cx) {
      if (grid.at(cx, cy) != Cell::Occupied) continue;
      const double qx = (cx + 0.5) * res - c.x;
      const double qy = (cy + 0.5) * res - c.y;
      // World axes: the rectangle's half extents are ex, ey.
      if (std::abs(qx) >= ex + h - eps || std::abs(qy) >= ey + h - eps) continue;
      // Body axes: the cell's half extent projects to h(|cos| + |sin|).
      const double cell_r = h * (std::abs(ca) + std::abs(sa));
      if (std::abs(qx * ca + qy * sa) >= a + cell_r - eps) continue;
      if (std::abs(-qx * sa + qy * ca) >= b + cell_r - eps) continue;
      return true;
    }
  }
  // Leaving the known world counts as a collision.
  const double L = g.width * res;
  const double H = g.height * res;
  return c.x - ex < 0.0 || c.y - ey < 0.0 || c.x + ex > L || c.y + ey > H;
}

// --- people ------------------------------------------------------------------

std::string_view to_string(Posture p) {
  switch (p) {
    case Posture::Standing: return "standing";
    case Posture::Sitting: return "sitting";
    case Posture::Laying: return "laying";
  }
  return "standing";
}

Posture posture_from_string(std::string_view s) {
  for (auto p : {Posture::Standing, Posture::Sitting, Posture::Laying}) {
    if (to_string(p) == s) return p;
  }
  throw std::invalid_argument("unknown posture '" + std::string(s) + "'");
}

std::string_view to_string(PersonEvent::Kind k) {
  using K = PersonEvent::Kind;
  switch (k) {
    case K::Fall: return "fall";
    case K::Sit: return "sit";
    case K::Stand: return "stand";
    case K::Walk: return "walk";
    case K::Stop: return "stop";
  }
  return "stop";
}

PersonEvent::Kind person_event_from_string(std::string_view s) {
  using K = PersonEvent::Kind;
  for (auto k : {K::Fall, K::Sit, K::Stand, K::Walk, K::Stop}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown person event '" + std::string(s) + "'");
}

double lidar_radius(Posture p) {
  switch (p) {
    case Posture::Standing: return 0.18;
    case Posture::Sitting: return 0.25;
    case Posture::Laying: return 0.0;
  }
  return 0.0;
}

namespace {

void apply_due_events(PersonAgent& p, double now, std::vector<WorldEvent>& events) {
  using K = PersonEvent::Kind;
  while (p.next_event < p.script.size() && p.script[p.next_event].t <= now + 1e-9) {
    const auto& e = p.script[p.next_event++];
    switch (e.kind) {
      case K::Fall:
        p.posture = Posture::Laying;
        p.walking = false;
        break;
      case K::Sit:
        p.posture = Posture::Sitting;
        p.walking = false;
        break;
      case K::Stand: p.posture = Posture::Standing; break;
      case K::Walk:
        p.posture = Posture::Standing;
        p.walking = true;
        break;
      case K::Stop: p.walking = false; break;
    }
    if (e.yaw) p.pose.yaw = kin::wrap_angle(*e.yaw);
    events.push_back({now, "PersonEvent", p.name + ":" + std::string(to_string(e.kind))});
  }
}

void walk(PersonAgent& p, double dt) {
  if (!p.walking || p.posture != Posture::Standing || p.waypoints.empty()) return;
  double remaining = p.speed * dt;
  while (remaining > 0.0 && p.walking) {
    const Point2D wp = p.waypoints[p.next_waypoint];
    const double dx = wp.x - p.pose.x;
    const double dy = wp.y - p.pose.y;
    const double d = std::hypot(dx, dy);
    if (d > 1e-12) p.pose.yaw = std::atan2(dy, dx);
    if (d <= remaining) {
      p.pose.x = wp.x;
      p.pose.y = wp.y;
      remaining -= d;
      if (++p.next_waypoint == p.waypoints.size()) {
        if (p.loop) {
          p.next_waypoint = 0;
        } else {
          p.next_waypoint = p.waypoints.size() - 1;
          p.walking = false;
        }
      }
      if (d <= 1e-12 && p.waypoints.size() == 1) break;
    } else {
      p.pose.x += dx / d * remaining;
      p.pose.y += dy / d * remaining;
      remaining = 0.0;
    }
  }
}

double slew(double current, double target, double max_delta) {
  return current + std::clamp(target - current, -max_delta, max_delta);
}

}  // namespace

const PersonAgent* World::person(std::string_view name) const {
  for (const auto& p : people) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<WorldEvent> step(World& world, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  std::vector<WorldEvent> events;
  for (auto& p : world.people) apply_due_events(p, world.time, events);

  auto& body = world.robot;
  const auto& lim = body.limits;
  kin::Twist2D target = body.command;
  target.vx = std::clamp(target.vx, -lim.v_max, lim.v_max);
  target.vy = std::clamp(target.vy, -lim.v_max, lim.v_max);
  target.yaw_rate = std::clamp(target.yaw_rate, -lim.yaw_rate_max, lim.yaw_rate_max);
  kin::Twist2D tw;
  tw.vx = slew(body.twist.vx, target.vx, lim.a_max * dt);
  tw.vy = slew(body.twist.vy, target.vy, lim.a_max * dt);
  tw.yaw_rate = slew(body.twist.yaw_rate, target.yaw_rate, lim.yaw_accel_max * dt);

  auto collides = [&](const kin::Pose2D& p) { return footprint_collides(world.grid, p, lim.length, lim.width); };
  kin::Pose2D next = kin::integrate_odometry(body.pose, tw, dt);
  if (collides(next)) {
    // Largest free fraction of the step, then the remainder with the blocked axes removed.
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 20; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (collides(kin::integrate_odometry(body.pose, tw, mid * dt))) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    kin::Pose2D contact = lo > 0.0 ? kin::integrate_odometry(body.pose, tw, lo * dt) : body.pose;
    const double rest = (1.0 - lo) * dt;
    const kin::Twist2D options[] = {
        {0.0, tw.vy, tw.yaw_rate}, {tw.vx, 0.0, tw.yaw_rate}, {tw.vx, tw.vy, 0.0},
        {0.0, 0.0, tw.yaw_rate},   {0.0, tw.vy, 0.0},         {tw.vx, 0.0, 0.0},
    };
    kin::Twist2D kept{};
    for (const auto& o : options) {
      if (o == kin::Twist2D{}) continue;
      if (!collides(kin::integrate_odometry(contact, o, rest))) {
        kept = o;
        break;
      }
    }
    next = kept == kin::Twist2D{} ? contact : kin::integrate_odometry(contact, kept, rest);
    std::ostringstream detail;
    detail << "blocked:" << (kept.vx == 0.0 && tw.vx != 0.0 ? "x" : "") << (kept.vy == 0.0 && tw.vy != 0.0 ? "y" : "")
           << (kept.yaw_rate == 0.0 && tw.yaw_rate != 0.0 ? "yaw" : "");
    tw = kept;
    events.push_back({world.time + dt, "Collision", detail.str()});
  }
  body.pose = next;
  body.twist = tw;

  for (auto& p : world.people) walk(p, dt);
  world.time += dt;
  for (auto& p : world.people) apply_due_events(p, world.time, events);
  return events;
}

// --- lidar -------------------------------------------------------------------

namespace {

double trace_beam(const OccupancyGrid& grid, std::span<const PersonAgent> people, const kin::Pose2D& pose,
                  double heading, double max_range) {
  const Point2D origin{pose.x, pose.y};
  const Point2D dir{std::cos(heading), std::sin(heading)};
  double range = max_range;
  traverse(grid.geometry, origin, dir, max_range, [&](CellIndex c, double t) {
    if (grid.at(c) == Cell::Occupied) {
      range = std::min(t, max_range);
      return false;
    }
    return true;
  });
  for (const auto& p : people) {
    const double r = lidar_radius(p.posture);
    if (r <= 0.0) continue;
    const double ox = p.pose.x - origin.x;
    const double oy = p.pose.y - origin.y;
    const double proj = ox * dir.x + oy * dir.y;
    const double d2 = ox * ox + oy * oy - proj * proj;
    if (d2 > r * r) continue;
    const double t = proj - std::sqrt(r * r - d2);
    if (t > 0.0 && t < range) range = t;
  }
  return range;
}

LidarScan prepare_scan(const OccupancyGrid& grid, const kin::Pose2D& pose, const LidarSpec& spec) {
  if (spec.beams <= 0 || !(spec.max_range > 0.0)) throw std::invalid_argument("invalid lidar spec");
  if (grid.occupied({pose.x, pose.y})) throw StateError("lidar pose is inside an occupied cell");
  LidarScan scan;
  scan.pose = pose;
  scan.angle_min = 0.0;
  scan.angle_increment = 2.0 * std::numbers::pi / spec.beams;
  scan.max_range = spec.max_range;
  scan.ranges.assign(static_cast<std::size_t>(spec.beams), spec.max_range);
  return scan;
}

void add_noise(LidarScan& scan, const LidarSpec& spec, Rng* noise) {
  if (noise == nullptr || spec.noise_sigma <= 0.0) return;
  std::normal_distribution<double> n(0.0, spec.noise_sigma);
  for (auto& r : scan.ranges) {
    const double e = n(*noise);
    if (r < scan.max_range) r = std::clamp(r + e, 1e-3, scan.max_range);
  }
}

}  // namespace

LidarScan raycast_lidar(const OccupancyGrid& grid, std::span<const PersonAgent> people, const kin::Pose2D& pose,
                        const LidarSpec& spec, Rng* noise) {
  LidarScan scan = prepare_scan(grid, pose, spec);
  const int n = spec.beams;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    scan.ranges[static_cast<std::size_t>(i)] =
        trace_beam(grid, people, pose, pose.yaw + scan.angle(static_cast<std::size_t>(i)), spec.max_range);
  }
  add_noise(scan, spec, noise);
  return scan;
}

LidarScan raycast_lidar_serial(const OccupancyGrid& grid, std::span<const PersonAgent> people,
                               const kin::Pose2D& pose, const LidarSpec& spec, Rng* noise) {
  LidarScan scan = prepare_scan(grid, pose, spec);
  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    scan.ranges[i] = trace_beam(grid, people, pose, pose.yaw + scan.angle(i), spec.max_range);
  }
  add_noise(scan, spec, noise);
  return scan;
}

}  // namespace marvin::sim
