#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marvin/grid.hpp"
#include "marvin/kinematics.hpp"

namespace marvin::sim {

using Rng = std::mt19937_64;

// --- world files -------------------------------------------------------------

/// Parses the ASCII world format:
///
///     MARVINWORLD v1
///     resolution 0.05        # metres per grid cell
///     char_cells 2           # optional, grid cells per character (default 1)
///     origin 0 0 0           # optional
///     grid
///     ##########
///     #........#
///     ##########
///
/// `#` is Occupied, `.` Free, `?` Unknown. The first grid line is the top row
/// (largest y). Throws ParseError with the offending line.
OccupancyGrid parse_world(std::string_view text);
OccupancyGrid load_world(const std::filesystem::path& path);
std::string format_world(const OccupancyGrid& grid);

// --- robot body --------------------------------------------------------------

struct BodyLimits {
  double v_max = 1.5;           // m/s per linear axis
  double a_max = 1.0;           // m/s^2 per linear axis
  double yaw_rate_max = 5.0;    // rad/s
  double yaw_accel_max = 4.0;   // rad/s^2
  double length = 0.60;         // footprint along body x, m
  double width = 0.40;          // footprint along body y, m
};

struct RobotBody {
  kin::Pose2D pose;
  kin::Twist2D twist;    // achieved
  kin::Twist2D command;  // requested
  BodyLimits limits;
};

/// Exact rectangle-vs-cell overlap of the footprint at `pose` against Occupied cells.
bool footprint_collides(const OccupancyGrid& grid, const kin::Pose2D& pose, double length, double width);

// --- people ------------------------------------------------------------------

enum class Posture { Standing, Sitting, Laying };
std::string_view to_string(Posture p);
Posture posture_from_string(std::string_view s);

struct PersonEvent {
  enum class Kind { Fall, Sit, Stand, Walk, Stop };
  double t = 0.0;
  Kind kind = Kind::Stop;
  std::optional<double> yaw;  // orientation to take, e.g. the direction of a fall
};
PersonEvent::Kind person_event_from_string(std::string_view s);
std::string_view to_string(PersonEvent::Kind k);

struct PersonAgent {
  std::string name;
  kin::Pose2D pose;
  double speed = 0.8;
  std::vector<Point2D> waypoints;
  bool loop = false;
  bool walking = false;
  Posture posture = Posture::Standing;
  std::vector<PersonEvent> script;  // sorted by time

  std::size_t next_waypoint = 0;
  std::size_t next_event = 0;
};

/// Radius of the body cross-section seen by a planar lidar. Laying people are below the scan plane.
double lidar_radius(Posture p);

// --- lidar -------------------------------------------------------------------

struct LidarSpec {
  int beams = 360;
  double max_range = 8.0;
  double noise_sigma = 0.0;
};

struct LidarScan {
  double stamp = 0.0;
  kin::Pose2D pose;  // sensor pose at capture
  double angle_min = 0.0;
  double angle_increment = 0.0;
  double max_range = 8.0;
  std::vector<double> ranges;

  double angle(std::size_t i) const { return angle_min + angle_increment * static_cast<double>(i); }
  bool is_hit(std::size_t i) const { return ranges[i] < max_range; }
  friend bool operator==(const LidarScan&, const LidarScan&) = default;
};

/// Casts every beam through the grid (and the people standing in it).
/// The beam loop runs in parallel; noise, when requested, is drawn afterwards
/// in beam order so results do not depend on the thread count.
/// Throws StateError when the pose is inside an Occupied cell.
LidarScan raycast_lidar(const OccupancyGrid& grid, std::span<const PersonAgent> people,
                        const kin::Pose2D& pose, const LidarSpec& spec, Rng* noise = nullptr);
/// Single-threaded reference of raycast_lidar; bit-identical output.
LidarScan raycast_lidar_serial(const OccupancyGrid& grid, std::span<const PersonAgent> people,
                               const kin::Pose2D& pose, const LidarSpec& spec, Rng* noise = nullptr);

// --- world -------------------------------------------------------------------

struct WorldEvent {
  double t = 0.0;
  std::string kind;
  std::string detail;
};

struct World {
  OccupancyGrid grid;
  RobotBody robot;
  std::vector<PersonAgent> people;
  double time = 0.0;

  const PersonAgent* person(std::string_view name) const;
};

/// Advances the world by dt: slews the body twist toward its command within the
/// acceleration limits, moves it with exact screw integration stopping at
/// contact, and plays back the people's scripts. Returns the events of the step.
std::vector<WorldEvent> step(World& world, double dt);

}  // namespace marvin::sim
