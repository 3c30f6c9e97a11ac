#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "marvin/grid.hpp"
#include "marvin/kinematics.hpp"
#include "marvin/worldsim.hpp"

namespace marvin::nav {

// --- costmap -----------------------------------------------------------------

inline constexpr std::uint8_t kLethal = 254;
inline constexpr std::uint8_t kMaxInflated = 253;

struct Costmap {
  GridGeometry geometry;
  std::vector<std::uint8_t> cost;
  double inflation_radius = 0.36;

  std::uint8_t at(CellIndex c) const { return cost[geometry.index(c)]; }
  bool lethal(CellIndex c) const { return at(c) == kLethal; }
  friend bool operator==(const Costmap&, const Costmap&) = default;
};

struct CostmapConfig {
  GridGeometry geometry;
  double inflation_radius = 0.36;
};

/// Inflated cost of a cell at `d` metres from the nearest lethal cell:
/// 253 * (1 - d / radius) rounded to nearest, 0 at or beyond the radius.
std::uint8_t inflation_cost(double d, double radius);

/// Fills non-lethal cells with the inflation cost of their nearest lethal cell
/// (centre-to-centre distance) via an exact separable distance transform; columns and rows run in parallel.
void inflate(Costmap& map);
/// Reference for `inflate`: stamps a decaying disc around each lethal cell, one at a time.
void inflate_serial(Costmap& map);

/// Marks scan endpoints (and Occupied cells of an optional static map) Lethal,
/// then inflates. The cell under the robot is never marked Lethal.
Costmap build_costmap(const sim::LidarScan& scan, const kin::Pose2D& pose, const CostmapConfig& config,
                      const OccupancyGrid* static_map = nullptr);

// --- planner -----------------------------------------------------------------

/// Path cost in units of resolution/253, held exactly as `linear + diagonal * sqrt(2)`.
struct ExactCost {
  std::int64_t linear = 0;
  std::int64_t diagonal = 0;

  ExactCost operator+(const ExactCost& o) const { return {linear + o.linear, diagonal + o.diagonal}; }
  std::strong_ordering operator<=>(const ExactCost& o) const;
  bool operator==(const ExactCost& o) const = default;
  double value() const;
};

struct PlannedPath {
  std::vector<kin::Pose2D> poses;  // cell centres; last pose carries the goal yaw
  std::vector<CellIndex> cells;
  ExactCost exact;
  double total_cost = 0.0;  // metres weighted by (1 + cost/253)
};

struct PlanParams {
  /// Cells costlier than this are impassable, except the start and goal cells.
  std::uint8_t max_cost = kMaxInflated;
};

/// A* on the 8-connected grid. Moving into a cell costs the step length times
/// (1 + cell_cost/253); diagonal moves may not cut a Lethal corner. The
/// octile heuristic keeps it optimal; ties go to the lower cell index.
/// Throws std::invalid_argument for a Lethal/out-of-map start or goal and
/// NoPathError when the goal is unreachable.
PlannedPath plan(const Costmap& map, const kin::Pose2D& start, const kin::Pose2D& goal, const PlanParams& params = {});

/// Plans through cells at least `clearance` metres from any lethal cell, and
/// falls back to the unrestricted plan when no such path exists.
PlannedPath plan_with_clearance(const Costmap& map, const kin::Pose2D& start, const kin::Pose2D& goal,
                                double clearance);

// --- path following ------------------------------------------------------------

struct FollowParams {
  kin::ChassisParams chassis;
  double lookahead = 0.5;
  double v_max = 1.5;
  double decel = 1.0;  // m/s^2 used for the slowdown ramp near the goal
  double goal_tolerance = 0.15;
  double heading_tolerance = 0.2;
  double heading_gain = 2.5;
  double yaw_rate_max = 2.5;
  double clearance = 0.3;  // preferred distance between planned paths and obstacles
};

struct FollowOutput {
  kin::Twist2D twist;
  bool goal_reached = false;
};

/// Holonomic pursuit: translation toward the lookahead point, heading steered
/// independently toward `gaze` (or along the path when absent). On arrival the
/// robot turns to `final_yaw` if given. Output is clamped into the octahedron.
FollowOutput follow_path(const std::vector<kin::Pose2D>& path, const kin::Pose2D& pose, const FollowParams& params,
                         std::optional<Point2D> gaze = std::nullopt, std::optional<double> final_yaw = std::nullopt);

/// Translation part of follow_path before clamping, in the world frame.
Point2D pursuit_velocity(const std::vector<kin::Pose2D>& path, const kin::Pose2D& pose, const FollowParams& params);

// --- person following ----------------------------------------------------------

struct PersonFollowParams {
  FollowParams follow;
  double standoff = 1.2;
  double goal_timeout = 1.0;
  double search_timeout = 5.0;
  double replan_period = 0.5;
  double target_search_radius = 0.6;  // how far the standoff point may move to keep clearance
};

/// Point on the robot-person segment at `standoff` metres from the person.
Point2D standoff_point(Point2D person, Point2D robot, double standoff);

struct PersonFollowOutput {
  kin::Twist2D twist;
  bool search_timeout = false;  // raised once when the person has been lost for search_timeout
  std::optional<PlannedPath> path;  // set when a new plan was made
};

/// Keeps the standoff distance from a dynamic person goal while always facing
/// the person. Owns the replan timer and the lost-person timer.
class PersonFollower {
 public:
  explicit PersonFollower(PersonFollowParams params = {}) : params_(params) {}

  /// `person` is the latest goal in the world frame with its stamp.
  PersonFollowOutput update(std::optional<std::pair<Point2D, double>> person, const kin::Pose2D& pose,
                            const Costmap* costmap, double now);
  void reset();
  bool timed_out() const { return timed_out_; }

 private:
  PersonFollowParams params_;
  std::optional<Point2D> last_person_;
  double last_seen_ = -1.0;
  double lost_since_ = -1.0;
  bool timed_out_ = false;
  double last_plan_ = -1e9;
  std::vector<kin::Pose2D> path_;
};

// --- mapping -------------------------------------------------------------------

struct MapperParams {
  double l_free = -0.4;
  double l_occ = 0.85;
  double l_min = -4.0;
  double l_max = 4.0;
  double p_occupied = 0.65;
  double p_free = 0.35;
};

struct MapperState {
  GridGeometry geometry;
  std::vector<double> log_odds;
  std::uint64_t updates = 0;
  MapperParams params;

  MapperState() = default;
  MapperState(GridGeometry g, MapperParams p = {});
};

/// Cells a beam crossed before its endpoint, and the endpoint cell when the beam hit something.
struct BeamCells {
  std::vector<CellIndex> free;
  std::optional<CellIndex> hit;
  friend bool operator==(const BeamCells&, const BeamCells&) = default;
};

std::vector<BeamCells> trace_scan(const GridGeometry& g, const sim::LidarScan& scan);
std::vector<BeamCells> trace_scan_serial(const GridGeometry& g, const sim::LidarScan& scan);

/// Log-odds update: l_free on every crossed cell but the endpoint, l_occ on the
/// endpoint of beams shorter than max range, clamped to [l_min, l_max].
void mapper_update(MapperState& state, const kin::Pose2D& pose, const sim::LidarScan& scan);

/// p > p_occupied -> Occupied, p < p_free -> Free, otherwise Unknown.
OccupancyGrid threshold_map(const MapperState& state);

// --- map files -------------------------------------------------------------------

/// "MARVINMAP v1" header lines followed by width*height row-major bytes
/// (row 0 is the bottom row): 0 Free, 100 Occupied, 255 Unknown.
std::string encode_map(const OccupancyGrid& grid);
OccupancyGrid decode_map(const std::string& bytes);
void save_map(const OccupancyGrid& grid, const std::filesystem::path& path);
void save_map(const MapperState& state, const std::filesystem::path& path);
OccupancyGrid load_map(const std::filesystem::path& path);

}  // namespace marvin::nav
