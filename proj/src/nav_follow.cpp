#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "marvin/errors.hpp"
#include "marvin/nav.hpp"

namespace marvin::nav {

namespace {

double heading_rate(const kin::Pose2D& pose, double target_yaw, const FollowParams& p) {
  const double err = kin::wrap_angle(target_yaw - pose.yaw);
  return std::clamp(p.heading_gain * err, -p.yaw_rate_max, p.yaw_rate_max);
}

kin::Twist2D to_body(Point2D v, double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v.x + s * v.y, -s * v.x + c * v.y, 0.0};
}

std::optional<Point2D> nearest_clear(const Costmap& map, Point2D p, std::uint8_t ceiling, double radius) {
  const auto& g = map.geometry;
  const auto centre = g.cell_in_bounds(p);
  if (!centre) return std::nullopt;
  if (map.at(*centre) <= ceiling) return p;
  const int reach = static_cast<int>(std::ceil(radius / g.resolution));
  std::optional<Point2D> best;
  double best_d = radius;
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      const CellIndex c{centre->x + dx, centre->y + dy};
      if (!g.in_bounds(c) || map.at(c) > ceiling) continue;
      const Point2D q = g.cell_center(c);
      const double d = std::hypot(q.x - p.x, q.y - p.y);
      if (d < best_d) {
        best_d = d;
        best = q;
      }
    }
  }
  return best;
}

}  // namespace

Point2D pursuit_velocity(const std::vector<kin::Pose2D>& path, const kin::Pose2D& pose, const FollowParams& params) {
  if (path.empty()) throw std::invalid_argument("empty path");
  const Point2D goal{path.back().x, path.back().y};
  const double to_goal = std::hypot(goal.x - pose.x, goal.y - pose.y);
  if (to_goal < 1e-12) return {};

  // Closest point on the polyline, as (segment, fraction).
  std::size_t best_seg = 0;
  double best_t = 0.0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const double ax = path[i].x;
    const double ay = path[i].y;
    const double sx = path[i + 1].x - ax;
    const double sy = path[i + 1].y - ay;
    const double len2 = sx * sx + sy * sy;
    double t = len2 > 0.0 ? ((pose.x - ax) * sx + (pose.y - ay) * sy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double d = std::hypot(ax + t * sx - pose.x, ay + t * sy - pose.y);
    if (d < best_d) {
      best_d = d;
      best_seg = i;
      best_t = t;
    }
  }

  Point2D target = goal;
  double remaining = params.lookahead;
  for (std::size_t i = best_seg; i + 1 < path.size(); ++i) {
    const double t0 = i == best_seg ? best_t : 0.0;
    const double sx = path[i + 1].x - path[i].x;
    const double sy = path[i + 1].y - path[i].y;
    const double seg_left = std::hypot(sx, sy) * (1.0 - t0);
    if (seg_left >= remaining) {
      const double len = std::hypot(sx, sy);
      const double t = t0 + remaining / len;
      target = {path[i].x + t * sx, path[i].y + t * sy};
      break;
    }
    remaining -= seg_left;
  }

  double dx = target.x - pose.x;
  double dy = target.y - pose.y;
  double n = std::hypot(dx, dy);
  if (n < 1e-9) {
    dx = goal.x - pose.x;
    dy = goal.y - pose.y;
    n = to_goal;
  }
  const double speed = std::min(params.v_max, std::sqrt(2.0 * params.decel * to_goal));
  return {dx / n * speed, dy / n * speed};
}

FollowOutput follow_path(const std::vector<kin::Pose2D>& path, const kin::Pose2D& pose, const FollowParams& params,
                         std::optional<Point2D> gaze, std::optional<double> final_yaw) {
  if (path.empty()) throw std::invalid_argument("empty path");
  FollowOutput out;
  const double to_goal = std::hypot(path.back().x - pose.x, path.back().y - pose.y);

  if (to_goal <= params.goal_tolerance) {
    if (final_yaw && std::abs(kin::wrap_angle(*final_yaw - pose.yaw)) > params.heading_tolerance) {
      out.twist.yaw_rate = heading_rate(pose, *final_yaw, params);
      out.twist = kin::clamp_to_octahedron(params.chassis, out.twist);
      return out;
    }
    out.goal_reached = true;
    return out;
  }

  const Point2D v = pursuit_velocity(path, pose, params);
  out.twist = to_body(v, pose.yaw);
  double target_yaw = pose.yaw;
  if (gaze) {
    target_yaw = std::atan2(gaze->y - pose.y, gaze->x - pose.x);
  } else if (std::hypot(v.x, v.y) > 1e-9) {
    target_yaw = std::atan2(v.y, v.x);
  }
  out.twist.yaw_rate = heading_rate(pose, target_yaw, params);
  out.twist = kin::clamp_to_octahedron(params.chassis, out.twist);
  return out;
}

// --- person following ----------------------------------------------------------

Point2D standoff_point(Point2D person, Point2D robot, double standoff) {
  const double dx = robot.x - person.x;
  const double dy = robot.y - person.y;
  const double d = std::hypot(dx, dy);
  if (d < 1e-9) return person;
  return {person.x + dx / d * standoff, person.y + dy / d * standoff};
}

void PersonFollower::reset() {
  last_person_.reset();
  last_seen_ = -1.0;
  lost_since_ = -1.0;
  timed_out_ = false;
  last_plan_ = -1e9;
  path_.clear();
}

PersonFollowOutput PersonFollower::update(std::optional<std::pair<Point2D, double>> person, const kin::Pose2D& pose,
                                          const Costmap* costmap, double now) {
  PersonFollowOutput out;
  const auto& fp = params_.follow;
  if (person && now - person->second < params_.goal_timeout) {
    last_person_ = person->first;
    last_seen_ = person->second;
    lost_since_ = -1.0;
    timed_out_ = false;
  }
  const bool fresh = last_person_ && now - last_seen_ < params_.goal_timeout;
  if (!fresh) {
    path_.clear();
    if (lost_since_ < 0.0) lost_since_ = last_seen_ >= 0.0 ? last_seen_ : now;
    if (!timed_out_ && now - lost_since_ >= params_.search_timeout) {
      timed_out_ = true;
      out.search_timeout = true;
    }
    return out;
  }

  const Point2D target_person = *last_person_;
  const Point2D robot{pose.x, pose.y};
  const double face = std::atan2(target_person.y - robot.y, target_person.x - robot.x);
  auto heading_only = [&] {
    kin::Twist2D t;
    t.yaw_rate = std::clamp(fp.heading_gain * kin::wrap_angle(face - pose.yaw), -fp.yaw_rate_max, fp.yaw_rate_max);
    return kin::clamp_to_octahedron(fp.chassis, t);
  };

  const double dist = std::hypot(target_person.x - robot.x, target_person.y - robot.y);
  if (dist <= params_.standoff) {
    path_.clear();
    out.twist = heading_only();
    return out;
  }

  Point2D target = standoff_point(target_person, robot, params_.standoff);
  if (path_.empty() || now - last_plan_ >= params_.replan_period - 1e-9) {
    last_plan_ = now;
    path_.clear();
    if (costmap != nullptr) {
      const auto& g = costmap->geometry;
      // Prefer the nearest point with the planning clearance; pull the target
      // toward the robot out of lethal space when there is none nearby.
      const std::uint8_t ceiling = inflation_cost(fp.clearance, costmap->inflation_radius);
      const std::optional<Point2D> clear = nearest_clear(*costmap, target, ceiling, params_.target_search_radius);
      if (clear) target = *clear;
      const double step = g.resolution / 2.0;
      const double span = std::hypot(target.x - robot.x, target.y - robot.y);
      for (double s = 0.0; s < span; s += step) {
        const Point2D p{target.x + (robot.x - target.x) * s / span, target.y + (robot.y - target.y) * s / span};
        const auto c = g.cell_in_bounds(p);
        if (c && !costmap->lethal(*c)) {
          target = p;
          break;
        }
      }
      try {
        auto planned = plan_with_clearance(*costmap, pose, {target.x, target.y, face}, fp.clearance);
        path_ = planned.poses;
        out.path = std::move(planned);
      } catch (const NoPathError&) {
      } catch (const std::invalid_argument&) {
      }
    }
    if (path_.empty()) path_ = {pose, {target.x, target.y, face}};
  }
  // Between replans the path keeps ending at the current standoff point.
  path_.back() = {target.x, target.y, face};

  const FollowOutput f = follow_path(path_, pose, fp, target_person);
  out.twist = f.goal_reached ? heading_only() : f.twist;
  return out;
}

}  // namespace marvin::nav
