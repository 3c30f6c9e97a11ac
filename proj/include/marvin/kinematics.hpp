#pragma once

#include <array>
#include <cmath>

namespace marvin::kin {

/// Geometry of a four-wheel mecanum chassis.
///
/// `semi_l` and `semi_w` are the longitudinal and transverse half distances
/// between the chassis centre and the wheel contact points. Their sum is the
/// lever arm used for the yaw row of the kinematic matrix.
struct ChassisParams {
  double wheel_radius = 0.05;     // m
  double semi_l = 0.15;           // m
  double semi_w = 0.15;           // m
  double wheel_speed_max = 30.0;  // rad/s

  double lever() const { return semi_l + semi_w; }
  /// Largest |vx| + |vy| + lever*|yaw_rate| reachable without saturating a wheel.
  double budget() const { return wheel_radius * wheel_speed_max; }
  void validate() const;
};

struct Twist2D {
  double vx = 0.0;
  double vy = 0.0;
  double yaw_rate = 0.0;

  bool finite() const {
    return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(yaw_rate);
  }
  friend bool operator==(const Twist2D&, const Twist2D&) = default;
};

/// Wheel angular rates, ordered front-left, front-right, rear-right, rear-left.
struct WheelSpeeds {
  double fl = 0.0;
  double fr = 0.0;
  double rr = 0.0;
  double rl = 0.0;

  std::array<double, 4> as_array() const { return {fl, fr, rr, rl}; }
  double max_abs() const;
  bool finite() const;
  friend bool operator==(const WheelSpeeds&, const WheelSpeeds&) = default;
};

struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

Twist2D forward_kinematics(const ChassisParams& params, const WheelSpeeds& wheels);
WheelSpeeds inverse_kinematics(const ChassisParams& params, const Twist2D& twist);

/// Projects a twist into the admissible-velocity octahedron.
///
/// Rotation has priority: the yaw rate is kept and the planar velocity is
/// scaled by a single factor into what is left of the wheel budget. If the
/// yaw rate alone is over budget it is saturated and translation is dropped.
Twist2D clamp_to_octahedron(const ChassisParams& params, const Twist2D& twist);

/// Integrates a constant body twist over dt with the exact screw motion.
Pose2D integrate_odometry(const Pose2D& pose, const Twist2D& twist, double dt);

}  // namespace marvin::kin
