#include "marvin/kinematics.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace marvin::kin {

void ChassisParams::validate() const {
  if (!(wheel_radius > 0.0) || !(semi_l > 0.0) || !(semi_w > 0.0) || !(wheel_speed_max > 0.0) ||
      !std::isfinite(wheel_radius + semi_l + semi_w + wheel_speed_max)) {
    throw std::invalid_argument("chassis parameters must be finite and strictly positive");
  }
}

double WheelSpeeds::max_abs() const {
  return std::max({std::abs(fl), std::abs(fr), std::abs(rr), std::abs(rl)});
}

bool WheelSpeeds::finite() const {
  return std::isfinite(fl) && std::isfinite(fr) && std::isfinite(rr) && std::isfinite(rl);
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

Twist2D forward_kinematics(const ChassisParams& params, const WheelSpeeds& wheels) {
  params.validate();
  if (!wheels.finite()) throw std::invalid_argument("wheel speeds must be finite");
  const double k = params.wheel_radius / 4.0;
  const double lever = params.lever();
  Twist2D out;
  out.yaw_rate = k * (-wheels.fl + wheels.fr + wheels.rr - wheels.rl) / lever;
  out.vx = k * (wheels.fl + wheels.fr + wheels.rr + wheels.rl);
  out.vy = k * (-wheels.fl + wheels.fr - wheels.rr + wheels.rl);
  return out;
}

WheelSpeeds inverse_kinematics(const ChassisParams& params, const Twist2D& twist) {
  params.validate();
  if (!twist.finite()) throw std::invalid_argument("twist must be finite");
  const double r = params.wheel_radius;
  const double spin = params.lever() * twist.yaw_rate;
  return WheelSpeeds{
      .fl = (twist.vx - twist.vy - spin) / r,
      .fr = (twist.vx + twist.vy + spin) / r,
      .rr = (twist.vx - twist.vy + spin) / r,
      .rl = (twist.vx + twist.vy - spin) / r,
  };
}

Twist2D clamp_to_octahedron(const ChassisParams& params, const Twist2D& twist) {
  params.validate();
  if (!twist.finite()) throw std::invalid_argument("twist must be finite");
  const double budget = params.budget();
  const double lever = params.lever();
  const double spin = lever * std::abs(twist.yaw_rate);

  if (spin >= budget) {
    return Twist2D{0.0, 0.0, std::copysign(budget / lever, twist.yaw_rate)};
  }
  const double linear = std::abs(twist.vx) + std::abs(twist.vy);
  const double room = budget - spin;
  if (linear <= room) return twist;
  // Rounding can leave the scaled sum an ulp over the room; shrinking s until it
  // fits makes a second clamp a no-op.
  double s = room / linear;
  while (s > 0.0 && std::abs(twist.vx * s) + std::abs(twist.vy * s) > room) s = std::nextafter(s, 0.0);
  return Twist2D{twist.vx * s, twist.vy * s, twist.yaw_rate};
}

Pose2D integrate_odometry(const Pose2D& pose, const Twist2D& twist, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
  if (!twist.finite()) throw std::invalid_argument("twist must be finite");

  const double dtheta = twist.yaw_rate * dt;
  // Body-frame displacement of a constant twist: v * sin(w t)/w and v * (1 - cos(w t))/w.
  double a;
  double b;
  if (std::abs(dtheta) < 1e-6) {
    const double t2 = dtheta * dtheta;
    a = dt * (1.0 - t2 / 6.0);
    b = dt * dtheta * (0.5 - t2 / 24.0);
  } else {
    a = std::sin(dtheta) / twist.yaw_rate;
    b = (1.0 - std::cos(dtheta)) / twist.yaw_rate;
  }
  const double bx = twist.vx * a - twist.vy * b;
  const double by = twist.vx * b + twist.vy * a;
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  return Pose2D{pose.x + c * bx - s * by, pose.y + s * bx + c * by, wrap_angle(pose.yaw + dtheta)};
}

}  // namespace marvin::kin
