#include "marvin/lowlayer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <string>

#include "marvin/errors.hpp"

namespace marvin::low {

void PidGains::validate() const {
  if (!(kp >= 0.0) || !(ki >= 0.0) || !(kd >= 0.0)) throw std::invalid_argument("PID gains must be >= 0");
  if (!(integral_limit > 0.0)) throw std::invalid_argument("integral_limit must be > 0");
  if (!(output_limit > 0.0)) throw std::invalid_argument("output_limit must be > 0");
}

PidResult pid_step(const PidGains& gains, const PidState& state, double setpoint,
                   double measurement, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
  const double error = setpoint - measurement;

  PidResult out;
  out.state = state;
  out.state.integral_term = std::clamp(state.integral_term + gains.ki * error * dt,
                                       -gains.integral_limit, gains.integral_limit);
  const double derivative = state.primed ? -(measurement - state.prev_measurement) / dt : 0.0;
  out.state.prev_measurement = measurement;
  out.state.primed = true;

  const double u = gains.kp * error + out.state.integral_term + gains.kd * derivative;
  out.command = std::clamp(u, -gains.output_limit, gains.output_limit);
  return out;
}

void WheelPlant::step(double command, double dt) {
  const double alpha = 1.0 - std::exp(-dt / time_constant);
  omega += (gain * command - omega) * alpha;
}

kin::WheelSpeeds WheelLoop::achieved() const {
  return {plants[0].omega, plants[1].omega, plants[2].omega, plants[3].omega};
}

kin::WheelSpeeds wheel_loop_step(WheelLoop& loop, const kin::WheelSpeeds& target, double dt) {
  const auto setpoints = target.as_array();
  for (std::size_t i = 0; i < 4; ++i) {
    const auto r = pid_step(loop.gains, loop.controllers[i], setpoints[i], loop.plants[i].omega, dt);
    loop.controllers[i] = r.state;
    loop.plants[i].step(r.command, dt);
  }
  return loop.achieved();
}

// --- positioning device ----------------------------------------------------

void AxisSpec::validate() const {
  if (!(stroke > 0.0)) throw std::invalid_argument("axis stroke must be > 0");
  if (steps_per_rev <= 0 || microstep_factor <= 0) throw std::invalid_argument("step counts must be > 0");
  if (!(screw_pitch_mm > 0.0)) throw std::invalid_argument("screw pitch must be > 0");
  if (!(homing_speed > 0.0) || !(operational_speed > 0.0)) throw std::invalid_argument("axis speeds must be > 0");
}

AxisSpec AxisSpec::linear_default() { return AxisSpec{}; }

AxisSpec AxisSpec::tilt_default() {
  AxisSpec s;
  s.stroke = 26.0;
  s.homing_speed = 10.0;
  s.operational_speed = 10.0;
  return s;
}

std::int64_t microsteps_for_travel(const AxisSpec& spec, double travel_mm) {
  spec.validate();
  if (!std::isfinite(travel_mm) || travel_mm < 0.0 || travel_mm > spec.stroke) {
    throw std::out_of_range("travel " + std::to_string(travel_mm) + " mm outside [0, stroke]");
  }
  const double per_rev = static_cast<double>(spec.steps_per_rev) * spec.microstep_factor;
  return static_cast<std::int64_t>(std::round(travel_mm / spec.screw_pitch_mm * per_rev));
}

std::string_view to_string(DevicePhase p) {
  switch (p) {
    case DevicePhase::Unhomed: return "unhomed";
    case DevicePhase::Homing: return "homing";
    case DevicePhase::Ready: return "ready";
    case DevicePhase::Moving: return "moving";
  }
  return "unhomed";
}

std::string_view to_string(DeviceTarget t) {
  switch (t) {
    case DeviceTarget::Deploy: return "deploy";
    case DeviceTarget::Retract: return "retract";
    case DeviceTarget::TiltForward: return "tilt_forward";
    case DeviceTarget::TiltHome: return "tilt_home";
  }
  return "deploy";
}

DevicePhase device_phase_from_string(std::string_view s) {
  for (auto p : {DevicePhase::Unhomed, DevicePhase::Homing, DevicePhase::Ready, DevicePhase::Moving}) {
    if (to_string(p) == s) return p;
  }
  throw std::invalid_argument("unknown device phase '" + std::string(s) + "'");
}

DeviceTarget device_target_from_string(std::string_view s) {
  for (auto t : {DeviceTarget::Deploy, DeviceTarget::Retract, DeviceTarget::TiltForward, DeviceTarget::TiltHome}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown device target '" + std::string(s) + "'");
}

DeviceState DeviceState::at(double linear_m, double tilt_deg, DevicePhase phase) {
  DeviceState s;
  s.linear_pos = linear_m;
  s.tilt_pos = tilt_deg;
  s.phase = phase;
  s.switch_linear = linear_m == 0.0;
  s.switch_tilt = tilt_deg == 0.0;
  s.linear_goal = linear_m;
  s.tilt_goal = tilt_deg;
  return s;
}

namespace {

// Moves `pos` toward `goal` by at most `step`, landing exactly on the goal.
double approach(double pos, double goal, double step) {
  if (std::abs(goal - pos) <= step) return goal;
  return pos + std::copysign(step, goal - pos);
}

}  // namespace

DeviceState homing_step(const DeviceSpecs& specs, const DeviceState& state, double dt) {
  if (state.phase != DevicePhase::Unhomed && state.phase != DevicePhase::Homing) {
    throw StateError("homing requested while device is " + std::string(to_string(state.phase)));
  }
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  DeviceState next = state;
  if (!(state.switch_linear && state.switch_tilt)) {
    next.phase = DevicePhase::Homing;
    next.linear_pos = approach(state.linear_pos, 0.0, specs.linear.homing_speed / 1000.0 * dt);
    next.tilt_pos = approach(state.tilt_pos, 0.0, specs.tilt.homing_speed * dt);
    next.switch_linear = next.linear_pos == 0.0;
    next.switch_tilt = next.tilt_pos == 0.0;
  }
  if (next.switch_linear && next.switch_tilt) {
    next.linear_pos = 0.0;
    next.tilt_pos = 0.0;
    next.linear_goal = 0.0;
    next.tilt_goal = 0.0;
    next.phase = DevicePhase::Ready;
  }
  return next;
}

DeviceState device_command(const DeviceSpecs& specs, const DeviceState& state, DeviceTarget target) {
  if (state.phase != DevicePhase::Ready) {
    throw BusyError("positioning device is " + std::string(to_string(state.phase)));
  }
  DeviceState next = state;
  switch (target) {
    case DeviceTarget::Deploy: next.linear_goal = specs.linear.stroke / 1000.0; break;
    case DeviceTarget::Retract:
      next.linear_goal = 0.0;
      next.tilt_goal = 0.0;
      break;
    case DeviceTarget::TiltForward: next.tilt_goal = specs.tilt.stroke; break;
    case DeviceTarget::TiltHome: next.tilt_goal = 0.0; break;
  }
  if (next.linear_goal != next.linear_pos || next.tilt_goal != next.tilt_pos) next.phase = DevicePhase::Moving;
  return next;
}

DeviceState device_step(const DeviceSpecs& specs, const DeviceState& state, double dt) {
  if (state.phase != DevicePhase::Moving) return state;
  DeviceState next = state;
  next.linear_pos = approach(state.linear_pos, state.linear_goal, specs.linear.operational_speed / 1000.0 * dt);
  next.tilt_pos = approach(state.tilt_pos, state.tilt_goal, specs.tilt.operational_speed * dt);
  next.switch_linear = next.linear_pos == 0.0;
  next.switch_tilt = next.tilt_pos == 0.0;
  if (next.linear_pos == next.linear_goal && next.tilt_pos == next.tilt_goal) next.phase = DevicePhase::Ready;
  return next;
}

LightAck Lights::set(bool on) {
  const bool changed = on != on_;
  on_ = on;
  return {on_, changed};
}

// --- firmware --------------------------------------------------------------

Firmware::Firmware(FirmwareConfig config, DeviceState initial)
    : config_(std::move(config)), device_(initial) {
  config_.chassis.validate();
  config_.gains.validate();
  config_.device.linear.validate();
  config_.device.tilt.validate();
  if (!(config_.control_dt > 0.0)) throw std::invalid_argument("control_dt must be positive");
  wheels_.gains = config_.gains;
  for (auto& p : wheels_.plants) {
    p.time_constant = config_.plant_time_constant;
    p.gain = config_.plant_gain;
  }
}

void Firmware::command_device(DeviceTarget target) {
  device_ = device_command(config_.device, device_, target);
}

void Firmware::tick(const kin::Twist2D& twist, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  targets_ = kin::inverse_kinematics(config_.chassis, twist);
  const int substeps = std::max(1, static_cast<int>(std::lround(dt / config_.control_dt)));
  const double h = dt / substeps;
  for (int i = 0; i < substeps; ++i) wheel_loop_step(wheels_, targets_, h);

  if (device_.phase == DevicePhase::Unhomed || device_.phase == DevicePhase::Homing) {
    device_ = homing_step(config_.device, device_, dt);
  } else {
    device_ = device_step(config_.device, device_, dt);
  }
}

FirmwareSnapshot Firmware::snapshot() const {
  FirmwareSnapshot s;
  s.wheel_targets = targets_;
  s.wheels = wheels_.achieved();
  s.achieved = kin::forward_kinematics(config_.chassis, s.wheels);
  s.device = device_;
  s.lights = lights_.on();
  return s;
}

}  // namespace marvin::low
