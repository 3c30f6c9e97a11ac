#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "marvin/kinematics.hpp"

namespace marvin::low {

struct PidGains {
  double kp = 2.0;
  double ki = 20.0;
  double kd = 0.0;
  double integral_limit = 40.0;  // bound on the integral term, command units
  double output_limit = 100.0;   // command saturation

  void validate() const;
};

struct PidState {
  double integral_term = 0.0;  // ki * accumulated error, already clamped
  double prev_measurement = 0.0;
  bool primed = false;
};

struct PidResult {
  double command = 0.0;
  PidState state;
};

/// Positional PID with a clamped integral term and derivative on measurement.
/// The derivative is zero on the first call.
PidResult pid_step(const PidGains& gains, const PidState& state, double setpoint,
                   double measurement, double dt);

/// First-order motor: tau * d(omega)/dt = gain * u - omega, discretised exactly
/// for a piecewise-constant command.
struct WheelPlant {
  double time_constant = 0.1;
  double gain = 1.0;
  double omega = 0.0;

  void step(double command, double dt);
};

/// One PID + plant per wheel, in fl, fr, rr, rl order.
struct WheelLoop {
  PidGains gains;
  std::array<PidState, 4> controllers{};
  std::array<WheelPlant, 4> plants{};

  kin::WheelSpeeds achieved() const;
};

kin::WheelSpeeds wheel_loop_step(WheelLoop& loop, const kin::WheelSpeeds& target, double dt);

// --- positioning device ----------------------------------------------------

struct AxisSpec {
  int steps_per_rev = 200;
  int microstep_factor = 256;
  double screw_pitch_mm = 6.35;
  double stroke = 350.0;            // mm for the linear axis, degrees for tilt
  double homing_speed = 20.0;       // stroke units per second
  double operational_speed = 40.0;  // stroke units per second

  void validate() const;
  static AxisSpec linear_default();
  static AxisSpec tilt_default();
};

struct DeviceSpecs {
  AxisSpec linear = AxisSpec::linear_default();
  AxisSpec tilt = AxisSpec::tilt_default();
};

/// Microsteps needed to cover `travel_mm` on a screw axis, rounded half away from zero.
std::int64_t microsteps_for_travel(const AxisSpec& spec, double travel_mm);

enum class DevicePhase { Unhomed, Homing, Ready, Moving };
enum class DeviceTarget { Deploy, Retract, TiltForward, TiltHome };

std::string_view to_string(DevicePhase p);
std::string_view to_string(DeviceTarget t);
DevicePhase device_phase_from_string(std::string_view s);
DeviceTarget device_target_from_string(std::string_view s);

struct DeviceState {
  double linear_pos = 0.0;  // m
  double tilt_pos = 0.0;    // deg
  DevicePhase phase = DevicePhase::Unhomed;
  bool switch_linear = true;
  bool switch_tilt = true;
  double linear_goal = 0.0;  // m, meaningful while Moving
  double tilt_goal = 0.0;    // deg, meaningful while Moving

  /// A state with the given positions; switches follow the positions.
  static DeviceState at(double linear_m, double tilt_deg, DevicePhase phase);
  friend bool operator==(const DeviceState&, const DeviceState&) = default;
};

/// Drives both axes toward their switches at homing speed. Completes with both
/// positions exactly zero and phase Ready.
DeviceState homing_step(const DeviceSpecs& specs, const DeviceState& state, double dt);

/// Starts a predefined stroke. Only accepted in Ready.
DeviceState device_command(const DeviceSpecs& specs, const DeviceState& state, DeviceTarget target);

/// Advances a Moving device at operational speed; returns to Ready at the stroke endpoint.
DeviceState device_step(const DeviceSpecs& specs, const DeviceState& state, double dt);

// --- lights ----------------------------------------------------------------

struct LightAck {
  bool on = false;
  bool changed = false;
};

class Lights {
 public:
  LightAck set(bool on);
  bool on() const { return on_; }

 private:
  bool on_ = false;
};

// --- firmware --------------------------------------------------------------

struct FirmwareConfig {
  kin::ChassisParams chassis;
  PidGains gains;
  double plant_time_constant = 0.1;
  double plant_gain = 1.0;
  DeviceSpecs device;
  double control_dt = 0.001;  // inner wheel loop period
};

struct FirmwareSnapshot {
  kin::WheelSpeeds wheel_targets;
  kin::WheelSpeeds wheels;
  kin::Twist2D achieved;
  DeviceState device;
  bool lights = false;
};

/// The simulated microcontroller: chassis twist in, wheel loops, positioning
/// device and lights. Advanced by one owner at the system tick.
class Firmware {
 public:
  explicit Firmware(FirmwareConfig config, DeviceState initial = {});

  /// Rejects with BusyError unless the device is Ready.
  void command_device(DeviceTarget target);
  LightAck set_lights(bool on) { return lights_.set(on); }

  /// Runs the wheel loops at control_dt for `dt` seconds toward the inverse
  /// kinematics of `twist`, and advances the device.
  void tick(const kin::Twist2D& twist, double dt);

  FirmwareSnapshot snapshot() const;
  const FirmwareConfig& config() const { return config_; }

 private:
  FirmwareConfig config_;
  WheelLoop wheels_;
  kin::WheelSpeeds targets_;
  DeviceState device_;
  Lights lights_;
};

}  // namespace marvin::low
