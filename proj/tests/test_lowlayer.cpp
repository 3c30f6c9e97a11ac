#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>
#include <stdexcept>

#include "marvin/errors.hpp"
#include "marvin/lowlayer.hpp"
#include "support.hpp"

using namespace marvin;
using namespace marvin::low;

namespace {

// Closed loop of the default PI on the default plant: (kp s + ki) K / (tau s^2 + (1 + K kp) s + K ki)
// = (2s + 20) / (0.1 s^2 + 3 s + 20) = 20 / (s + 20) after the pole at -10 cancels the zero.
double closed_form_step(double setpoint, double t) { return setpoint * (1.0 - std::exp(-20.0 * t)); }

struct StepRun {
  double max_dev_from_closed_form = 0.0;
  double worst_error_after_settle = 0.0;
  double final_error = 0.0;
  double max_integral = 0.0;
};

StepRun run_step(const PidGains& gains, double setpoint, double seconds, double dt = 0.001) {
  WheelPlant plant;
  PidState st;
  StepRun r;
  const int n = static_cast<int>(std::lround(seconds / dt));
  for (int k = 1; k <= n; ++k) {
    const auto out = pid_step(gains, st, setpoint, plant.omega, dt);
    st = out.state;
    plant.step(out.command, dt);
    const double t = k * dt;
    r.max_dev_from_closed_form = std::max(r.max_dev_from_closed_form, std::abs(plant.omega - closed_form_step(setpoint, t)));
    if (t >= 0.5 - 1e-12) {
      r.worst_error_after_settle = std::max(r.worst_error_after_settle, std::abs(plant.omega - setpoint) / setpoint);
    }
    r.max_integral = std::max(r.max_integral, std::abs(st.integral_term));
  }
  r.final_error = std::abs(plant.omega - setpoint);
  return r;
}

}  // namespace

TEST_CASE("pid: zero error on the first call gives zero command") {
  const auto out = pid_step({}, {}, 3.0, 3.0, 0.001);
  CHECK(out.command == 0.0);
  CHECK(out.state.primed);
  CHECK_THROWS_AS(pid_step({}, {}, 1.0, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(pid_step({}, {}, 1.0, 0.0, -0.001), std::invalid_argument);
}

TEST_CASE("pid: derivative acts on the measurement, not the setpoint") {
  PidGains g;
  g.kp = 0.0;
  g.ki = 0.0;
  g.kd = 1.0;
  auto a = pid_step(g, {}, 0.0, 1.0, 0.01);
  CHECK(a.command == 0.0);  // seeded to zero
  auto b = pid_step(g, a.state, 100.0, 1.5, 0.01);
  CHECK(b.command == doctest::Approx(-50.0));  // setpoint jump ignored
}

TEST_CASE("pid: step response follows the closed-form first-order response") {
  const StepRun r = run_step({}, 10.0, 1.0);
  // The sampled loop lags the continuous one by about one period; measured 0.0505 rad/s at 1 ms.
  CHECK(r.max_dev_from_closed_form < 0.06);
  CHECK(r.worst_error_after_settle < 0.02);
  CHECK(r.final_error < 1e-5);
  // Shrinking the period converges on the closed form.
  const StepRun fine = run_step({}, 10.0, 1.0, 0.0001);
  CHECK(fine.max_dev_from_closed_form < 0.2 * r.max_dev_from_closed_form);
}

TEST_CASE("pid: zero steady-state error under integral action") {
  const StepRun r = run_step({}, 10.0, 5.0);
  CHECK(r.final_error < 1e-12);
  test::Gen g(21);
  for (int i = 0; i < 20; ++i) {
    const double sp = g.uniform(-25, 25);
    CHECK(run_step({}, sp, 5.0).final_error < 1e-9);
  }
}

TEST_CASE("pid: integral term stays within its limit under persistent error") {
  PidGains g;
  PidState st;
  for (int k = 0; k < 100000; ++k) {
    st = pid_step(g, st, 1000.0, 0.0, 0.001).state;
    CHECK(std::abs(st.integral_term) <= g.integral_limit);
  }
  CHECK(st.integral_term == g.integral_limit);
}

TEST_CASE("plant: exact discretisation composes") {
  WheelPlant a, b;
  for (int k = 0; k < 10; ++k) a.step(5.0, 0.001);
  b.step(5.0, 0.01);
  CHECK(a.omega == doctest::Approx(b.omega).epsilon(1e-12));
  CHECK(b.omega == doctest::Approx(5.0 * (1.0 - std::exp(-0.1))).epsilon(1e-12));
}

TEST_CASE("wheel loop: zero target stays at rest, constant target converges") {
  WheelLoop loop;
  for (int k = 0; k < 100; ++k) wheel_loop_step(loop, {}, 0.001);
  CHECK(loop.achieved() == kin::WheelSpeeds{});
  const kin::WheelSpeeds target{10, -5, 3, 7.5};
  for (int k = 0; k < 3000; ++k) wheel_loop_step(loop, target, 0.001);
  const auto w = loop.achieved();
  CHECK(w.fl == doctest::Approx(target.fl).epsilon(1e-9));
  CHECK(w.fr == doctest::Approx(target.fr).epsilon(1e-9));
  CHECK(w.rr == doctest::Approx(target.rr).epsilon(1e-9));
  CHECK(w.rl == doctest::Approx(target.rl).epsilon(1e-9));
}

TEST_CASE("wheel loop: alternating 1 Hz target tracks with bounded lag") {
  WheelLoop loop;
  const double tau = 0.1;
  // Lag measured as time from each sign flip until the wheel is within 2% of the new target.
  double worst_lag = 0.0;
  double target = 10.0;
  double flip_time = 0.0;
  bool settled = false;
  for (int k = 1; k <= 5000; ++k) {
    const double t = k * 0.001;
    const double want = std::fmod(t, 1.0) < 0.5 ? 10.0 : -10.0;
    if (want != target) {
      target = want;
      flip_time = t;
      settled = false;
    }
    wheel_loop_step(loop, {target, target, target, target}, 0.001);
    if (!settled && std::abs(loop.achieved().fl - target) < 0.2) {
      settled = true;
      worst_lag = std::max(worst_lag, t - flip_time);
    }
  }
  CHECK(worst_lag < 3 * tau);
}

TEST_CASE("microsteps for travel") {
  const AxisSpec lin = AxisSpec::linear_default();
  CHECK(microsteps_for_travel(lin, 6.35) == 51200);
  CHECK(microsteps_for_travel(lin, 0.0) == 0);
  CHECK(microsteps_for_travel(lin, 350.0) == 2822047);
  CHECK_THROWS_AS(microsteps_for_travel(lin, -0.1), std::out_of_range);
  CHECK_THROWS_AS(microsteps_for_travel(lin, 350.1), std::out_of_range);
}

TEST_CASE("microsteps are monotone and within half a step of the exact value") {
  const AxisSpec lin = AxisSpec::linear_default();
  test::Gen g(22);
  std::vector<double> travels;
  for (int i = 0; i < 2000; ++i) travels.push_back(g.uniform(0, 350));
  std::sort(travels.begin(), travels.end());
  std::int64_t prev = 0;
  for (double t : travels) {
    const auto m = microsteps_for_travel(lin, t);
    CHECK(m >= prev);
    prev = m;
    CHECK(std::abs(static_cast<double>(m) - t / 6.35 * 51200.0) <= 0.5 + 1e-9);
  }
}

TEST_CASE("homing: already retracted is Ready in one step") {
  const DeviceSpecs specs;
  const auto s = homing_step(specs, DeviceState::at(0, 0, DevicePhase::Unhomed), 0.02);
  CHECK(s.phase == DevicePhase::Ready);
  CHECK(s.linear_pos == 0.0);
  CHECK(s.tilt_pos == 0.0);
}

TEST_CASE("homing: from 0.2 m takes 0.2 / homing speed and ends exactly at zero") {
  const DeviceSpecs specs;
  DeviceState s = DeviceState::at(0.2, 0.0, DevicePhase::Unhomed);
  int ticks = 0;
  while (s.phase != DevicePhase::Ready) {
    s = homing_step(specs, s, 0.02);
    ++ticks;
    REQUIRE(ticks < 10000);
  }
  CHECK(ticks * 0.02 == doctest::Approx(0.2 / 0.020).epsilon(0.01));
  CHECK(s.linear_pos == 0.0);
  CHECK(s.switch_linear);
}

TEST_CASE("homing from random starts always ends at exactly zero") {
  const DeviceSpecs specs;
  test::Gen g(23);
  for (int i = 0; i < 20; ++i) {
    DeviceState s = DeviceState::at(g.uniform(0, 0.35), g.uniform(0, 26), DevicePhase::Unhomed);
    int ticks = 0;
    while (s.phase != DevicePhase::Ready && ticks < 100000) {
      s = homing_step(specs, s, g.uniform(0.001, 0.05));
      ++ticks;
    }
    CHECK(s.phase == DevicePhase::Ready);
    CHECK(s.linear_pos == 0.0);
    CHECK(s.tilt_pos == 0.0);
  }
  CHECK_THROWS_AS(homing_step(specs, DeviceState::at(0, 0, DevicePhase::Ready), 0.02), StateError);
}

TEST_CASE("device strokes and busy rejection") {
  const DeviceSpecs specs;
  DeviceState s = DeviceState::at(0, 0, DevicePhase::Ready);
  s = device_command(specs, s, DeviceTarget::Deploy);
  CHECK(s.phase == DevicePhase::Moving);
  CHECK_THROWS_AS(device_command(specs, s, DeviceTarget::Deploy), BusyError);
  double t = 0.0;
  while (s.phase == DevicePhase::Moving) {
    s = device_step(specs, s, 0.02);
    t += 0.02;
  }
  CHECK(s.linear_pos == 0.350);
  CHECK(t == doctest::Approx(350.0 / 40.0).epsilon(0.01));
  s = device_command(specs, s, DeviceTarget::TiltForward);
  while (s.phase == DevicePhase::Moving) s = device_step(specs, s, 0.02);
  CHECK(s.tilt_pos == 26.0);
  CHECK(!s.switch_tilt);
  CHECK_THROWS_AS(device_command(specs, DeviceState::at(0, 0, DevicePhase::Homing), DeviceTarget::Deploy), BusyError);
}

TEST_CASE("axis positions never leave their range under random command sequences") {
  const DeviceSpecs specs;
  test::Gen g(24);
  DeviceState s = DeviceState::at(0, 0, DevicePhase::Ready);
  const DeviceTarget targets[] = {DeviceTarget::Deploy, DeviceTarget::Retract, DeviceTarget::TiltForward,
                                  DeviceTarget::TiltHome};
  for (int k = 0; k < 20000; ++k) {
    if (g.coin(0.05)) {
      try {
        s = device_command(specs, s, targets[g.integer(0, 3)]);
      } catch (const BusyError&) {
      }
    }
    s = device_step(specs, s, g.uniform(0.001, 0.1));
    CHECK(s.linear_pos >= 0.0);
    CHECK(s.linear_pos <= 0.350);
    CHECK(s.tilt_pos >= 0.0);
    CHECK(s.tilt_pos <= 26.0);
    CHECK(s.switch_linear == (s.linear_pos == 0.0));
    CHECK(s.switch_tilt == (s.tilt_pos == 0.0));
  }
}

TEST_CASE("lights acknowledge changes and are idempotent") {
  Lights l;
  auto a = l.set(true);
  CHECK(a.on);
  CHECK(a.changed);
  auto b = l.set(true);
  CHECK(b.on);
  CHECK(!b.changed);
  auto c = l.set(false);
  CHECK(!c.on);
  CHECK(c.changed);
}

TEST_CASE("firmware: chassis twist reaches the wheels through the loops") {
  Firmware fw(FirmwareConfig{}, DeviceState::at(0, 0, DevicePhase::Unhomed));
  for (int k = 0; k < 50; ++k) fw.tick({0.5, 0.0, 0.0}, 0.02);
  const auto snap = fw.snapshot();
  CHECK(snap.achieved.vx == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(snap.device.phase == DevicePhase::Ready);
  CHECK_NOTHROW(fw.command_device(DeviceTarget::Deploy));
  CHECK_THROWS_AS(fw.command_device(DeviceTarget::Retract), BusyError);
}
