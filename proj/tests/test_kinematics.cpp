#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "marvin/kinematics.hpp"
#include "support.hpp"

using namespace marvin::kin;

namespace {

const ChassisParams P{};  // r 0.05, l = w = 0.15, 30 rad/s

// Textbook mecanum forward matrix written out independently of the library.
Twist2D forward_oracle(const ChassisParams& p, const WheelSpeeds& w) {
  const double k = p.wheel_radius / 4.0;
  return {k * (w.fl + w.fr + w.rr + w.rl), k * (-w.fl + w.fr - w.rr + w.rl),
          k * (-w.fl + w.fr + w.rr - w.rl) / p.lever()};
}

void check_close(const Twist2D& a, const Twist2D& b, double tol = 1e-12) {
  CHECK(a.vx == doctest::Approx(b.vx).epsilon(tol));
  CHECK(a.vy == doctest::Approx(b.vy).epsilon(tol));
  CHECK(a.yaw_rate == doctest::Approx(b.yaw_rate).epsilon(tol));
}

}  // namespace

TEST_CASE("forward kinematics on the reference wheel patterns") {
  check_close(forward_kinematics(P, {0, 0, 0, 0}), {0, 0, 0});
  check_close(forward_kinematics(P, {10, 10, 10, 10}), {0.5, 0, 0});
  check_close(forward_kinematics(P, {-10, 10, -10, 10}), {0, 0.5, 0});
  check_close(forward_kinematics(P, {-10, 10, 10, -10}), {0, 0, 0.5 / 0.3});
}

TEST_CASE("forward kinematics agrees with the written-out matrix") {
  test::Gen g(11);
  for (int i = 0; i < 200; ++i) {
    const WheelSpeeds w{g.uniform(-30, 30), g.uniform(-30, 30), g.uniform(-30, 30), g.uniform(-30, 30)};
    check_close(forward_kinematics(P, w), forward_oracle(P, w), 1e-12);
  }
}

TEST_CASE("inverse kinematics reference values") {
  CHECK(inverse_kinematics(P, {0, 0, 0}) == WheelSpeeds{0, 0, 0, 0});
  const auto fwd = inverse_kinematics(P, {0.5, 0, 0});
  CHECK(fwd.fl == doctest::Approx(10));
  CHECK(fwd.fr == doctest::Approx(10));
  CHECK(fwd.rr == doctest::Approx(10));
  CHECK(fwd.rl == doctest::Approx(10));
  const auto side = inverse_kinematics(P, {0, 0.5, 0});
  CHECK(side.fl == doctest::Approx(-10));
  CHECK(side.fr == doctest::Approx(10));
  CHECK(side.rr == doctest::Approx(-10));
  CHECK(side.rl == doctest::Approx(10));
}

TEST_CASE("forward of inverse is the identity on random twists") {
  test::Gen g(12);
  for (int i = 0; i < 1000; ++i) {
    const Twist2D t = g.twist();
    const Twist2D back = forward_kinematics(P, inverse_kinematics(P, t));
    const double scale = std::max({1.0, std::abs(t.vx), std::abs(t.vy), std::abs(t.yaw_rate)});
    CHECK(std::abs(back.vx - t.vx) <= 1e-9 * scale);
    CHECK(std::abs(back.vy - t.vy) <= 1e-9 * scale);
    CHECK(std::abs(back.yaw_rate - t.yaw_rate) <= 1e-9 * scale);
  }
}

TEST_CASE("mobility patterns give pure motions exactly") {
  test::Gen g(13);
  for (int i = 0; i < 200; ++i) {
    const double w = g.uniform(-30, 30);
    const Twist2D straight = forward_kinematics(P, {w, w, w, w});
    CHECK(straight.vy == 0.0);
    CHECK(straight.yaw_rate == 0.0);
    const Twist2D spin = forward_kinematics(P, {-w, w, w, -w});
    CHECK(spin.vx == 0.0);
    CHECK(spin.vy == 0.0);
    const Twist2D lateral = forward_kinematics(P, {-w, w, -w, w});
    CHECK(lateral.vx == 0.0);
    CHECK(lateral.yaw_rate == 0.0);
  }
}

TEST_CASE("non-finite inputs are rejected") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward_kinematics(P, {nan, 0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(inverse_kinematics(P, {0, std::numeric_limits<double>::infinity(), 0}), std::invalid_argument);
  ChassisParams bad = P;
  bad.semi_l = 0.0;
  bad.semi_w = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("octahedron clamp reference cases") {
  auto same = [](const Twist2D& a, const Twist2D& b) { check_close(a, b, 1e-12); };
  same(clamp_to_octahedron(P, {0.5, 0, 0}), {0.5, 0, 0});
  same(clamp_to_octahedron(P, {1.5, 1.5, 0}), {0.75, 0.75, 0});
  same(clamp_to_octahedron(P, {1.0, 0, 2.0}), {0.9, 0, 2.0});
  same(clamp_to_octahedron(P, {0, 0, 10}), {0, 0, 5.0});
  same(clamp_to_octahedron(P, {1, -1, -10}), {0, 0, -5.0});
}

TEST_CASE("octahedron clamp properties on random twists") {
  test::Gen g(14);
  for (int i = 0; i < 10000; ++i) {
    const Twist2D t = g.twist();
    const Twist2D c = clamp_to_octahedron(P, t);
    CHECK(inverse_kinematics(P, c).max_abs() <= P.wheel_speed_max * (1 + 1e-9));
    CHECK(clamp_to_octahedron(P, c) == c);
    if (P.lever() * std::abs(t.yaw_rate) <= P.budget()) {
      CHECK(c.yaw_rate == t.yaw_rate);
    }
    // Translation keeps its direction: c = s * t with s in [0, 1].
    CHECK(c.vx * t.vy == doctest::Approx(c.vy * t.vx).epsilon(1e-9).scale(1e-12));
    CHECK(c.vx * t.vx >= 0.0);
    CHECK(c.vy * t.vy >= 0.0);
    CHECK(std::abs(c.vx) <= std::abs(t.vx));
    CHECK(std::abs(c.vy) <= std::abs(t.vy));
  }
}

TEST_CASE("odometry reference cases") {
  const Pose2D a = integrate_odometry({0, 0, 0}, {1, 0, 0}, 0.1);
  CHECK(a.x == doctest::Approx(0.1));
  CHECK(a.y == doctest::Approx(0.0));
  const Pose2D b = integrate_odometry({0, 0, std::numbers::pi / 2}, {1, 0, 0}, 0.1);
  CHECK(b.x == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  CHECK(b.y == doctest::Approx(0.1));
  CHECK(b.yaw == doctest::Approx(std::numbers::pi / 2));
  const Pose2D c = integrate_odometry({0, 0, 0}, {0, 0, 1}, 0.5);
  CHECK(c.x == 0.0);
  CHECK(c.y == 0.0);
  CHECK(c.yaw == doctest::Approx(0.5));
  CHECK_THROWS_AS(integrate_odometry({}, {1, 0, 0}, 0.0), std::invalid_argument);
}

TEST_CASE("odometry: a full circle returns to the start") {
  // Radius v / w; after 2*pi / w seconds the screw motion closes.
  const Pose2D end = integrate_odometry({1, 2, 0.3}, {0.5, 0.2, 1.0}, 2 * std::numbers::pi);
  CHECK(end.x == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(end.y == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(end.yaw == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("odometry: n steps of dt equal one step of n*dt") {
  test::Gen g(15);
  for (int i = 0; i < 200; ++i) {
    const Twist2D t{g.uniform(-1, 1), g.uniform(-1, 1), g.uniform(-3, 3)};
    const Pose2D start{g.uniform(-5, 5), g.uniform(-5, 5), g.uniform(-3, 3)};
    const int n = g.integer(2, 50);
    const double dt = g.uniform(0.001, 0.05);
    Pose2D stepped = start;
    for (int k = 0; k < n; ++k) stepped = integrate_odometry(stepped, t, dt);
    const Pose2D once = integrate_odometry(start, t, n * dt);
    CHECK(std::abs(stepped.x - once.x) <= 1e-9);
    CHECK(std::abs(stepped.y - once.y) <= 1e-9);
    CHECK(std::abs(wrap_angle(stepped.yaw - once.yaw)) <= 1e-9);
  }
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
  test::Gen g(16);
  for (int i = 0; i < 1000; ++i) {
    const double w = wrap_angle(g.uniform(-100, 100));
    CHECK(w > -std::numbers::pi);
    CHECK(w <= std::numbers::pi);
  }
}
