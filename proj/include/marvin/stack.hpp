#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <vector>

#include "marvin/bus.hpp"
#include "marvin/config.hpp"
#include "marvin/nav.hpp"
#include "marvin/perception.hpp"
#include "marvin/taskmgr.hpp"
#include "marvin/vocal.hpp"
#include "marvin/worldsim.hpp"

namespace marvin {

struct StackSetup {
  Config config;
  sim::World world;
  task::PoiRegistry pois;
  std::optional<vocal::IntentCatalogue> catalogue;
  std::uint64_t seed = 0;
  bool mapping = false;
  bool keep_log = false;  // capture every bus envelope for drain_log()
  low::DeviceState device = low::DeviceState::at(0.0, 0.0, low::DevicePhase::Unhomed);
};

/// The whole robot on the simulated home: serial, task manager, vocal,
/// perception, navigation and mapping nodes connected through one bus and
/// stepped in a fixed order every tick. All timing comes from the tick counter.
class Stack {
 public:
  explicit Stack(StackSetup setup);

  /// Advances the simulation by one tick. Messages published on the bus before
  /// the call are consumed during it.
  void tick();

  double time() const { return static_cast<double>(ticks_) * cfg_.tick; }
  std::uint64_t ticks() const { return ticks_; }
  const Config& config() const { return cfg_; }
  bus::Bus& bus() { return *bus_; }
  std::shared_ptr<bus::Bus> bus_ptr() { return bus_; }

  const sim::World& world() const { return world_; }
  const msg::Telemetry& telemetry() const { return telemetry_; }
  const task::TaskState& task_state() const { return task_; }
  const perc::TrackerState& tracker() const { return tracker_; }
  const nav::MapperState* mapper() const { return mapper_ ? &*mapper_ : nullptr; }
  const std::optional<nav::Costmap>& costmap() const { return costmap_; }
  bool estop_latched() const { return estop_.latched(); }
  const task::PoiRegistry& pois() const { return pois_; }

  /// Envelopes captured since the last call (keep_log only).
  std::vector<bus::Envelope> drain_log();

 private:
  enum class NavMode { Idle, Goal, Follow };

  bool perception_tick() const;

  void vocal_node();
  void task_node();
  void apply(const task::Outcome& outcome);
  void perception_node();
  void nav_node();
  void serial_node();
  void world_node();
  void telemetry_node();

  void nav_event(std::string kind, std::string detail);
  void stop_base();
  bool plan_to_goal();

  Config cfg_;
  std::shared_ptr<bus::Bus> bus_;
  sim::World world_;
  task::PoiRegistry pois_;
  std::optional<vocal::IntentCatalogue> catalogue_;
  std::uint64_t ticks_ = 0;
  std::uint64_t perception_every_ = 5;
  std::uint64_t telemetry_every_ = 1;
  std::uint64_t map_every_ = 50;
  sim::Rng lidar_rng_;
  sim::Rng camera_rng_;
  std::shared_ptr<bus::Subscription> log_;

  // serial node
  low::Firmware firmware_;
  bus::EstopLatch estop_;
  std::optional<msg::VelocityCommand> manual_;
  std::optional<msg::VelocityCommand> autonomous_;
  kin::Twist2D command_;
  std::shared_ptr<bus::Subscription> sub_manual_, sub_auto_, sub_estop_, sub_device_, sub_lights_;

  // task manager node
  task::TaskState task_;
  std::shared_ptr<bus::Subscription> sub_actions_, sub_help_, sub_events_;

  // vocal node
  std::optional<vocal::VocalPipeline> vocal_;
  std::deque<msg::UtteranceFrame> frames_;
  double last_frame_ = -1e9;
  std::shared_ptr<bus::Subscription> sub_utter_, sub_utter_text_, sub_trigger_;

  // perception node
  perc::TrackerState tracker_;
  perc::FallMonitor fall_;
  std::optional<sim::LidarScan> scan_;

  // nav node
  NavMode nav_mode_ = NavMode::Idle;
  msg::NavGoal goal_;
  std::optional<nav::PlannedPath> path_;
  double last_plan_ = -1e9;
  nav::PersonFollower follower_;
  std::optional<std::pair<Point2D, double>> person_;
  std::optional<nav::Costmap> costmap_;
  bool costmap_stale_ = true;
  std::shared_ptr<bus::Subscription> sub_goal_, sub_person_, sub_scan_;

  std::optional<nav::MapperState> mapper_;
  msg::Telemetry telemetry_;
};

}  // namespace marvin
