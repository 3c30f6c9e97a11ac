#include "marvin/stack.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "marvin/errors.hpp"

namespace marvin {

namespace {

constexpr std::string_view kSerial = "serial";
constexpr std::string_view kTaskMgr = "taskmgr";
constexpr std::string_view kVocal = "vocal";
constexpr std::string_view kPerception = "perception";
constexpr std::string_view kNav = "nav";
constexpr std::string_view kSim = "sim";
// NavGoal label that switches the nav node into person following.
constexpr std::string_view kFollowLabel = "follow";

std::uint64_t ticks_for(double period, double tick) {
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(period / tick)));
}

sim::Rng stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt)};
  return sim::Rng(seq);
}

}  // namespace

Stack::Stack(StackSetup setup)
    : cfg_(std::move(setup.config)),
      bus_(bus::Bus::with_default_topics()),
      world_(std::move(setup.world)),
      pois_(std::move(setup.pois)),
      catalogue_(std::move(setup.catalogue)),
      lidar_rng_(stream(setup.seed, 1)),
      camera_rng_(stream(setup.seed, 2)),
      firmware_(cfg_.firmware, setup.device),
      estop_(bus_, std::string(kSerial)),
      fall_(cfg_.fall),
      follower_(cfg_.person_follow) {
  cfg_.validate();
  cfg_.follow().chassis = cfg_.firmware.chassis;
  world_.robot.limits = cfg_.body;
  perception_every_ = ticks_for(cfg_.perception_period, cfg_.tick);
  telemetry_every_ = ticks_for(cfg_.telemetry_period, cfg_.tick);
  map_every_ = ticks_for(cfg_.map_publish_period, cfg_.tick);
  if (catalogue_) vocal_.emplace(*catalogue_, cfg_.vocal);
  if (setup.mapping) mapper_.emplace(world_.grid.geometry, cfg_.mapper);
  if (setup.keep_log) log_ = bus_->subscribe(bus::Bus::kAllTopics, 0);

  namespace t = bus::topic;
  sub_manual_ = bus_->subscribe(t::kCmdVelManual, 0);
  sub_auto_ = bus_->subscribe(t::kCmdVelAuto, 0);
  sub_estop_ = bus_->subscribe(t::kEstop, 0);
  sub_device_ = bus_->subscribe(t::kDevice, 0);
  sub_lights_ = bus_->subscribe(t::kLights, 0);
  sub_actions_ = bus_->subscribe(t::kActions, 0);
  sub_help_ = bus_->subscribe(t::kHelpReply, 0);
  sub_events_ = bus_->subscribe(t::kEvents, 0);
  sub_utter_ = bus_->subscribe(t::kUtterance, 0);
  sub_utter_text_ = bus_->subscribe(t::kUtteranceText, 0);
  sub_trigger_ = bus_->subscribe(t::kTriggerWord, 0);
  sub_goal_ = bus_->subscribe(t::kGoal, 0);
  sub_person_ = bus_->subscribe(t::kPersonGoal, 0);
  sub_scan_ = bus_->subscribe(t::kScan, 0);

  telemetry_.pose = world_.robot.pose;
  telemetry_.task_phase = std::string(task::to_string(task_.phase()));
}

std::vector<bus::Envelope> Stack::drain_log() {
  if (!log_) return {};
  return log_->drain();
}

bool Stack::perception_tick() const { return ticks_ % perception_every_ == 0; }

void Stack::tick() {
  bus_->set_time(time());
  vocal_node();
  task_node();
  if (perception_tick()) perception_node();
  nav_node();
  serial_node();
  world_node();
  telemetry_node();
  ++ticks_;
}

// --- vocal ---------------------------------------------------------------------------

void Stack::vocal_node() {
  const double now = time();
  for (const auto& e : sub_utter_text_->drain()) {
    for (auto f : vocal::frames_for_text(e.as<msg::UtteranceText>().text, now)) frames_.push_back(std::move(f));
  }
  for (const auto& e : sub_utter_->drain()) {
    auto f = e.as<msg::UtteranceFrame>();
    f.stamp = std::max(f.stamp, now);
    frames_.push_back(std::move(f));
  }
  std::stable_sort(frames_.begin(), frames_.end(), [](const auto& a, const auto& b) { return a.stamp < b.stamp; });
  for (const auto& e : sub_trigger_->drain()) {
    const auto& word = e.as<msg::TriggerWord>().word;
    if (!vocal_) continue;
    try {
      vocal_->set_trigger(word);
      bus_->publish(kVocal, bus::topic::kEvents, msg::TaskEvent{"TriggerChanged", vocal::normalize_text(word)});
    } catch (const std::invalid_argument& ex) {
      bus_->publish(kVocal, bus::topic::kEvents, msg::TaskEvent{"TriggerRejected", ex.what()});
    }
  }
  if (!vocal_) {
    frames_.clear();
    return;
  }

  auto run = [&](const msg::UtteranceFrame& f) {
    last_frame_ = f.stamp;
    const auto out = vocal_->process(f);
    for (const auto& ev : out.events) bus_->publish(kVocal, bus::topic::kEvents, msg::TaskEvent{ev.kind, ev.detail});
    if (out.command) {
      if (const auto* a = std::get_if<msg::ActionRequest>(&*out.command)) {
        bus_->publish(kVocal, bus::topic::kActions, *a);
      } else {
        bus_->publish(kVocal, bus::topic::kHelpReply, std::get<msg::HelpReply>(*out.command));
      }
    }
    if (out.response && !out.command) bus_->publish(kVocal, bus::topic::kResponse, msg::VocalResponse{*out.response});
  };
  while (!frames_.empty() && frames_.front().stamp <= now + 1e-9) {
    run(frames_.front());
    frames_.pop_front();
  }
  // The microphone keeps delivering quiet frames; endpointing needs them while capturing.
  if (perception_tick() && vocal_->state().phase == vocal::Phase::Capturing &&
      now - last_frame_ >= cfg_.perception_period - 1e-9) {
    run({now, 0.0, std::nullopt});
  }
}

// --- task manager --------------------------------------------------------------------

void Stack::apply(const task::Outcome& outcome) {
  task_ = outcome.state;
  for (const auto& fx : outcome.effects) {
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, task::GoalEffect>) {
            bus_->publish(kTaskMgr, bus::topic::kGoal, msg::NavGoal{e.pose, e.speed_cap, e.label, false});
          } else if constexpr (std::is_same_v<T, task::CancelNavigation>) {
            bus_->publish(kTaskMgr, bus::topic::kGoal, msg::NavGoal{{}, 0.0, "", true});
          } else if constexpr (std::is_same_v<T, task::FollowEffect>) {
            bus_->publish(kTaskMgr, bus::topic::kGoal,
                          msg::NavGoal{{}, cfg_.follow().v_max, std::string(kFollowLabel), !e.enable});
          } else if constexpr (std::is_same_v<T, task::LightsEffect>) {
            bus_->publish(kTaskMgr, bus::topic::kLights, msg::LightsCommand{e.on});
          } else if constexpr (std::is_same_v<T, task::EventEffect>) {
            bus_->publish(kTaskMgr, bus::topic::kEvents, msg::TaskEvent{e.kind, e.detail});
          } else if constexpr (std::is_same_v<T, task::RespondEffect>) {
            bus_->publish(kTaskMgr, bus::topic::kResponse, msg::VocalResponse{e.text});
          }
        },
        fx);
  }
}

void Stack::task_node() {
  const double now = time();
  for (const auto& e : sub_events_->drain()) {
    if (e.publisher != kNav) continue;
    const auto& ev = e.as<msg::TaskEvent>();
    if (ev.kind == "GoalReached") {
      apply(task::on_navigation_result(task_, task::NavResult::GoalReached, now));
    } else if (ev.kind == "NoPath") {
      apply(task::on_navigation_result(task_, task::NavResult::NoPath, now));
    } else if (ev.kind == "SearchTimeout") {
      apply(task::on_navigation_result(task_, task::NavResult::SearchTimeout, now));
    }
  }
  for (const auto& e : sub_actions_->drain()) {
    apply(task::handle_action(task_, e.as<msg::ActionRequest>(), now, pois_, cfg_.task));
  }
  for (const auto& e : sub_help_->drain()) {
    const auto reply = e.as<msg::HelpReply>().answer == msg::HelpAnswer::Confirm ? task::HelpReplyKind::Confirm
                                                                                 : task::HelpReplyKind::Deny;
    apply(task::help_request_flow(task_, std::nullopt, reply, now, cfg_.task));
  }
  apply(task::help_request_flow(task_, std::nullopt, task::HelpReplyKind::None, now, cfg_.task));
}

// --- perception ----------------------------------------------------------------------

void Stack::perception_node() {
  const double now = time();
  const auto& robot = world_.robot.pose;
  sim::LidarScan scan = sim::raycast_lidar(world_.grid, world_.people, robot, cfg_.lidar,
                                           cfg_.lidar.noise_sigma > 0.0 ? &lidar_rng_ : nullptr);
  scan.stamp = now;
  bus_->publish(kPerception, bus::topic::kScan, scan);
  if (mapper_) nav::mapper_update(*mapper_, robot, scan);

  const auto device = firmware_.snapshot().device;
  const auto detections = perc::synth_detect(world_, cfg_.camera, device, cfg_.detection_noise, camera_rng_);
  std::vector<perc::Box> boxes;
  std::vector<perc::PoseClass> classes;
  for (const auto& d : detections) {
    boxes.push_back(d.box);
    classes.push_back(perc::classify_pose(d.keypoints, cfg_.classifier));
  }
  perc::sort_update(tracker_, boxes, cfg_.sort, classes);
  const auto target = perc::select_target(tracker_.tracks, cfg_.sort);

  msg::TrackList list;
  list.target = target;
  for (const auto& t : tracker_.tracks) {
    list.tracks.push_back({t.id, t.box(), std::string(perc::to_string(t.pose_class)), t.confirmed(cfg_.sort)});
  }
  bus_->publish(kPerception, bus::topic::kTracks, list);
  if (!target) return;

  const auto it = std::find_if(tracker_.tracks.begin(), tracker_.tracks.end(),
                               [&](const perc::Track& t) { return t.id == *target; });
  if (!it->detection) return;
  const auto& det = detections[*it->detection];
  try {
    const auto g = perc::project_goal(det.keypoints, det.torso_depth, cfg_.camera, device, now);
    const double c = std::cos(robot.yaw), s = std::sin(robot.yaw);
    bus_->publish(kPerception, bus::topic::kPersonGoal,
                  msg::PersonGoalMsg{g.x, g.y, robot.x + c * g.x - s * g.y, robot.y + s * g.x + c * g.y, now, it->id});
  } catch (const NoGoalError&) {
  }
  if (fall_.push(it->pose_class, now)) {
    bus_->publish(kPerception, bus::topic::kEvents, msg::TaskEvent{"FallDetected", "track " + std::to_string(it->id)});
    bus_->publish(kPerception, bus::topic::kActions,
                  msg::ActionRequest{msg::ActionKind::HelpRequest, "", msg::ActionSource::Monitor});
  }
}

// --- navigation ----------------------------------------------------------------------

void Stack::nav_event(std::string kind, std::string detail) {
  bus_->publish(kNav, bus::topic::kEvents, msg::TaskEvent{std::move(kind), std::move(detail)});
}

void Stack::stop_base() {
  bus_->publish(kNav, bus::topic::kCmdVelAuto, msg::VelocityCommand{{}, msg::CommandSource::Autonomous, time()});
}

bool Stack::plan_to_goal() {
  last_plan_ = time();
  try {
    path_ = nav::plan_with_clearance(*costmap_, world_.robot.pose, goal_.pose, cfg_.follow().clearance);
  } catch (const NoPathError&) {
    nav_event("NoPath", goal_.label);
    return false;
  } catch (const std::invalid_argument& e) {
    nav_event("NoPath", goal_.label + ": " + e.what());
    return false;
  }
  msg::PathMsg m{path_->poses, path_->total_cost};
  bus_->publish(kNav, bus::topic::kPath, std::move(m));
  return true;
}

void Stack::nav_node() {
  const double now = time();
  for (const auto& e : sub_scan_->drain()) {
    scan_ = e.as<sim::LidarScan>();
    costmap_stale_ = true;
  }
  if (costmap_stale_ || !costmap_) {
    nav::CostmapConfig cc{world_.grid.geometry, cfg_.inflation_radius};
    if (scan_) {
      costmap_ = nav::build_costmap(*scan_, scan_->pose, cc, &world_.grid);
    } else {
      sim::LidarScan empty;
      empty.max_range = cfg_.lidar.max_range;
      costmap_ = nav::build_costmap(empty, world_.robot.pose, cc, &world_.grid);
    }
    costmap_stale_ = false;
  }
  for (const auto& e : sub_person_->drain()) {
    const auto& g = e.as<msg::PersonGoalMsg>();
    person_ = std::pair{Point2D{g.world_x, g.world_y}, g.stamp};
  }

  bool new_goal = false;
  for (const auto& e : sub_goal_->drain()) {
    const auto& g = e.as<msg::NavGoal>();
    if (g.cancel) {
      if (nav_mode_ != NavMode::Idle) stop_base();
      nav_mode_ = NavMode::Idle;
      path_.reset();
      new_goal = false;
    } else if (g.label == kFollowLabel) {
      nav_mode_ = NavMode::Follow;
      follower_.reset();
      path_.reset();
      new_goal = false;
    } else {
      nav_mode_ = NavMode::Goal;
      goal_ = g;
      new_goal = true;
    }
  }

  const auto& pose = world_.robot.pose;
  if (nav_mode_ == NavMode::Goal) {
    if (new_goal || now - last_plan_ >= cfg_.person_follow.replan_period - 1e-9) {
      if (!plan_to_goal()) {
        nav_mode_ = NavMode::Idle;
        path_.reset();
        stop_base();
        return;
      }
    }
    auto params = cfg_.follow();
    params.v_max = std::min(params.v_max, goal_.speed_cap);
    const auto out = nav::follow_path(path_->poses, pose, params, std::nullopt, goal_.pose.yaw);
    if (out.goal_reached) {
      nav_mode_ = NavMode::Idle;
      path_.reset();
      stop_base();
      nav_event("GoalReached", goal_.label);
      return;
    }
    bus_->publish(kNav, bus::topic::kCmdVelAuto, msg::VelocityCommand{out.twist, msg::CommandSource::Autonomous, now});
  } else if (nav_mode_ == NavMode::Follow) {
    const auto out = follower_.update(person_, pose, costmap_ ? &*costmap_ : nullptr, now);
    if (out.path) bus_->publish(kNav, bus::topic::kPath, msg::PathMsg{out.path->poses, out.path->total_cost});
    if (out.search_timeout) nav_event("SearchTimeout", "person lost");
    bus_->publish(kNav, bus::topic::kCmdVelAuto, msg::VelocityCommand{out.twist, msg::CommandSource::Autonomous, now});
  }
}

// --- serial / low layer --------------------------------------------------------------

void Stack::serial_node() {
  const double now = time();
  for (const auto& e : sub_estop_->drain()) {
    if (e.as<msg::EstopCommand>().latch) {
      estop_.set();
    } else {
      estop_.reset();
    }
  }
  for (const auto& e : sub_manual_->drain()) {
    manual_ = e.as<msg::VelocityCommand>();
    manual_->stamp = e.stamp;
  }
  for (const auto& e : sub_auto_->drain()) {
    autonomous_ = e.as<msg::VelocityCommand>();
    autonomous_->stamp = e.stamp;
  }
  for (const auto& e : sub_device_->drain()) {
    const auto target = e.as<msg::DeviceRequest>().target;
    try {
      firmware_.command_device(target);
      bus_->publish(kSerial, bus::topic::kEvents, msg::TaskEvent{"DeviceCommand", std::string(low::to_string(target))});
    } catch (const std::logic_error& ex) {
      bus_->publish(kSerial, bus::topic::kEvents, msg::TaskEvent{"DeviceBusy", ex.what()});
    }
  }
  for (const auto& e : sub_lights_->drain()) firmware_.set_lights(e.as<msg::LightsCommand>().on);

  const auto& chassis = cfg_.firmware.chassis;
  command_ = kin::clamp_to_octahedron(
      chassis, bus::arbitrate_velocity(manual_, autonomous_, estop_.latched(), now, cfg_.arbitration));
  firmware_.tick(command_, cfg_.tick);
  world_.robot.command = firmware_.snapshot().achieved;
}

void Stack::world_node() {
  for (auto& ev : sim::step(world_, cfg_.tick)) {
    bus_->publish(kSim, bus::topic::kEvents, msg::TaskEvent{std::move(ev.kind), std::move(ev.detail)});
  }
}

void Stack::telemetry_node() {
  const auto snap = firmware_.snapshot();
  telemetry_.pose = world_.robot.pose;
  telemetry_.twist = world_.robot.twist;
  telemetry_.command = command_;
  telemetry_.wheels = snap.wheels;
  telemetry_.wheel_targets = snap.wheel_targets;
  telemetry_.device = snap.device;
  telemetry_.lights = snap.lights;
  telemetry_.estop = estop_.latched();
  telemetry_.task = task_.active ? std::string(msg::to_string(task_.active->kind)) : "";
  telemetry_.task_phase = std::string(task::to_string(task_.phase()));
  if (ticks_ % telemetry_every_ == 0) bus_->publish(kSerial, bus::topic::kTelemetry, telemetry_);
  if (mapper_ && ticks_ % map_every_ == 0) {
    bus_->publish(kNav, bus::topic::kMap, msg::MapMsg{nav::threshold_map(*mapper_)});
  }
}

}  // namespace marvin
