#include "marvin/taskmgr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace marvin::task {

std::string PoiRegistry::normalize(std::string_view name) {
  const auto first = name.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = name.find_last_not_of(" \t\r\n");
  std::string out(name.substr(first, last - first + 1));
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

void PoiRegistry::add(std::string_view name, const kin::Pose2D& pose) {
  std::string key = normalize(name);
  if (key.empty()) throw std::invalid_argument("empty POI name");
  if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || !std::isfinite(pose.yaw)) {
    throw std::invalid_argument("POI '" + key + "' has a non-finite pose");
  }
  if (!pois_.emplace(key, pose).second) throw std::invalid_argument("duplicate POI '" + key + "'");
}

std::optional<kin::Pose2D> PoiRegistry::find(std::string_view name) const {
  auto it = pois_.find(normalize(name));
  if (it == pois_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> PoiRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : pois_) out.push_back(k);
  return out;
}

void PoiRegistry::validate() const {
  if (!pois_.contains("dock")) throw std::invalid_argument("POI registry has no 'dock' entry");
}

PoiRegistry PoiRegistry::from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("POI file: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("POI file must be a JSON object");
  PoiRegistry reg;
  for (const auto& [name, v] : j.items()) {
    if (!v.is_object() || !v.contains("x") || !v.contains("y")) {
      throw std::invalid_argument("POI '" + name + "' needs numeric x and y");
    }
    reg.add(name, {v.at("x").get<double>(), v.at("y").get<double>(), v.value("yaw", 0.0)});
  }
  reg.validate();
  return reg;
}

PoiRegistry PoiRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open POI file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::Running: return "running";
    case Phase::AwaitHelpConfirm: return "await_help_confirm";
  }
  return "idle";
}

namespace {

std::string task_label(const msg::ActionRequest& r) {
  std::string s(msg::to_string(r.kind));
  if (!r.poi.empty()) s += ":" + r.poi;
  return s;
}

// Undo whatever the active task set up.
void abort_active(const msg::ActionRequest& active, std::vector<Effect>& fx) {
  fx.emplace_back(EventEffect{"Abort", task_label(active)});
  if (active.kind == msg::ActionKind::Follow) {
    fx.emplace_back(FollowEffect{false});
  } else {
    fx.emplace_back(CancelNavigation{});
  }
  if (active.kind == msg::ActionKind::NightAssist) fx.emplace_back(LightsEffect{false});
}

void dispatch_help(std::string_view via, std::vector<Effect>& fx) {
  fx.emplace_back(EventEffect{"HelpDispatched", std::string(via)});
  fx.emplace_back(RespondEffect{"Help has been called."});
}

}  // namespace

std::string acknowledgment(const msg::ActionRequest& r) {
  switch (r.kind) {
    case msg::ActionKind::NavigateTo: return "Going to the " + r.poi + ".";
    case msg::ActionKind::Follow: return "I will follow you.";
    case msg::ActionKind::GoAway: return "Going back to the dock.";
    case msg::ActionKind::NightAssist: return "Lights on, heading to the " + r.poi + ".";
    case msg::ActionKind::HelpRequest: return "Do you want me to call for help?";
    case msg::ActionKind::Stop: return "Stopping.";
  }
  return {};
}

Outcome handle_action(const TaskState& state, const msg::ActionRequest& request, double now,
                      const PoiRegistry& pois, const TaskConfig& config) {
  using msg::ActionKind;
  Outcome out{state, {}};
  auto& fx = out.effects;

  if (request.kind == ActionKind::HelpRequest) {
    HelpTrigger trigger = HelpTrigger::Manual;
    if (request.source == msg::ActionSource::Vocal) trigger = HelpTrigger::Vocal;
    if (request.source == msg::ActionSource::Monitor) trigger = HelpTrigger::Monitor;
    return help_request_flow(state, trigger, HelpReplyKind::None, now, config);
  }

  if (request.kind == ActionKind::Stop) {
    if (state.help_deadline) fx.emplace_back(EventEffect{"HelpCancelled", "stop"});
    if (state.active) abort_active(*state.active, fx);
    fx.emplace_back(EventEffect{"Stopped", std::string(msg::to_string(request.source))});
    fx.emplace_back(RespondEffect{acknowledgment(request)});
    out.state = {};
    return out;
  }

  std::optional<kin::Pose2D> target;
  std::string poi = PoiRegistry::normalize(request.poi);
  if (request.kind == ActionKind::GoAway) poi = "dock";
  if (msg::needs_poi(request.kind) || request.kind == ActionKind::GoAway) {
    target = pois.find(poi);
    if (!target) {
      fx.emplace_back(EventEffect{"NotUnderstood", "unknown place '" + poi + "'"});
      fx.emplace_back(RespondEffect{"I don't know where the " + poi + " is."});
      return out;
    }
  }

  msg::ActionRequest accepted = request;
  if (msg::needs_poi(request.kind)) accepted.poi = poi;
  if (state.active) abort_active(*state.active, fx);
  fx.emplace_back(EventEffect{"Activate", task_label(accepted)});
  fx.emplace_back(RespondEffect{acknowledgment(accepted)});
  switch (accepted.kind) {
    case ActionKind::Follow:
      fx.emplace_back(FollowEffect{true});
      break;
    case ActionKind::NightAssist:
      fx.emplace_back(LightsEffect{true});
      fx.emplace_back(GoalEffect{*target, config.night_speed_cap, poi});
      break;
    default:
      fx.emplace_back(GoalEffect{*target, config.speed_cap, poi});
      break;
  }
  out.state.active = accepted;
  return out;
}

Outcome help_request_flow(const TaskState& state, std::optional<HelpTrigger> trigger, HelpReplyKind reply,
                          double now, const TaskConfig& config) {
  Outcome out{state, {}};
  auto& fx = out.effects;
  if (trigger) {
    if (*trigger == HelpTrigger::Vocal) {
      // A repeated vocal request while waiting keeps the original deadline.
      if (!state.help_deadline) {
        out.state.help_deadline = now + config.help_timeout;
        fx.emplace_back(EventEffect{"HelpPrompt", "vocal"});
        fx.emplace_back(RespondEffect{"Do you want me to call for help?"});
      }
    } else {
      out.state.help_deadline.reset();
      dispatch_help(*trigger == HelpTrigger::Monitor ? "monitor" : "manual", fx);
      return out;
    }
  }
  if (!out.state.help_deadline) return out;
  if (reply == HelpReplyKind::Confirm) {
    out.state.help_deadline.reset();
    dispatch_help("confirmed", fx);
  } else if (reply == HelpReplyKind::Deny) {
    out.state.help_deadline.reset();
    fx.emplace_back(EventEffect{"HelpCancelled", "denied"});
    fx.emplace_back(RespondEffect{"Okay, no call."});
  } else if (now >= *out.state.help_deadline) {
    out.state.help_deadline.reset();
    dispatch_help("timeout", fx);
  }
  return out;
}

Outcome on_navigation_result(const TaskState& state, NavResult result, double) {
  Outcome out{state, {}};
  if (!state.active) return out;
  const auto& active = *state.active;
  auto& fx = out.effects;
  const bool is_follow = active.kind == msg::ActionKind::Follow;
  switch (result) {
    case NavResult::GoalReached:
      if (is_follow) return out;
      fx.emplace_back(EventEffect{"Complete", task_label(active)});
      if (active.kind == msg::ActionKind::NightAssist) fx.emplace_back(LightsEffect{false});
      break;
    case NavResult::SearchTimeout:
      if (!is_follow) return out;
      fx.emplace_back(EventEffect{"SearchTimeout", task_label(active)});
      fx.emplace_back(FollowEffect{false});
      fx.emplace_back(RespondEffect{"I lost sight of you."});
      break;
    case NavResult::NoPath:
      if (is_follow) return out;
      fx.emplace_back(EventEffect{"NoPath", task_label(active)});
      if (active.kind == msg::ActionKind::NightAssist) fx.emplace_back(LightsEffect{false});
      fx.emplace_back(RespondEffect{"I cannot find a way there."});
      break;
  }
  out.state.active.reset();
  return out;
}

}  // namespace marvin::task
