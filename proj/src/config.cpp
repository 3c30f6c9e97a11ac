#include "marvin/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace marvin {

namespace {

using nlohmann::json;

// Copies j[key] into out when present. Unknown keys are reported by check_keys.
template <class T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument("config key '" + std::string(key) + "': " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<std::string_view> known, std::string_view section) {
  if (!j.is_object()) throw std::invalid_argument("config section '" + std::string(section) + "' must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw std::invalid_argument("unknown config key '" + std::string(section) + "." + k + "'");
    }
  }
}

void read_axis(const json& j, low::AxisSpec& a, std::string_view name) {
  check_keys(j, {"steps_per_rev", "microstep_factor", "screw_pitch_mm", "stroke", "homing_speed", "operational_speed"},
             name);
  take(j, "steps_per_rev", a.steps_per_rev);
  take(j, "microstep_factor", a.microstep_factor);
  take(j, "screw_pitch_mm", a.screw_pitch_mm);
  take(j, "stroke", a.stroke);
  take(j, "homing_speed", a.homing_speed);
  take(j, "operational_speed", a.operational_speed);
}

}  // namespace

void Config::validate() const {
  firmware.chassis.validate();
  firmware.gains.validate();
  firmware.device.linear.validate();
  firmware.device.tilt.validate();
  camera.validate();
  if (!(tick > 0.0) || !(firmware.control_dt > 0.0) || firmware.control_dt > tick) {
    throw std::invalid_argument("tick and control_dt must be positive with control_dt <= tick");
  }
  if (!(perception_period >= tick)) throw std::invalid_argument("perception period shorter than the tick");
  if (!(telemetry_period >= tick)) throw std::invalid_argument("telemetry period shorter than the tick");
  if (!(inflation_radius > 0.0)) throw std::invalid_argument("inflation radius must be > 0");
  if (lidar.beams <= 0 || !(lidar.max_range > 0.0) || lidar.noise_sigma < 0.0) {
    throw std::invalid_argument("invalid lidar spec");
  }
  if (!(body.a_max > 0.0) || !(body.v_max > 0.0)) throw std::invalid_argument("invalid body limits");
}

Config config_from_json_text(std::string_view text, Config c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  check_keys(j, {"chassis", "pid", "plant", "device", "body", "lidar", "camera", "perception", "nav", "task", "vocal",
                 "arbitration", "sim"},
             "config");
  if (j.contains("chassis")) {
    const auto& s = j["chassis"];
    check_keys(s, {"wheel_radius", "semi_l", "semi_w", "wheel_speed_max"}, "chassis");
    auto& ch = c.firmware.chassis;
    take(s, "wheel_radius", ch.wheel_radius);
    take(s, "semi_l", ch.semi_l);
    take(s, "semi_w", ch.semi_w);
    take(s, "wheel_speed_max", ch.wheel_speed_max);
  }
  c.follow().chassis = c.firmware.chassis;
  if (j.contains("pid")) {
    const auto& s = j["pid"];
    check_keys(s, {"kp", "ki", "kd", "integral_limit", "output_limit"}, "pid");
    auto& g = c.firmware.gains;
    take(s, "kp", g.kp);
    take(s, "ki", g.ki);
    take(s, "kd", g.kd);
    take(s, "integral_limit", g.integral_limit);
    take(s, "output_limit", g.output_limit);
  }
  if (j.contains("plant")) {
    const auto& s = j["plant"];
    check_keys(s, {"time_constant", "gain", "control_dt"}, "plant");
    take(s, "time_constant", c.firmware.plant_time_constant);
    take(s, "gain", c.firmware.plant_gain);
    take(s, "control_dt", c.firmware.control_dt);
  }
  if (j.contains("device")) {
    const auto& s = j["device"];
    check_keys(s, {"linear", "tilt"}, "device");
    if (s.contains("linear")) read_axis(s["linear"], c.firmware.device.linear, "device.linear");
    if (s.contains("tilt")) read_axis(s["tilt"], c.firmware.device.tilt, "device.tilt");
  }
  if (j.contains("body")) {
    const auto& s = j["body"];
    check_keys(s, {"v_max", "a_max", "yaw_rate_max", "yaw_accel_max", "length", "width"}, "body");
    take(s, "v_max", c.body.v_max);
    take(s, "a_max", c.body.a_max);
    take(s, "yaw_rate_max", c.body.yaw_rate_max);
    take(s, "yaw_accel_max", c.body.yaw_accel_max);
    take(s, "length", c.body.length);
    take(s, "width", c.body.width);
  }
  if (j.contains("lidar")) {
    const auto& s = j["lidar"];
    check_keys(s, {"beams", "max_range", "noise_sigma"}, "lidar");
    take(s, "beams", c.lidar.beams);
    take(s, "max_range", c.lidar.max_range);
    take(s, "noise_sigma", c.lidar.noise_sigma);
  }
  if (j.contains("camera")) {
    const auto& s = j["camera"];
    check_keys(s, {"hfov_deg", "width", "height", "max_depth", "mount_x", "mount_height", "pitch_deg"}, "camera");
    auto& cam = c.camera;
    double deg = 0.0;
    if (s.contains("hfov_deg")) {
      take(s, "hfov_deg", deg);
      cam.hfov = deg * std::numbers::pi / 180.0;
    }
    take(s, "width", cam.width);
    take(s, "height", cam.height);
    take(s, "max_depth", cam.max_depth);
    take(s, "mount_x", cam.mount_x);
    take(s, "mount_height", cam.mount_height);
    if (s.contains("pitch_deg")) {
      take(s, "pitch_deg", deg);
      cam.pitch = deg * std::numbers::pi / 180.0;
    }
    cam.cx = 0.5 * cam.width;
    cam.cy = 0.5 * cam.height;
    cam.fx = cam.fy = 0.0;
    cam.fx = cam.fy = cam.focal_x();
  }
  if (j.contains("perception")) {
    const auto& s = j["perception"];
    check_keys(s, {"detection_noise", "iou_threshold", "max_age", "min_hits", "upright_deg", "laying_deg",
                   "sit_gap_ratio", "fall_window", "fall_fraction", "period"},
               "perception");
    take(s, "detection_noise", c.detection_noise);
    take(s, "iou_threshold", c.sort.iou_threshold);
    take(s, "max_age", c.sort.max_age);
    take(s, "min_hits", c.sort.min_hits);
    take(s, "upright_deg", c.classifier.upright_deg);
    take(s, "laying_deg", c.classifier.laying_deg);
    take(s, "sit_gap_ratio", c.classifier.sit_gap_ratio);
    take(s, "fall_window", c.fall.window);
    take(s, "fall_fraction", c.fall.laying_fraction);
    take(s, "period", c.perception_period);
  }
  if (j.contains("nav")) {
    const auto& s = j["nav"];
    check_keys(s, {"lookahead", "v_max", "decel", "goal_tolerance", "heading_tolerance", "heading_gain",
                   "yaw_rate_max", "clearance", "standoff", "goal_timeout", "search_timeout", "replan_period",
                   "target_search_radius", "inflation_radius"},
               "nav");
    auto& f = c.follow();
    take(s, "lookahead", f.lookahead);
    take(s, "v_max", f.v_max);
    take(s, "decel", f.decel);
    take(s, "goal_tolerance", f.goal_tolerance);
    take(s, "heading_tolerance", f.heading_tolerance);
    take(s, "heading_gain", f.heading_gain);
    take(s, "yaw_rate_max", f.yaw_rate_max);
    take(s, "clearance", f.clearance);
    take(s, "standoff", c.person_follow.standoff);
    take(s, "goal_timeout", c.person_follow.goal_timeout);
    take(s, "search_timeout", c.person_follow.search_timeout);
    take(s, "replan_period", c.person_follow.replan_period);
    take(s, "target_search_radius", c.person_follow.target_search_radius);
    take(s, "inflation_radius", c.inflation_radius);
  }
  if (j.contains("task")) {
    const auto& s = j["task"];
    check_keys(s, {"help_timeout", "night_speed_cap", "speed_cap"}, "task");
    take(s, "help_timeout", c.task.help_timeout);
    take(s, "night_speed_cap", c.task.night_speed_cap);
    take(s, "speed_cap", c.task.speed_cap);
  }
  if (j.contains("vocal")) {
    const auto& s = j["vocal"];
    check_keys(s, {"energy_threshold", "hold", "max_utterance", "match_threshold"}, "vocal");
    take(s, "energy_threshold", c.vocal.energy_threshold);
    take(s, "hold", c.vocal.hold);
    take(s, "max_utterance", c.vocal.max_utterance);
    take(s, "match_threshold", c.vocal.match.threshold);
  }
  if (j.contains("arbitration")) {
    const auto& s = j["arbitration"];
    check_keys(s, {"manual_timeout", "autonomous_timeout"}, "arbitration");
    take(s, "manual_timeout", c.arbitration.manual_timeout);
    take(s, "autonomous_timeout", c.arbitration.autonomous_timeout);
  }
  if (j.contains("sim")) {
    const auto& s = j["sim"];
    check_keys(s, {"tick", "telemetry_period", "map_publish_period"}, "sim");
    take(s, "tick", c.tick);
    take(s, "telemetry_period", c.telemetry_period);
    take(s, "map_publish_period", c.map_publish_period);
  }
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str(), base);
}

Config config_from_env() {
  const char* p = std::getenv(std::string(kConfigEnv).c_str());
  if (p == nullptr || *p == '\0') return {};
  return load_config(p);
}

}  // namespace marvin
