#pragma once

#include <filesystem>
#include <optional>
#include <string_view>

#include "marvin/bus.hpp"
#include "marvin/lowlayer.hpp"
#include "marvin/nav.hpp"
#include "marvin/perception.hpp"
#include "marvin/taskmgr.hpp"
#include "marvin/vocal.hpp"
#include "marvin/worldsim.hpp"

namespace marvin {

/// Global configuration. Every field has a default; a JSON file may override any subset.
struct Config {
  low::FirmwareConfig firmware;
  sim::BodyLimits body;
  sim::LidarSpec lidar;
  perc::CameraModel camera = perc::CameraModel::standard();
  double detection_noise = 2.0;  // px
  perc::ClassifierParams classifier;
  perc::SortParams sort;
  perc::FallMonitorParams fall;
  nav::PersonFollowParams person_follow;
  double inflation_radius = 0.36;
  nav::MapperParams mapper;
  task::TaskConfig task;
  vocal::PipelineParams vocal;
  bus::ArbitrationConfig arbitration;
  double tick = 0.02;
  double perception_period = 0.1;
  double telemetry_period = 0.02;
  double map_publish_period = 1.0;

  nav::FollowParams& follow() { return person_follow.follow; }
  const nav::FollowParams& follow() const { return person_follow.follow; }
  /// Cross-field checks; throws std::invalid_argument.
  void validate() const;
};

inline constexpr std::string_view kConfigEnv = "MARVIN_CONFIG";

Config config_from_json_text(std::string_view text, Config base = {});
Config load_config(const std::filesystem::path& path, Config base = {});
/// Defaults, overridden by the file named in MARVIN_CONFIG when set.
Config config_from_env();

}  // namespace marvin
