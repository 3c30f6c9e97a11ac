#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "marvin/grid.hpp"
#include "marvin/kinematics.hpp"
#include "marvin/lowlayer.hpp"
#include "marvin/worldsim.hpp"

/// Payload types carried on the bus. Every type here has a JSON mirror in the
/// gateway wire protocol (docs/protocol.md).
namespace marvin::msg {

enum class ActionKind { NavigateTo, Follow, GoAway, NightAssist, HelpRequest, Stop };
enum class ActionSource { Vocal, Manual, Monitor };

std::string_view to_string(ActionKind k);
std::string_view to_string(ActionSource s);
ActionKind action_kind_from_string(std::string_view s);
ActionSource action_source_from_string(std::string_view s);
bool needs_poi(ActionKind k);

struct ActionRequest {
  ActionKind kind = ActionKind::Stop;
  std::string poi;  // NavigateTo / NightAssist only
  ActionSource source = ActionSource::Manual;
  friend bool operator==(const ActionRequest&, const ActionRequest&) = default;
};

enum class CommandSource { Manual, Autonomous };
std::string_view to_string(CommandSource s);
CommandSource command_source_from_string(std::string_view s);

struct VelocityCommand {
  kin::Twist2D twist;
  CommandSource source = CommandSource::Autonomous;
  double stamp = 0.0;
  friend bool operator==(const VelocityCommand&, const VelocityCommand&) = default;
};

struct EstopCommand {
  bool latch = true;  // false resets
  friend bool operator==(const EstopCommand&, const EstopCommand&) = default;
};

struct DeviceRequest {
  low::DeviceTarget target = low::DeviceTarget::Deploy;
  friend bool operator==(const DeviceRequest&, const DeviceRequest&) = default;
};

struct LightsCommand {
  bool on = false;
  friend bool operator==(const LightsCommand&, const LightsCommand&) = default;
};

struct Telemetry {
  kin::Pose2D pose;
  kin::Twist2D twist;    // achieved body twist
  kin::Twist2D command;  // base command after arbitration and the octahedron filter
  kin::WheelSpeeds wheels;
  kin::WheelSpeeds wheel_targets;
  low::DeviceState device;
  bool lights = false;
  bool estop = false;
  std::string task;        // active task kind or empty
  std::string task_phase;  // idle | running | await_help_confirm
  friend bool operator==(const Telemetry&, const Telemetry&) = default;
};

struct NavGoal {
  kin::Pose2D pose;
  double speed_cap = 1.5;
  std::string label;
  bool cancel = false;
  friend bool operator==(const NavGoal&, const NavGoal&) = default;
};

struct PathMsg {
  std::vector<kin::Pose2D> poses;
  double cost = 0.0;
  friend bool operator==(const PathMsg&, const PathMsg&) = default;
};

struct TrackInfo {
  int id = 0;
  std::array<double, 4> box{};  // x1, y1, x2, y2 in pixels
  std::string pose_class;
  bool confirmed = false;
  friend bool operator==(const TrackInfo&, const TrackInfo&) = default;
};

struct TrackList {
  std::vector<TrackInfo> tracks;
  std::optional<int> target;
  friend bool operator==(const TrackList&, const TrackList&) = default;
};

struct PersonGoalMsg {
  double x = 0.0;  // robot frame
  double y = 0.0;
  double world_x = 0.0;
  double world_y = 0.0;
  double stamp = 0.0;
  int track_id = 0;
  friend bool operator==(const PersonGoalMsg&, const PersonGoalMsg&) = default;
};

struct TaskEvent {
  std::string kind;
  std::string detail;
  friend bool operator==(const TaskEvent&, const TaskEvent&) = default;
};

struct VocalResponse {
  std::string text;
  friend bool operator==(const VocalResponse&, const VocalResponse&) = default;
};

struct UtteranceFrame {
  double stamp = 0.0;
  double energy = 0.0;  // rms level in [0, 1]
  std::optional<std::string> token;
  friend bool operator==(const UtteranceFrame&, const UtteranceFrame&) = default;
};

/// Typed text injected by an operator; expanded into utterance frames.
struct UtteranceText {
  std::string text;
  friend bool operator==(const UtteranceText&, const UtteranceText&) = default;
};

enum class HelpAnswer { Confirm, Deny };
struct HelpReply {
  HelpAnswer answer = HelpAnswer::Confirm;
  friend bool operator==(const HelpReply&, const HelpReply&) = default;
};

struct TriggerWord {
  std::string word;
  friend bool operator==(const TriggerWord&, const TriggerWord&) = default;
};

struct MapMsg {
  OccupancyGrid grid;
  friend bool operator==(const MapMsg&, const MapMsg&) = default;
};

using Payload = std::variant<ActionRequest, VelocityCommand, EstopCommand, DeviceRequest, LightsCommand, Telemetry,
                             NavGoal, PathMsg, sim::LidarScan, TrackList, PersonGoalMsg, TaskEvent, VocalResponse,
                             UtteranceFrame, UtteranceText, HelpReply, TriggerWord, MapMsg>;

/// Schema id of each payload alternative, in variant order.
inline constexpr std::array<std::string_view, std::variant_size_v<Payload>> kSchemaNames = {
    "ActionRequest", "VelocityCommand", "EstopCommand", "DeviceRequest", "LightsCommand", "Telemetry",
    "NavGoal",       "Path",            "LidarScan",    "TrackList",     "PersonGoal",    "TaskEvent",
    "VocalResponse", "UtteranceFrame",  "UtteranceText", "HelpReply",    "TriggerWord",   "Map"};

template <class T, std::size_t I = 0>
constexpr std::size_t payload_index() {
  static_assert(I < std::variant_size_v<Payload>, "type is not a bus payload");
  if constexpr (std::is_same_v<std::variant_alternative_t<I, Payload>, T>) {
    return I;
  } else {
    return payload_index<T, I + 1>();
  }
}

std::optional<std::size_t> schema_index(std::string_view name);

}  // namespace marvin::msg
