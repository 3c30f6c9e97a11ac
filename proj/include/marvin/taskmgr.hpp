#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "marvin/kinematics.hpp"
#include "marvin/messages.hpp"

namespace marvin::task {

/// Named poses in the home. Names are stored trimmed and lowercased; "dock" is mandatory.
class PoiRegistry {
 public:
  static std::string normalize(std::string_view name);

  /// Throws std::invalid_argument on an empty or duplicate name.
  void add(std::string_view name, const kin::Pose2D& pose);
  std::optional<kin::Pose2D> find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name).has_value(); }
  std::vector<std::string> names() const;
  /// Throws when "dock" is missing.
  void validate() const;

  /// JSON object `{ "kitchen": {"x": 1, "y": 2, "yaw": 0}, ... }`.
  static PoiRegistry from_json_text(std::string_view text);
  static PoiRegistry load(const std::filesystem::path& path);

 private:
  std::map<std::string, kin::Pose2D, std::less<>> pois_;
};

enum class Phase { Idle, Running, AwaitHelpConfirm };
std::string_view to_string(Phase p);

struct TaskState {
  std::optional<msg::ActionRequest> active;
  std::optional<double> help_deadline;  // set while a vocal help request awaits confirmation

  Phase phase() const {
    if (help_deadline) return Phase::AwaitHelpConfirm;
    return active ? Phase::Running : Phase::Idle;
  }
  friend bool operator==(const TaskState&, const TaskState&) = default;
};

struct TaskConfig {
  double help_timeout = 10.0;
  double night_speed_cap = 0.5;
  double speed_cap = 1.5;
};

// Side effects requested by the task manager, executed by the hosting node.
struct GoalEffect {
  kin::Pose2D pose;
  double speed_cap = 1.5;
  std::string label;
};
struct CancelNavigation {};
struct FollowEffect {
  bool enable = false;
};
struct LightsEffect {
  bool on = false;
};
struct EventEffect {
  std::string kind;
  std::string detail;
};
struct RespondEffect {
  std::string text;
};
using Effect = std::variant<GoalEffect, CancelNavigation, FollowEffect, LightsEffect, EventEffect, RespondEffect>;

struct Outcome {
  TaskState state;
  std::vector<Effect> effects;
};

/// Dispatches a request from the Actions topic. Stop aborts everything; any
/// other task preempts the active one (abort emitted before activation);
/// HelpRequest goes through help_request_flow and leaves the active task alone.
Outcome handle_action(const TaskState& state, const msg::ActionRequest& request, double now,
                      const PoiRegistry& pois, const TaskConfig& config = {});

enum class HelpTrigger { Vocal, Monitor, Manual };
enum class HelpReplyKind { None, Confirm, Deny };

/// Vocal triggers open a confirmation window of help_timeout seconds; other
/// triggers dispatch immediately. A Confirm, or the window expiring, dispatches;
/// Deny returns to the previous operation without dispatching.
Outcome help_request_flow(const TaskState& state, std::optional<HelpTrigger> trigger, HelpReplyKind reply,
                          double now, const TaskConfig& config = {});

enum class NavResult { GoalReached, SearchTimeout, NoPath };

/// Reaction to the navigation layer finishing (or failing) the active task.
Outcome on_navigation_result(const TaskState& state, NavResult result, double now);

/// Message the platform speaks back when a task is accepted.
std::string acknowledgment(const msg::ActionRequest& request);

}  // namespace marvin::task
