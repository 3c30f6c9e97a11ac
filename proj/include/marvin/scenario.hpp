#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "marvin/stack.hpp"
#include "marvin/wire.hpp"

namespace marvin::scn {

inline constexpr std::string_view kHeader = "MARVINSCN v1";

/// A message injected on the bus at time `t`, optionally repeated every tick until `until`.
struct Input {
  double t = 0.0;
  std::string topic;
  msg::Payload payload;
  std::optional<double> until;
};

struct Assertion {
  std::string type;
  wire::Json spec;  // the assertion object as written
};

struct Scenario {
  std::string name;
  std::filesystem::path base_dir;
  OccupancyGrid world;
  task::PoiRegistry pois;
  std::optional<vocal::IntentCatalogue> catalogue;
  Config config;
  double horizon = 30.0;
  kin::Pose2D robot;
  std::vector<sim::PersonAgent> people;
  std::vector<Input> inputs;
  bool mapping = false;
  std::vector<kin::Pose2D> tour;
  std::vector<Assertion> assertions;
};

/// Parses "MARVINSCN v1" followed by a JSON document. Paths inside are relative
/// to `base_dir`. Throws ParseError (with the line number) on malformed text and
/// std::invalid_argument on well-formed but inconsistent content.
Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir, const Config& base = {});
Scenario load_scenario(const std::filesystem::path& path, const Config& base = {});

struct AssertionResult {
  std::string description;
  bool passed = false;
  std::string detail;
};

struct ScenarioResult {
  std::string name;
  std::vector<AssertionResult> assertions;
  std::string log;  // header line plus one JSON line per envelope
  double sim_time = 0.0;
  double wall_time = 0.0;
  std::map<std::string, double> metrics;
  std::optional<OccupancyGrid> map;

  bool passed() const;
  int exit_code() const { return passed() ? 0 : 1; }
};

struct RunHooks {
  /// Called before every tick, e.g. to inject gateway traffic.
  std::function<void(Stack&)> before_tick;
  /// Called after every tick with the envelopes published during it.
  std::function<void(const Stack&, const std::vector<bus::Envelope>&)> after_tick;
  /// Simulated seconds per wall second; 0 runs as fast as possible.
  double rate = 0.0;
  /// When set, the scenario keeps running past its horizon until this returns true.
  std::function<bool()> keep_running;
};

ScenarioResult run_scenario(const Scenario& scenario, std::uint64_t seed, const RunHooks& hooks = {});

/// Fraction of observed (non-Unknown) mapped cells that equal the ground truth.
double map_agreement(const OccupancyGrid& mapped, const OccupancyGrid& truth, std::size_t* observed = nullptr);

}  // namespace marvin::scn
