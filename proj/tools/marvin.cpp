// Command-line entry point: scenario runs, log replay and map conversion.
// Exit codes: 0 success, 1 scenario assertion failure, 2 usage or parse error.

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "marvin/errors.hpp"
#include "marvin/gateway.hpp"
#include "marvin/nav.hpp"
#include "marvin/scenario.hpp"
#include "marvin/worldsim.hpp"

namespace {

constexpr int kUsage = 2;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunArgs {
  std::string scenario;
  std::uint64_t seed = 0;
  bool headless = false;
  int port = -1;
  double rate = -1.0;
  std::string record;
  std::string save_map;
};

int run(const RunArgs& a) {
  marvin::scn::Scenario scenario;
  try {
    scenario = marvin::scn::load_scenario(a.scenario, marvin::config_from_env());
  } catch (const std::exception& e) {
    std::cerr << "marvin: " << a.scenario << ": " << e.what() << "\n";
    return kUsage;
  }

  std::unique_ptr<marvin::gw::Gateway> gateway;
  if (a.port >= 0) {
    marvin::gw::GatewayOptions opts;
    opts.address = "0.0.0.0";
    opts.port = static_cast<std::uint16_t>(a.port);
    try {
      gateway = std::make_unique<marvin::gw::Gateway>(opts);
    } catch (const std::exception& e) {
      std::cerr << "marvin: " << e.what() << "\n";
      return kUsage;
    }
    std::cerr << "gateway listening on port " << gateway->port() << "\n";
  }

  marvin::scn::RunHooks hooks;
  // Interactive runs follow the wall clock so an operator can keep up; headless runs go flat out.
  hooks.rate = a.rate >= 0.0 ? a.rate : (gateway && !a.headless ? 1.0 : 0.0);
  if (gateway) {
    hooks.before_tick = [&](marvin::Stack& stack) { gateway->pump(stack.bus()); };
    hooks.after_tick = [&](const marvin::Stack&, const std::vector<marvin::bus::Envelope>& envs) {
      gateway->broadcast(envs);
    };
  }
  const auto result = marvin::scn::run_scenario(scenario, a.seed, hooks);
  if (gateway) gateway->stop();

  if (!a.record.empty()) {
    std::ofstream out(a.record, std::ios::binary);
    out << result.log;
    if (!out) {
      std::cerr << "marvin: cannot write " << a.record << "\n";
      return kUsage;
    }
  }
  if (!a.save_map.empty()) {
    if (!result.map) {
      std::cerr << "marvin: scenario has mapping disabled, no map to save\n";
      return kUsage;
    }
    marvin::nav::save_map(*result.map, a.save_map);
  }

  std::cout << "scenario " << result.name << " seed " << a.seed << "\n";
  for (const auto& r : result.assertions) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.description << " (" << r.detail << ")\n";
  }
  for (const auto& [k, v] : result.metrics) std::cout << "  " << k << ": " << v << "\n";
  std::printf("sim %.2f s, wall %.3f s\n", result.sim_time, result.wall_time);
  return result.exit_code();
}

int replay(const std::string& path, int port, double rate, bool wait) {
  marvin::wire::LogContents log;
  try {
    auto registry = marvin::bus::Bus::with_default_topics();
    log = marvin::wire::parse_log(read_file(path), registry.get());
  } catch (const std::exception& e) {
    std::cerr << "marvin: " << path << ": " << e.what() << "\n";
    return kUsage;
  }
  if (log.truncated) {
    std::cerr << "marvin: " << path << " is truncated; replaying " << log.envelopes.size() << " complete messages\n";
  }
  marvin::gw::GatewayOptions opts;
  opts.address = "0.0.0.0";
  opts.port = static_cast<std::uint16_t>(port);
  opts.accept_commands = false;
  std::unique_ptr<marvin::gw::Gateway> gateway;
  try {
    gateway = std::make_unique<marvin::gw::Gateway>(opts);
  } catch (const std::exception& e) {
    std::cerr << "marvin: " << e.what() << "\n";
    return kUsage;
  }
  std::signal(SIGINT, on_signal);
  std::cerr << "replaying " << path << " on port " << gateway->port() << "\n";
  if (wait) {
    while (gateway->subscribers() == 0 && !g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  marvin::gw::replay(log, *gateway, rate, &g_interrupted);
  // Let the last frames leave before closing.
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  gateway->stop();
  return 0;
}

int map_convert(const std::string& in, const std::string& out, std::string to) {
  marvin::OccupancyGrid grid;
  try {
    const std::string text = read_file(in);
    if (text.rfind("MARVINWORLD", 0) == 0) {
      grid = marvin::sim::parse_world(text);
    } else {
      grid = marvin::nav::decode_map(text);
    }
  } catch (const std::exception& e) {
    std::cerr << "marvin: " << in << ": " << e.what() << "\n";
    return kUsage;
  }
  if (to.empty()) to = out.ends_with(".world") ? "world" : "map";
  std::ofstream os(out, std::ios::binary);
  if (to == "world") {
    os << marvin::sim::format_world(grid);
  } else {
    os << marvin::nav::encode_map(grid);
  }
  if (!os) {
    std::cerr << "marvin: cannot write " << out << "\n";
    return kUsage;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marvin: simulated assistive home robot"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and evaluate its assertions");
  run_cmd->add_option("--scenario", run_args.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run_args.seed, "Random seed")->required();
  run_cmd->add_flag("--headless", run_args.headless, "No operator console expected; run as fast as possible");
  run_cmd->add_option("--port", run_args.port, "Serve the WebSocket gateway on this port")->check(CLI::Range(0, 65535));
  run_cmd->add_option("--rate", run_args.rate, "Simulated seconds per wall second (0 = unpaced)")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--record", run_args.record, "Write the message log to this file");
  run_cmd->add_option("--save-map", run_args.save_map, "Write the built map (mapping scenarios)");

  std::string replay_path;
  int replay_port = 0;
  double replay_rate = 1.0;
  bool no_wait = false;
  auto* replay_cmd = app.add_subcommand("replay", "Serve a recorded log over the gateway");
  replay_cmd->add_option("log", replay_path, "Log file")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--port", replay_port, "Gateway port")->required()->check(CLI::Range(0, 65535));
  replay_cmd->add_option("--rate", replay_rate, "Playback speed (0 = as fast as possible)")
      ->check(CLI::NonNegativeNumber);
  replay_cmd->add_flag("--no-wait", no_wait, "Start immediately instead of waiting for a subscriber");

  std::string map_in, map_out, map_to;
  auto* map_cmd = app.add_subcommand("map-convert", "Convert between world files and map files");
  map_cmd->add_option("input", map_in, "MARVINWORLD or MARVINMAP file")->required()->check(CLI::ExistingFile);
  map_cmd->add_option("output", map_out, "Output file")->required();
  map_cmd->add_option("--to", map_to, "Output format (default from the extension)")
      ->check(CLI::IsMember({"map", "world"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*run_cmd) return run(run_args);
    if (*replay_cmd) return replay(replay_path, replay_port, replay_rate, !no_wait);
    if (*map_cmd) return map_convert(map_in, map_out, map_to);
  } catch (const std::exception& e) {
    std::cerr << "marvin: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
