#include "marvin/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "marvin/errors.hpp"

namespace marvin::scn {

namespace {

using wire::Json;

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

double num(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw std::invalid_argument(std::string("expected number '") + key + "' in " + j.dump());
  }
  return j.at(key).get<double>();
}

double num_or(const Json& j, const char* key, double fallback) { return j.contains(key) ? num(j, key) : fallback; }

kin::Pose2D pose_of(const Json& j) { return {num(j, "x"), num(j, "y"), num_or(j, "yaw", 0.0)}; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void only_keys(const Json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw std::invalid_argument("unknown key '" + k + "' in " + std::string(where));
    }
  }
}

sim::PersonAgent person_of(const Json& j) {
  only_keys(j, {"name", "x", "y", "yaw", "speed", "waypoints", "loop", "walking", "posture", "script"}, "person");
  sim::PersonAgent p;
  p.name = j.at("name").get<std::string>();
  p.pose = pose_of(j);
  p.speed = num_or(j, "speed", p.speed);
  if (p.speed < 0.0) throw std::invalid_argument("person '" + p.name + "' has negative speed");
  if (j.contains("waypoints")) {
    for (const auto& w : j.at("waypoints")) p.waypoints.push_back({w.at(0).get<double>(), w.at(1).get<double>()});
  }
  p.loop = j.value("loop", false);
  p.walking = j.value("walking", !p.waypoints.empty());
  if (j.contains("posture")) p.posture = sim::posture_from_string(j.at("posture").get<std::string>());
  if (j.contains("script")) {
    for (const auto& e : j.at("script")) {
      sim::PersonEvent ev;
      ev.t = num(e, "t");
      ev.kind = sim::person_event_from_string(e.at("event").get<std::string>());
      if (e.contains("yaw")) ev.yaw = e.at("yaw").get<double>();
      p.script.push_back(ev);
    }
    std::stable_sort(p.script.begin(), p.script.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  }
  return p;
}

const std::vector<std::string_view>& assertion_types() {
  static const std::vector<std::string_view> types = {"event", "no_event", "event_delay",   "order",
                                                      "standoff", "heading", "near", "map_agreement",
                                                      "map_roundtrip", "estop_zero"};
  return types;
}

}  // namespace

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir, const Config& base) {
  const auto nl = text.find('\n');
  const auto first = text.substr(0, nl == std::string_view::npos ? text.size() : nl);
  std::string_view header = first;
  while (!header.empty() && (header.back() == '\r' || header.back() == ' ')) header.remove_suffix(1);
  if (header != kHeader) throw ParseError(1, "expected '" + std::string(kHeader) + "'");
  if (nl == std::string_view::npos) throw ParseError(1, "missing scenario body");
  const auto body = text.substr(nl + 1);

  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw ParseError(1 + line_of_offset(body, e.byte == 0 ? 0 : e.byte - 1), e.what());
  }
  if (!j.is_object()) throw ParseError(2, "scenario body must be a JSON object");

  Scenario s;
  s.base_dir = base_dir;
  try {
    only_keys(j,
              {"name", "world", "pois", "catalogue", "config", "lidar_noise", "horizon", "robot", "people", "inputs",
               "mapping", "assertions"},
              "scenario");
    s.name = j.value("name", std::string("scenario"));
    s.config = j.contains("config") ? config_from_json_text(j.at("config").dump(), base) : base;
    if (j.contains("lidar_noise")) s.config.lidar.noise_sigma = num(j, "lidar_noise");
    s.world = sim::load_world(base_dir / j.at("world").get<std::string>());
    s.pois = task::PoiRegistry::load(base_dir / j.at("pois").get<std::string>());
    if (j.contains("catalogue")) {
      s.catalogue = vocal::IntentCatalogue::load(base_dir / j.at("catalogue").get<std::string>(), s.pois);
    }
    s.horizon = num(j, "horizon");
    if (!(s.horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
    s.robot = pose_of(j.at("robot"));
    for (const auto& p : j.value("people", Json::array())) s.people.push_back(person_of(p));

    auto bus = bus::Bus::with_default_topics();
    for (const auto& in : j.value("inputs", Json::array())) {
      only_keys(in, {"t", "topic", "payload", "utterance", "until"}, "input");
      Input input;
      input.t = num(in, "t");
      if (in.contains("utterance")) {
        input.topic = std::string(bus::topic::kUtteranceText);
        input.payload = msg::UtteranceText{in.at("utterance").get<std::string>()};
      } else {
        input.topic = in.at("topic").get<std::string>();
        const auto idx = bus->payload_index(input.topic);
        if (!idx) throw std::invalid_argument("input on unknown topic '" + input.topic + "'");
        input.payload = wire::from_json(msg::kSchemaNames[*idx], in.at("payload"));
      }
      if (in.contains("until")) input.until = num(in, "until");
      s.inputs.push_back(std::move(input));
    }
    std::stable_sort(s.inputs.begin(), s.inputs.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

    if (j.contains("mapping")) {
      const auto& m = j.at("mapping");
      only_keys(m, {"enabled", "tour"}, "mapping");
      s.mapping = m.value("enabled", true);
      for (const auto& w : m.value("tour", Json::array())) s.tour.push_back(pose_of(w));
    }
    for (const auto& a : j.value("assertions", Json::array())) {
      const auto type = a.at("type").get<std::string>();
      const auto& known = assertion_types();
      if (std::find(known.begin(), known.end(), type) == known.end()) {
        throw std::invalid_argument("unknown assertion type '" + type + "'");
      }
      s.assertions.push_back({type, a});
    }
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  } catch (const SchemaError& e) {
    throw std::invalid_argument(std::string("scenario input: ") + e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path, const Config& base) {
  return parse_scenario(read_file(path), path.parent_path(), base);
}

bool ScenarioResult::passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const auto& a) { return a.passed; });
}

double map_agreement(const OccupancyGrid& mapped, const OccupancyGrid& truth, std::size_t* observed) {
  if (!(mapped.geometry == truth.geometry)) throw std::invalid_argument("map geometries differ");
  std::size_t seen = 0, agree = 0;
  for (std::size_t i = 0; i < mapped.cells.size(); ++i) {
    if (mapped.cells[i] == Cell::Unknown) continue;
    ++seen;
    if (mapped.cells[i] == truth.cells[i]) ++agree;
  }
  if (observed) *observed = seen;
  return seen == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(seen);
}

// --- running -----------------------------------------------------------------------------

namespace {

struct Sample {
  double t;
  kin::Pose2D robot;
  std::vector<std::pair<std::string, kin::Pose2D>> people;
};

struct Mark {
  std::size_t index;  // position in the log
  double t;
  std::string label;
  std::string detail;
};

// Labels used by "event" and "order" assertions.
std::vector<std::string> labels_of(const bus::Envelope& e) {
  std::vector<std::string> out;
  if (e.is<msg::TaskEvent>()) {
    out.push_back("event:" + e.as<msg::TaskEvent>().kind);
  } else if (e.is<msg::LightsCommand>()) {
    out.push_back(e.as<msg::LightsCommand>().on ? "lights:on" : "lights:off");
  } else if (e.is<msg::NavGoal>()) {
    out.push_back(e.as<msg::NavGoal>().cancel ? "goal:cancel" : "goal");
  } else if (e.is<msg::VelocityCommand>() && e.topic == bus::topic::kCmdVelAuto) {
    const auto& t = e.as<msg::VelocityCommand>().twist;
    if (t.vx != 0.0 || t.vy != 0.0 || t.yaw_rate != 0.0) out.push_back("cmd_vel");
  } else if (e.is<msg::EstopCommand>()) {
    out.push_back(e.as<msg::EstopCommand>().latch ? "estop:latch" : "estop:reset");
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

struct Evaluator {
  const Scenario& scn;
  const std::vector<Mark>& marks;
  const std::vector<Sample>& samples;
  const std::vector<std::pair<double, kin::Twist2D>>& commands;  // per-tick telemetry command
  const std::vector<double>& estop_ticks;                          // stamps of latch messages
  const std::optional<OccupancyGrid>& map;
  ScenarioResult& result;

  std::optional<Mark> first(const std::string& label, double after = -1e300) const {
    for (const auto& m : marks) {
      if (m.label == label && m.t >= after) return m;
    }
    return std::nullopt;
  }

  static std::string label(const Json& a, const char* key) {
    auto s = a.at(key).get<std::string>();
    if (s.find(':') == std::string::npos && s != "goal" && s != "cmd_vel") s = "event:" + s;
    return s;
  }

  const kin::Pose2D* person(const Sample& s, const std::string& name) const {
    for (const auto& [n, p] : s.people) {
      if (n == name) return &p;
    }
    return nullptr;
  }

  AssertionResult eval(const Assertion& as) const {
    const auto& a = as.spec;
    AssertionResult r;
    r.description = a.value("name", as.type);
    if (as.type == "event") {
      const auto lbl = label(a, "kind");
      const auto w = a.at("window");
      const auto m = first(lbl);
      r.description = a.value("name", lbl + " in [" + fmt(w[0].get<double>()) + ", " + fmt(w[1].get<double>()) + "] s");
      r.passed = m && m->t >= w[0].get<double>() - 1e-9 && m->t <= w[1].get<double>() + 1e-9;
      r.detail = m ? "first at " + fmt(m->t) + " s" : "never";
      if (m) result.metrics[lbl + "@"] = m->t;
    } else if (as.type == "no_event") {
      const auto lbl = label(a, "kind");
      const auto m = first(lbl);
      r.description = a.value("name", "no " + lbl);
      r.passed = !m;
      r.detail = m ? "at " + fmt(m->t) + " s: " + m->detail : "none";
    } else if (as.type == "event_delay") {
      const auto from = label(a, "from"), to = label(a, "to");
      const double delay = a.at("delay").get<double>(), tol = a.at("tolerance").get<double>();
      const auto m0 = first(from);
      const auto m1 = m0 ? first(to, m0->t) : std::nullopt;
      r.description = a.value("name", to + " " + fmt(delay) + " s after " + from);
      r.passed = m0 && m1 && std::abs((m1->t - m0->t) - delay) <= tol + 1e-9;
      r.detail = (m0 && m1) ? "delay " + fmt(m1->t - m0->t) + " s" : "missing event";
      if (m0 && m1) result.metrics[to + " delay"] = m1->t - m0->t;
    } else if (as.type == "order") {
      std::vector<std::string> lbls;
      for (const auto& l : a.at("marks")) lbls.push_back(l.get<std::string>());
      r.description = a.value("name", "order");
      std::size_t prev = 0;
      bool ok = true;
      std::string detail;
      for (std::size_t i = 0; i < lbls.size(); ++i) {
        std::optional<Mark> m;
        for (const auto& mk : marks) {
          if (mk.label == lbls[i] && (i == 0 || mk.index > prev)) {
            m = mk;
            break;
          }
        }
        if (!m) {
          ok = false;
          detail += lbls[i] + " missing; ";
          break;
        }
        detail += lbls[i] + "@" + fmt(m->t) + " ";
        prev = m->index;
      }
      r.passed = ok;
      r.detail = detail;
    } else if (as.type == "standoff" || as.type == "heading") {
      const auto name = a.at("person").get<std::string>();
      const double after = a.value("after", 0.0), need = a.at("fraction").get<double>();
      std::size_t n = 0, ok = 0;
      for (const auto& s : samples) {
        if (s.t < after) continue;
        const auto* p = person(s, name);
        if (!p) continue;
        ++n;
        const double dx = p->x - s.robot.x, dy = p->y - s.robot.y;
        if (as.type == "standoff") {
          const double d = std::hypot(dx, dy);
          const auto band = a.at("band");
          if (d >= band[0].get<double>() && d <= band[1].get<double>()) ++ok;
        } else {
          const double err = std::abs(kin::wrap_angle(std::atan2(dy, dx) - s.robot.yaw));
          if (err < a.at("max_error").get<double>()) ++ok;
        }
      }
      const double frac = n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
      result.metrics[as.type + " fraction"] = frac;
      r.description = a.value("name", as.type + " fraction >= " + fmt(need));
      r.passed = n > 0 && frac >= need;
      r.detail = fmt(frac * 100.0) + "% of " + std::to_string(n) + " ticks";
    } else if (as.type == "near") {
      const kin::Pose2D target = pose_of(a);
      const double tol = a.at("tolerance").get<double>();
      const auto& last = samples.back().robot;
      const double d = std::hypot(last.x - target.x, last.y - target.y);
      r.description = a.value("name", "robot ends near (" + fmt(target.x) + ", " + fmt(target.y) + ")");
      r.passed = d <= tol;
      r.detail = "distance " + fmt(d) + " m";
    } else if (as.type == "map_agreement") {
      r.description = a.value("name", "map agreement >= " + fmt(a.at("min").get<double>()));
      if (!map) {
        r.detail = "mapping disabled";
      } else {
        std::size_t observed = 0;
        const double agree = map_agreement(*map, scn.world, &observed);
        result.metrics["map agreement"] = agree;
        result.metrics["map observed cells"] = static_cast<double>(observed);
        r.passed = agree >= a.at("min").get<double>();
        r.detail = fmt(agree * 100.0) + "% of " + std::to_string(observed) + " observed cells";
      }
    } else if (as.type == "map_roundtrip") {
      r.description = a.value("name", "map save/load round-trip");
      if (!map) {
        r.detail = "mapping disabled";
      } else {
        const auto bytes = nav::encode_map(*map);
        const auto back = nav::decode_map(bytes);
        r.passed = back == *map && nav::encode_map(back) == bytes;
        r.detail = std::to_string(bytes.size()) + " bytes";
      }
    } else if (as.type == "estop_zero") {
      r.description = a.value("name", "zero command on the tick after each e-stop");
      std::size_t checked = 0;
      bool ok = !estop_ticks.empty();
      for (double t : estop_ticks) {
        const auto it = std::find_if(commands.begin(), commands.end(),
                                     [&](const auto& c) { return c.first >= t - 1e-9; });
        if (it == commands.end()) {
          ok = false;
          break;
        }
        ++checked;
        const auto& tw = it->second;
        if (tw.vx != 0.0 || tw.vy != 0.0 || tw.yaw_rate != 0.0) ok = false;
      }
      r.passed = ok;
      r.detail = std::to_string(checked) + " latch messages checked";
    }
    return r;
  }
};

}  // namespace

ScenarioResult run_scenario(const Scenario& scenario, std::uint64_t seed, const RunHooks& hooks) {
  const auto wall_start = std::chrono::steady_clock::now();
  StackSetup setup;
  setup.config = scenario.config;
  setup.world.grid = scenario.world;
  setup.world.robot.pose = scenario.robot;
  setup.world.people = scenario.people;
  setup.pois = scenario.pois;
  setup.catalogue = scenario.catalogue;
  setup.seed = seed;
  setup.mapping = scenario.mapping;
  setup.keep_log = true;
  Stack stack(std::move(setup));

  ScenarioResult result;
  result.name = scenario.name;
  std::string log(wire::kLogHeader);
  log += '\n';
  std::vector<Mark> marks;
  std::vector<Sample> samples;
  std::vector<std::pair<double, kin::Twist2D>> commands;
  std::vector<double> estop_ticks;
  std::size_t log_index = 0;
  std::size_t next_input = 0;
  std::vector<const Input*> repeating;
  std::size_t tour_index = 0;
  bool tour_pending = !scenario.tour.empty();
  auto tour_events = stack.bus().subscribe(bus::topic::kEvents, 0);

  const double dt = stack.config().tick;
  const auto total_ticks = static_cast<std::uint64_t>(std::ceil(scenario.horizon / dt - 1e-9));
  for (std::uint64_t k = 0; k < total_ticks || (hooks.keep_running && hooks.keep_running()); ++k) {
    const double now = stack.time();
    stack.bus().set_time(now);
    while (next_input < scenario.inputs.size() && scenario.inputs[next_input].t <= now + 1e-9) {
      const auto& in = scenario.inputs[next_input++];
      stack.bus().publish("scenario", in.topic, in.payload);
      if (in.until) repeating.push_back(&in);
    }
    std::erase_if(repeating, [&](const Input* in) { return *in->until < now - 1e-9; });
    for (const Input* in : repeating) {
      if (in->t < now - 1e-9) stack.bus().publish("scenario", in->topic, in->payload);
    }
    for (const auto& e : tour_events->drain()) {
      const auto& ev = e.as<msg::TaskEvent>();
      if ((ev.kind == "GoalReached" || ev.kind == "NoPath") && ev.detail.rfind("tour", 0) == 0) tour_pending = true;
    }
    if (tour_pending && tour_index < scenario.tour.size()) {
      msg::NavGoal g{scenario.tour[tour_index], stack.config().follow().v_max,
                     "tour " + std::to_string(tour_index), false};
      ++tour_index;
      stack.bus().publish("scenario", bus::topic::kGoal, g);
      tour_pending = false;
    }
    if (hooks.before_tick) hooks.before_tick(stack);

    stack.tick();

    auto envs = stack.drain_log();
    for (const auto& e : envs) {
      log += wire::log_line(e);
      log += '\n';
      for (auto& l : labels_of(e)) {
        std::string detail = e.is<msg::TaskEvent>() ? e.as<msg::TaskEvent>().detail : "";
        marks.push_back({log_index, e.stamp, std::move(l), std::move(detail)});
      }
      if (e.is<msg::EstopCommand>() && e.as<msg::EstopCommand>().latch) estop_ticks.push_back(e.stamp);
      ++log_index;
    }
    commands.emplace_back(now, stack.telemetry().command);
    Sample s{now, stack.world().robot.pose, {}};
    for (const auto& p : stack.world().people) s.people.emplace_back(p.name, p.pose);
    samples.push_back(std::move(s));
    if (hooks.after_tick) hooks.after_tick(stack, envs);
    if (hooks.rate > 0.0) {
      const auto due = wall_start + std::chrono::duration<double>(stack.time() / hooks.rate);
      std::this_thread::sleep_until(due);
    }
  }
  result.sim_time = stack.time();
  if (const auto* m = stack.mapper()) result.map = nav::threshold_map(*m);

  Evaluator ev{scenario, marks, samples, commands, estop_ticks, result.map, result};
  for (const auto& a : scenario.assertions) result.assertions.push_back(ev.eval(a));
  result.log = std::move(log);
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return result;
}

}  // namespace marvin::scn
