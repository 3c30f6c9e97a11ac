#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "marvin/errors.hpp"
#include "marvin/scenario.hpp"
#include "support.hpp"

using namespace marvin;

namespace {

std::filesystem::path scenario_path(const std::string& name) { return test::data_dir() / "scenarios" / (name + ".scn"); }

std::string describe(const scn::ScenarioResult& r) {
  std::string s;
  for (const auto& a : r.assertions) s += (a.passed ? "  ok   " : "  FAIL ") + a.description + " " + a.detail + "\n";
  return s;
}

std::size_t parse_error_line(const std::string& text) {
  try {
    scn::parse_scenario(text, test::data_dir() / "scenarios");
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

const std::string kMinimal = R"(MARVINSCN v1
{"name": "t", "world": "../worlds/home.world", "pois": "../home.pois.json", "horizon": 1.0, "robot": {"x": 1.2, "y": 1.2, "yaw": 0}}
)";

}  // namespace

TEST_CASE("every shipped scenario passes its assertions on two seeds") {
  for (const auto* name : {"fall", "follow", "night_assist", "help_timeout", "estop", "mapping"}) {
    const auto scn = scn::load_scenario(scenario_path(name));
    for (std::uint64_t seed : {1u, 2u}) {
      const auto r = scn::run_scenario(scn, seed);
      CHECK_MESSAGE(r.passed(), name << " seed " << seed << "\n" << describe(r));
      CHECK(r.exit_code() == (r.passed() ? 0 : 1));
      CHECK(r.sim_time == doctest::Approx(scn.horizon));
    }
  }
}

TEST_CASE("the same seed gives byte-identical logs") {
  const auto scn = scn::load_scenario(scenario_path("fall"));
  const auto a = scn::run_scenario(scn, 7);
  const auto b = scn::run_scenario(scn, 7);
  CHECK(a.log.size() > 1000);
  CHECK(a.log == b.log);
  CHECK(a.log.rfind("MARVINLOG v1\n", 0) == 0);
  const auto c = scn::run_scenario(scn, 8);
  CHECK(c.log != a.log);  // detection noise depends on the seed
}

TEST_CASE("the recorded log parses back") {
  const auto scn = scn::load_scenario(scenario_path("night_assist"));
  const auto r = scn::run_scenario(scn, 1);
  const auto bus = bus::Bus::with_default_topics();
  const auto log = wire::parse_log(r.log, bus.get());
  CHECK(!log.truncated);
  CHECK(!log.envelopes.empty());
  double last = 0.0;
  for (const auto& e : log.envelopes) {
    CHECK(e.stamp >= last);
    last = e.stamp;
  }
}

TEST_CASE("scenario files: header, syntax and content errors") {
  CHECK_NOTHROW(scn::parse_scenario(kMinimal, test::data_dir() / "scenarios"));
  CHECK(parse_error_line("MARVINSCN v2\n{}") == 1);
  CHECK(parse_error_line("{}") == 1);
  CHECK(parse_error_line("MARVINSCN v1\n{\n  \"name\": \"x\",\n  oops\n}") == 4);
  CHECK_THROWS_AS(scn::parse_scenario("MARVINSCN v1\n{\"name\": \"x\"}", "."), std::invalid_argument);
  auto with = [](const std::string& extra) {
    std::string s = kMinimal;
    s.insert(s.rfind('}'), ", " + extra);
    return s;
  };
  const auto dir = test::data_dir() / "scenarios";
  CHECK_THROWS_AS(scn::parse_scenario(with(R"("assertions": [{"type": "telepathy"}])"), dir), std::invalid_argument);
  CHECK_THROWS_AS(scn::parse_scenario(with(R"("inputs": [{"t": 1, "topic": "nope", "payload": {}}])"), dir),
                  std::invalid_argument);
  CHECK_THROWS_AS(scn::parse_scenario(with(R"("inputs": [{"t": 1, "topic": "estop", "payload": {"latch": 3}}])"), dir),
                  std::invalid_argument);
  CHECK_THROWS_AS(scn::parse_scenario(with(R"("bogus": 1)"), dir), std::invalid_argument);
  CHECK_THROWS(scn::load_scenario(dir / "missing.scn"));
}

TEST_CASE("a failing assertion makes the exit code 1") {
  std::string text = kMinimal;
  text.insert(text.rfind('}'), R"(, "assertions": [{"type": "event", "kind": "FallDetected", "window": [0, 1]}])");
  const auto r = scn::run_scenario(scn::parse_scenario(text, test::data_dir() / "scenarios"), 1);
  CHECK(!r.passed());
  CHECK(r.exit_code() == 1);
  REQUIRE(r.assertions.size() == 1);
  CHECK(!r.assertions[0].passed);
}

TEST_CASE("map agreement counts only observed cells") {
  OccupancyGrid truth(GridGeometry{4, 1, 0.05, {0, 0, 0}}, Cell::Free);
  truth.set(3, 0, Cell::Occupied);
  OccupancyGrid mapped(truth.geometry, Cell::Unknown);
  mapped.set(0, 0, Cell::Free);
  mapped.set(1, 0, Cell::Occupied);  // wrong
  mapped.set(3, 0, Cell::Occupied);
  std::size_t observed = 0;
  CHECK(scn::map_agreement(mapped, truth, &observed) == doctest::Approx(2.0 / 3.0));
  CHECK(observed == 3);
}
