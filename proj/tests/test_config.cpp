#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "marvin/config.hpp"

using namespace marvin;

TEST_CASE("defaults are valid and match the documented values") {
  const Config c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.tick == 0.02);
  CHECK(c.firmware.gains.kp == 2.0);
  CHECK(c.firmware.gains.ki == 20.0);
  CHECK(c.sort.max_age == 5);
  CHECK(c.sort.min_hits == 3);
  CHECK(c.fall.window == 10.0);
  CHECK(c.task.help_timeout == 10.0);
  CHECK(c.person_follow.standoff == 1.2);
  CHECK(c.inflation_radius == 0.36);
}

TEST_CASE("a file overrides only the keys it names") {
  const auto c = config_from_json_text(R"({"pid": {"kp": 1.5}, "task": {"help_timeout": 7},
                                           "nav": {"clearance": 0.25, "target_search_radius": 0.4}})");
  CHECK(c.firmware.gains.kp == 1.5);
  CHECK(c.firmware.gains.ki == 20.0);
  CHECK(c.task.help_timeout == 7.0);
  CHECK(c.follow().clearance == 0.25);
  CHECK(c.person_follow.target_search_radius == 0.4);
  CHECK(c.tick == 0.02);

  Config base;
  base.tick = 0.01;
  base.firmware.control_dt = 0.001;
  CHECK(config_from_json_text("{}", base).tick == 0.01);
}

TEST_CASE("unknown keys, wrong types and bad values are refused") {
  CHECK_THROWS_AS(config_from_json_text(R"({"pidd": {}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text(R"({"pid": {"kq": 1}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text(R"({"pid": {"kp": "fast"}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text(R"({"pid": 3})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text(R"({"camera": {"hfov_deg": "wide"}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text(R"({"sim": {"tick": 0}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text(R"({"nav": {"inflation_radius": -1}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text("{"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text("[]"), std::invalid_argument);
}

TEST_CASE("MARVIN_CONFIG points at the global file") {
  const auto path = std::filesystem::temp_directory_path() / "marvin_test_config.json";
  {
    std::ofstream out(path);
    out << R"({"lidar": {"beams": 180}})";
  }
  ::setenv("MARVIN_CONFIG", path.c_str(), 1);
  CHECK(config_from_env().lidar.beams == 180);
  ::setenv("MARVIN_CONFIG", "", 1);
  CHECK(config_from_env().lidar.beams == 360);
  ::setenv("MARVIN_CONFIG", "/nonexistent/marvin.json", 1);
  CHECK_THROWS(config_from_env());
  ::unsetenv("MARVIN_CONFIG");
  CHECK(config_from_env().lidar.beams == 360);
  std::filesystem::remove(path);
}
