#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "marvin/gateway.hpp"
#include "marvin/scenario.hpp"
#include "marvin/stack.hpp"
#include "support.hpp"

using namespace marvin;
using wire::Json;
namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using namespace std::chrono_literals;

namespace {

// Minimal synchronous client; reads time out so a missing reply fails the test instead of hanging it.
class Client {
 public:
  explicit Client(std::uint16_t port) {
    beast::get_lowest_layer(ws_).connect(net::ip::tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    ws_.handshake("127.0.0.1:" + std::to_string(port), "/");
  }

  void send(const Json& j) { send_text(j.dump()); }
  void send_text(const std::string& s) { ws_.write(net::buffer(s)); }

  std::optional<Json> read(std::chrono::milliseconds timeout = 2000ms) {
    beast::flat_buffer buf;
    bool done = false;
    beast::error_code ec;
    ws_.async_read(buf, [&](beast::error_code e, std::size_t) {
      ec = e;
      done = true;
    });
    ioc_.restart();
    ioc_.run_for(timeout);
    if (!done) {
      beast::get_lowest_layer(ws_).cancel();
      ioc_.restart();
      ioc_.run();
      return std::nullopt;
    }
    if (ec) return std::nullopt;
    return Json::parse(beast::buffers_to_string(buf.data()));
  }

  /// Next frame that is not a pushed bus message.
  std::optional<Json> reply() {
    for (;;) {
      auto j = read();
      if (!j || j->at("op") != "message") return j;
    }
  }

  Json request(Json j) {
    send(j);
    auto r = reply();
    REQUIRE(r);
    return *r;
  }

 private:
  net::io_context ioc_;
  websocket::stream<beast::tcp_stream> ws_{ioc_};
};

scn::Scenario load(const std::string& name) {
  return scn::load_scenario(test::data_dir() / "scenarios" / (name + ".scn"));
}

Stack make_stack(const scn::Scenario& s) {
  StackSetup setup;
  setup.config = s.config;
  setup.world.grid = s.world;
  setup.world.robot.pose = s.robot;
  setup.world.people = s.people;
  setup.pois = s.pois;
  setup.catalogue = s.catalogue;
  setup.seed = 1;
  setup.keep_log = true;
  return Stack(std::move(setup));
}

// One simulation step with the gateway attached, as the CLI runs it.
void step(Stack& stack, gw::Gateway& gateway) {
  gateway.pump(stack.bus());
  stack.tick();
  gateway.broadcast(stack.drain_log());
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(MARVIN_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("topics lists every topic with its type and command flag") {
  gw::Gateway gateway;
  Client c(gateway.port());
  const auto r = c.request({{"op", "topics"}, {"id", 1}});
  CHECK(r.at("op") == "topics");
  CHECK(r.at("id") == 1);
  CHECK(r.at("topics").at("estop").at("type") == "EstopCommand");
  CHECK(r.at("topics").at("estop").at("command") == true);
  CHECK(r.at("topics").at("telemetry").at("command") == false);
  CHECK(r.at("topics").size() == 19);
}

TEST_CASE("subscribers receive bus traffic for their topics only") {
  auto scn = load("fall");
  auto stack = make_stack(scn);
  gw::Gateway gateway;
  Client c(gateway.port());
  const auto r = c.request({{"op", "subscribe"}, {"topics", {"telemetry"}}});
  CHECK(r.at("op") == "subscribed");
  CHECK(r.at("topics") == Json::array({"telemetry"}));
  CHECK(c.request({{"op", "subscribe"}, {"topics", {"nope"}}}).at("code") == "unknown_topic");
  for (int k = 0; k < 5; ++k) step(stack, gateway);
  for (int k = 0; k < 5; ++k) {
    const auto m = c.read();
    REQUIRE(m);
    CHECK(m->at("op") == "message");
    CHECK(m->at("topic") == "telemetry");
    CHECK(m->at("type") == "Telemetry");
    CHECK(m->at("seq") == k + 1);
    CHECK(m->at("payload").contains("pose"));
  }
  CHECK(c.request({{"op", "unsubscribe"}, {"topics", {"telemetry"}}}).at("topics").empty());
  step(stack, gateway);
  CHECK(!c.read(300ms));
}

TEST_CASE("an e-stop published by a client zeroes the base on the next tick") {
  auto scn = load("fall");
  auto stack = make_stack(scn);
  gw::Gateway gateway;
  Client c(gateway.port());
  const auto ack = c.request({{"op", "publish"},
                              {"topic", "cmd_vel/manual"},
                              {"payload", {{"twist", {{"vx", 0.3}, {"vy", 0.0}, {"yaw_rate", 0.2}}},
                                           {"source", "manual"},
                                           {"stamp", 0.0}}}});
  REQUIRE(ack.at("op") == "ack");
  for (int k = 0; k < 10; ++k) step(stack, gateway);
  CHECK(stack.telemetry().command.vx > 0.0);

  CHECK(c.request({{"op", "publish"}, {"topic", "estop"}, {"payload", {{"latch", true}}}}).at("op") == "ack");
  step(stack, gateway);
  CHECK(stack.estop_latched());
  CHECK(stack.telemetry().command == kin::Twist2D{});
  CHECK(stack.telemetry().estop);
}

TEST_CASE("bad requests get an error and keep the connection") {
  gw::Gateway gateway;
  Client c(gateway.port());
  c.send_text("{nope");
  CHECK(c.reply()->at("code") == "parse");
  CHECK(c.request({{"op", "dance"}}).at("code") == "unknown_op");
  CHECK(c.request({{"topics", {}}}).at("code") == "schema");
  const auto bad = c.request({{"op", "publish"}, {"topic", "estop"}, {"payload", {{"latch", "yes"}}}, {"id", "x"}});
  CHECK(bad.at("code") == "schema");
  CHECK(bad.at("id") == "x");
  CHECK(c.request({{"op", "publish"}, {"topic", "telemetry"}, {"payload", Json::object()}}).at("code") ==
        "forbidden");
  // Still usable afterwards.
  CHECK(c.request({{"op", "publish"}, {"topic", "estop"}, {"payload", {{"latch", false}}}}).at("op") == "ack");
  CHECK(gateway.clients() == 1);
}

TEST_CASE("the command queue refuses work when full") {
  gw::GatewayOptions opts;
  opts.inbound_queue = 2;
  gw::Gateway gateway(opts);
  Client c(gateway.port());
  const Json estop = {{"op", "publish"}, {"topic", "estop"}, {"payload", {{"latch", true}}}};
  CHECK(c.request(estop).at("op") == "ack");
  CHECK(c.request(estop).at("op") == "ack");
  CHECK(c.request(estop).at("code") == "busy");
  auto bus = bus::Bus::with_default_topics();
  CHECK(gateway.pump(*bus) == 2);
  CHECK(c.request(estop).at("op") == "ack");
}

TEST_CASE("a port in use is reported") {
  gw::Gateway first;
  gw::GatewayOptions opts;
  opts.port = first.port();
  CHECK_THROWS_AS(gw::Gateway{opts}, std::runtime_error);
}

TEST_CASE("replay streams a recorded run unchanged and refuses commands") {
  const auto result = scn::run_scenario(load("night_assist"), 3);
  auto registry = bus::Bus::with_default_topics();
  const auto log = wire::parse_log(result.log, registry.get());
  REQUIRE(log.envelopes.size() > 100);

  gw::GatewayOptions opts;
  opts.accept_commands = false;
  opts.client_queue = 1 << 20;
  gw::Gateway gateway(opts);
  Client c(gateway.port());
  c.request({{"op", "subscribe"}, {"topics", {"*"}}});
  CHECK(c.request({{"op", "publish"}, {"topic", "estop"}, {"payload", {{"latch", true}}}}).at("code") == "replay");

  std::thread player([&] { gw::replay(log, gateway, 0.0); });
  std::vector<Json> got;
  while (got.size() < log.envelopes.size()) {
    auto m = c.read();
    if (!m) break;
    got.push_back(*m);
  }
  player.join();
  REQUIRE(got.size() == log.envelopes.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    Json expected = wire::envelope_to_json(log.envelopes[i]);
    expected["op"] = "message";
    CHECK(got[i] == expected);
  }
  CHECK(gateway.dropped() == 0);
}

TEST_CASE("CLI exit codes") {
  const auto dir = test::data_dir() / "scenarios";
  const auto tmp = std::filesystem::temp_directory_path();
  CHECK(run_cli("run --scenario " + (dir / "help_timeout.scn").string() + " --seed 1 --headless") == 0);

  const auto failing = tmp / "marvin_failing.scn";
  {
    std::ofstream out(failing);
    out << "MARVINSCN v1\n{\"name\": \"f\", \"world\": \"" << (test::data_dir() / "worlds" / "home.world").string()
        << "\", \"pois\": \"" << (test::data_dir() / "home.pois.json").string()
        << "\", \"horizon\": 1, \"robot\": {\"x\": 1.2, \"y\": 1.2, \"yaw\": 0},"
           " \"assertions\": [{\"type\": \"event\", \"kind\": \"FallDetected\", \"window\": [0, 1]}]}\n";
  }
  CHECK(run_cli("run --scenario " + failing.string() + " --seed 1 --headless") == 1);

  const auto corrupt = tmp / "marvin_corrupt.scn";
  {
    std::ofstream out(corrupt);
    out << "MARVINSCN v1\n{\"name\": \n";
  }
  CHECK(run_cli("run --scenario " + corrupt.string() + " --seed 1 --headless") == 2);
  CHECK(run_cli("run --seed 1") == 2);
  CHECK(run_cli("run --scenario /nonexistent.scn --seed 1") == 2);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("replay " + corrupt.string() + " --port 0 --no-wait") == 2);

  // Recording then converting maps both ways.
  const auto rec = tmp / "marvin_rec.log";
  CHECK(run_cli("run --scenario " + (dir / "help_timeout.scn").string() + " --seed 4 --headless --record " +
                rec.string()) == 0);
  CHECK(test::slurp(rec) == scn::run_scenario(scn::load_scenario(dir / "help_timeout.scn"), 4).log);
  const auto map = tmp / "marvin_home.map", world = tmp / "marvin_home.world";
  CHECK(run_cli("map-convert " + (test::data_dir() / "worlds" / "home.world").string() + " " + map.string()) == 0);
  CHECK(run_cli("map-convert " + map.string() + " " + world.string()) == 0);
  CHECK(sim::load_world(world) == sim::load_world(test::data_dir() / "worlds" / "home.world"));
  CHECK(nav::load_map(map) == sim::load_world(world));
  for (const auto& p : {failing, corrupt, rec, map, world}) std::filesystem::remove(p);
}
