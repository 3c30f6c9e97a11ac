#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <thread>

#include "marvin/bus.hpp"
#include "marvin/errors.hpp"
#include "support.hpp"

using namespace marvin;
using namespace marvin::bus;

namespace t = marvin::bus::topic;

TEST_CASE("subscriber created before a publish receives it") {
  auto bus = Bus::with_default_topics();
  auto early = bus->subscribe(t::kEvents);
  bus->set_time(1.5);
  const auto seq = bus->publish("a", t::kEvents, msg::TaskEvent{"Hello", ""});
  auto late = bus->subscribe(t::kEvents);
  const auto e = early->poll();
  REQUIRE(e);
  CHECK(e->seq == seq);
  CHECK(e->stamp == 1.5);
  CHECK(e->publisher == "a");
  CHECK(e->as<msg::TaskEvent>().kind == "Hello");
  CHECK(!late->poll());
}

TEST_CASE("wrong payload type or unknown topic is a schema error") {
  auto bus = Bus::with_default_topics();
  CHECK_THROWS_AS(bus->publish("a", t::kEvents, msg::EstopCommand{true}), SchemaError);
  CHECK_THROWS_AS(bus->publish("a", "no/such/topic", msg::EstopCommand{true}), SchemaError);
  CHECK(bus->payload_index(t::kEstop) == msg::payload_index<msg::EstopCommand>());
}

TEST_CASE("seq is per publisher and topic and strictly increasing") {
  auto bus = Bus::with_default_topics();
  auto sub = bus->subscribe(Bus::kAllTopics, 0);
  test::Gen g(31);
  for (int i = 0; i < 500; ++i) {
    const std::string pub = g.coin() ? "a" : "b";
    if (g.coin()) {
      bus->publish(pub, t::kEvents, msg::TaskEvent{"x", ""});
    } else {
      bus->publish(pub, t::kLights, msg::LightsCommand{g.coin()});
    }
  }
  std::map<std::pair<std::string, std::string>, std::uint64_t> last;
  std::size_t n = 0;
  for (const auto& e : sub->drain()) {
    auto& prev = last[{e.publisher, e.topic}];
    CHECK(e.seq == prev + 1);
    prev = e.seq;
    ++n;
  }
  CHECK(n == 500);
}

TEST_CASE("concurrent publishers: each publisher's order is preserved") {
  auto bus = Bus::with_default_topics();
  auto sub = bus->subscribe(t::kEvents, 0);
  constexpr int kPerThread = 2000;
  std::vector<std::thread> threads;
  for (int p = 0; p < 4; ++p) {
    threads.emplace_back([&bus, p] {
      for (int i = 0; i < kPerThread; ++i) bus->publish("p" + std::to_string(p), t::kEvents, msg::TaskEvent{"n", std::to_string(i)});
    });
  }
  for (auto& th : threads) th.join();
  std::map<std::string, int> next;
  std::size_t n = 0;
  for (const auto& e : sub->drain()) {
    CHECK(std::stoi(e.as<msg::TaskEvent>().detail) == next[e.publisher]);
    CHECK(e.seq == static_cast<std::uint64_t>(next[e.publisher]) + 1);
    ++next[e.publisher];
    ++n;
  }
  CHECK(n == 4 * kPerThread);
}

TEST_CASE("bounded queues drop the oldest entries") {
  auto bus = Bus::with_default_topics();
  auto sub = bus->subscribe(t::kEvents, 3);
  for (int i = 0; i < 5; ++i) bus->publish("a", t::kEvents, msg::TaskEvent{std::to_string(i), ""});
  CHECK(sub->dropped() == 2);
  const auto got = sub->drain();
  REQUIRE(got.size() == 3);
  CHECK(got.front().as<msg::TaskEvent>().kind == "2");
  CHECK(got.back().as<msg::TaskEvent>().kind == "4");
}

TEST_CASE("republish keeps publisher, seq and stamp") {
  auto bus = Bus::with_default_topics();
  auto sub = bus->subscribe(t::kEvents);
  Envelope e{std::string(t::kEvents), "recorded", 42, 7.25,
             std::make_shared<const msg::Payload>(msg::TaskEvent{"Old", "x"})};
  bus->republish(e);
  const auto got = sub->poll();
  REQUIRE(got);
  CHECK(got->publisher == "recorded");
  CHECK(got->seq == 42);
  CHECK(got->stamp == 7.25);
}

TEST_CASE("arbitration priorities") {
  const msg::VelocityCommand manual{{0.1, 0.2, 0.3}, msg::CommandSource::Manual, 1.0};
  const msg::VelocityCommand autonomous{{1.0, 0.0, 0.0}, msg::CommandSource::Autonomous, 1.0};
  CHECK(arbitrate_velocity(std::nullopt, autonomous, false, 1.1) == autonomous.twist);
  CHECK(arbitrate_velocity(manual, autonomous, false, 1.1) == manual.twist);
  CHECK(arbitrate_velocity(manual, autonomous, true, 1.1) == kin::Twist2D{});
  CHECK(arbitrate_velocity(manual, autonomous, false, 1.6) == kin::Twist2D{});  // both stale
  CHECK(arbitrate_velocity(std::nullopt, std::nullopt, false, 0.0) == kin::Twist2D{});
}

TEST_CASE("arbitration: fresh manual always wins, e-stop always zeroes") {
  test::Gen g(32);
  const ArbitrationConfig cfg;
  for (int i = 0; i < 5000; ++i) {
    const double now = g.uniform(0, 100);
    std::optional<msg::VelocityCommand> m, a;
    if (g.coin()) m = msg::VelocityCommand{g.twist(), msg::CommandSource::Manual, now - g.uniform(0, 1)};
    if (g.coin()) a = msg::VelocityCommand{g.twist(), msg::CommandSource::Autonomous, now - g.uniform(0, 1)};
    const bool estop = g.coin(0.2);
    const auto out = arbitrate_velocity(m, a, estop, now, cfg);
    if (estop) {
      CHECK(out == kin::Twist2D{});
    } else if (m && now - m->stamp <= cfg.manual_timeout) {
      CHECK(out == m->twist);
    } else if (a && now - a->stamp <= cfg.autonomous_timeout) {
      CHECK(out == a->twist);
    } else {
      CHECK(out == kin::Twist2D{});
    }
  }
}

TEST_CASE("e-stop latch publishes Stop once and is idempotent") {
  auto bus = Bus::with_default_topics();
  auto actions = bus->subscribe(t::kActions);
  EstopLatch latch(bus, "serial");
  CHECK(!latch.latched());
  CHECK(latch.set());
  CHECK(latch.set());
  CHECK(latch.latched());
  const auto got = actions->drain();
  REQUIRE(got.size() == 1);
  CHECK(got[0].as<msg::ActionRequest>().kind == msg::ActionKind::Stop);
  CHECK(!latch.reset());
  CHECK(!latch.latched());
}
