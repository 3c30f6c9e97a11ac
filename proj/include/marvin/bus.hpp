#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "marvin/messages.hpp"

namespace marvin::bus {

/// Names of the standard topics.
namespace topic {
inline constexpr std::string_view kActions = "actions";
inline constexpr std::string_view kCmdVelManual = "cmd_vel/manual";
inline constexpr std::string_view kCmdVelAuto = "cmd_vel/auto";
inline constexpr std::string_view kEstop = "estop";
inline constexpr std::string_view kDevice = "device";
inline constexpr std::string_view kLights = "lights";
inline constexpr std::string_view kTelemetry = "telemetry";
inline constexpr std::string_view kGoal = "goal";
inline constexpr std::string_view kPath = "path";
inline constexpr std::string_view kScan = "scan";
inline constexpr std::string_view kTracks = "tracks";
inline constexpr std::string_view kPersonGoal = "person_goal";
inline constexpr std::string_view kEvents = "events";
inline constexpr std::string_view kResponse = "response";
inline constexpr std::string_view kUtterance = "utterance";
inline constexpr std::string_view kUtteranceText = "utterance/text";
inline constexpr std::string_view kHelpReply = "help_reply";
inline constexpr std::string_view kTriggerWord = "trigger_word";
inline constexpr std::string_view kMap = "map";
}  // namespace topic

struct Envelope {
  std::string topic;
  std::string publisher;
  std::uint64_t seq = 0;
  double stamp = 0.0;
  std::shared_ptr<const msg::Payload> payload;

  template <class T>
  const T& as() const {
    return std::get<T>(*payload);
  }
  template <class T>
  bool is() const {
    return std::holds_alternative<T>(*payload);
  }
};

/// Bounded FIFO of envelopes. Overflow drops the oldest entry.
class Subscription {
 public:
  Subscription(std::string topic, std::size_t depth) : topic_(std::move(topic)), depth_(depth) {}

  std::optional<Envelope> poll();
  std::vector<Envelope> drain();
  std::size_t dropped() const;
  std::size_t pending() const;
  const std::string& topic() const { return topic_; }

 private:
  friend class Bus;
  void push(const Envelope& e);

  std::string topic_;
  std::size_t depth_;
  mutable std::mutex mu_;
  std::deque<Envelope> queue_;
  std::size_t dropped_ = 0;
};

/// In-process publish/subscribe with typed topics. Thread-safe; fan-out
/// happens inside publish, so every subscriber sees each publisher's
/// messages in publication order.
class Bus {
 public:
  static constexpr std::size_t kDefaultDepth = 64;
  static constexpr std::string_view kAllTopics = "*";

  /// A bus with every standard topic registered.
  static std::shared_ptr<Bus> with_default_topics();

  void register_topic(std::string_view name, std::size_t payload_index);
  template <class T>
  void register_topic(std::string_view name) {
    register_topic(name, msg::payload_index<T>());
  }
  std::optional<std::size_t> payload_index(std::string_view topic) const;
  std::vector<std::pair<std::string, std::size_t>> registry() const;

  /// Throws SchemaError when the topic is unknown or the payload type differs from its registration.
  std::uint64_t publish(std::string_view publisher, std::string_view topic, msg::Payload payload);
  /// Re-injects a recorded envelope keeping its publisher, seq and stamp.
  void republish(const Envelope& e);

  /// `topic` may be kAllTopics to receive everything.
  std::shared_ptr<Subscription> subscribe(std::string_view topic, std::size_t depth = kDefaultDepth);

  void set_time(double t);
  double now() const;

 private:
  void deliver(const Envelope& e);

  mutable std::mutex mu_;
  std::map<std::string, std::size_t, std::less<>> topics_;
  std::map<std::pair<std::string, std::string>, std::uint64_t> seqs_;
  std::map<std::string, std::vector<std::weak_ptr<Subscription>>, std::less<>> subs_;
  double now_ = 0.0;
};

// --- serial node arbitration ------------------------------------------------------

struct ArbitrationConfig {
  double manual_timeout = 0.5;
  double autonomous_timeout = 0.5;
};

/// Picks the twist delivered to the base: zero under e-stop, a fresh manual
/// command over a fresh autonomous one, zero when neither is fresh.
kin::Twist2D arbitrate_velocity(const std::optional<msg::VelocityCommand>& manual,
                                const std::optional<msg::VelocityCommand>& autonomous, bool estop_latched,
                                double now, const ArbitrationConfig& config = {});

/// Latched emergency stop. Setting it publishes a Stop request on the Actions topic.
class EstopLatch {
 public:
  EstopLatch(std::shared_ptr<Bus> bus, std::string publisher)
      : bus_(std::move(bus)), publisher_(std::move(publisher)) {}

  bool set();
  bool reset();
  bool latched() const { return latched_; }

 private:
  std::shared_ptr<Bus> bus_;
  std::string publisher_;
  bool latched_ = false;
};

}  // namespace marvin::bus
