#include "marvin/bus.hpp"

#include <algorithm>
#include <stdexcept>

#include "marvin/errors.hpp"

namespace marvin::msg {

std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::NavigateTo: return "navigate_to";
    case ActionKind::Follow: return "follow";
    case ActionKind::GoAway: return "go_away";
    case ActionKind::NightAssist: return "night_assist";
    case ActionKind::HelpRequest: return "help_request";
    case ActionKind::Stop: return "stop";
  }
  return "stop";
}

std::string_view to_string(ActionSource s) {
  switch (s) {
    case ActionSource::Vocal: return "vocal";
    case ActionSource::Manual: return "manual";
    case ActionSource::Monitor: return "monitor";
  }
  return "manual";
}

ActionKind action_kind_from_string(std::string_view s) {
  for (auto k : {ActionKind::NavigateTo, ActionKind::Follow, ActionKind::GoAway, ActionKind::NightAssist,
                 ActionKind::HelpRequest, ActionKind::Stop}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown action kind '" + std::string(s) + "'");
}

ActionSource action_source_from_string(std::string_view s) {
  for (auto v : {ActionSource::Vocal, ActionSource::Manual, ActionSource::Monitor}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown action source '" + std::string(s) + "'");
}

bool needs_poi(ActionKind k) { return k == ActionKind::NavigateTo || k == ActionKind::NightAssist; }

std::string_view to_string(CommandSource s) { return s == CommandSource::Manual ? "manual" : "autonomous"; }

CommandSource command_source_from_string(std::string_view s) {
  if (s == "manual") return CommandSource::Manual;
  if (s == "autonomous") return CommandSource::Autonomous;
  throw std::invalid_argument("unknown command source '" + std::string(s) + "'");
}

std::optional<std::size_t> schema_index(std::string_view name) {
  for (std::size_t i = 0; i < kSchemaNames.size(); ++i) {
    if (kSchemaNames[i] == name) return i;
  }
  return std::nullopt;
}

}  // namespace marvin::msg

namespace marvin::bus {

std::optional<Envelope> Subscription::poll() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  Envelope e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

std::vector<Envelope> Subscription::drain() {
  std::lock_guard lock(mu_);
  std::vector<Envelope> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
  queue_.clear();
  return out;
}

std::size_t Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

std::size_t Subscription::pending() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

void Subscription::push(const Envelope& e) {
  std::lock_guard lock(mu_);
  if (depth_ > 0 && queue_.size() >= depth_) {
    queue_.pop_front();
    ++dropped_;
  }
  queue_.push_back(e);
}

std::shared_ptr<Bus> Bus::with_default_topics() {
  using namespace msg;
  auto bus = std::make_shared<Bus>();
  bus->register_topic<ActionRequest>(topic::kActions);
  bus->register_topic<VelocityCommand>(topic::kCmdVelManual);
  bus->register_topic<VelocityCommand>(topic::kCmdVelAuto);
  bus->register_topic<EstopCommand>(topic::kEstop);
  bus->register_topic<DeviceRequest>(topic::kDevice);
  bus->register_topic<LightsCommand>(topic::kLights);
  bus->register_topic<Telemetry>(topic::kTelemetry);
  bus->register_topic<NavGoal>(topic::kGoal);
  bus->register_topic<PathMsg>(topic::kPath);
  bus->register_topic<sim::LidarScan>(topic::kScan);
  bus->register_topic<TrackList>(topic::kTracks);
  bus->register_topic<PersonGoalMsg>(topic::kPersonGoal);
  bus->register_topic<TaskEvent>(topic::kEvents);
  bus->register_topic<VocalResponse>(topic::kResponse);
  bus->register_topic<UtteranceFrame>(topic::kUtterance);
  bus->register_topic<UtteranceText>(topic::kUtteranceText);
  bus->register_topic<HelpReply>(topic::kHelpReply);
  bus->register_topic<TriggerWord>(topic::kTriggerWord);
  bus->register_topic<MapMsg>(topic::kMap);
  return bus;
}

void Bus::register_topic(std::string_view name, std::size_t payload_index) {
  if (name.empty() || name == kAllTopics) throw std::invalid_argument("invalid topic name");
  if (payload_index >= std::variant_size_v<msg::Payload>) throw std::invalid_argument("invalid payload index");
  std::lock_guard lock(mu_);
  auto [it, inserted] = topics_.emplace(std::string(name), payload_index);
  if (!inserted && it->second != payload_index) {
    throw SchemaError("topic '" + std::string(name) + "' already registered with another payload type");
  }
}

std::optional<std::size_t> Bus::payload_index(std::string_view topic) const {
  std::lock_guard lock(mu_);
  auto it = topics_.find(topic);
  if (it == topics_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<std::string, std::size_t>> Bus::registry() const {
  std::lock_guard lock(mu_);
  return {topics_.begin(), topics_.end()};
}

std::uint64_t Bus::publish(std::string_view publisher, std::string_view topic, msg::Payload payload) {
  std::lock_guard lock(mu_);
  auto it = topics_.find(topic);
  if (it == topics_.end()) throw SchemaError("unknown topic '" + std::string(topic) + "'");
  if (it->second != payload.index()) {
    throw SchemaError("topic '" + std::string(topic) + "' carries " + std::string(msg::kSchemaNames[it->second]) +
                      ", got " + std::string(msg::kSchemaNames[payload.index()]));
  }
  Envelope e;
  e.topic = std::string(topic);
  e.publisher = std::string(publisher);
  e.seq = ++seqs_[{e.publisher, e.topic}];
  e.stamp = now_;
  e.payload = std::make_shared<const msg::Payload>(std::move(payload));
  deliver(e);
  return e.seq;
}

void Bus::republish(const Envelope& e) {
  std::lock_guard lock(mu_);
  auto it = topics_.find(e.topic);
  if (it == topics_.end() || !e.payload || it->second != e.payload->index()) {
    throw SchemaError("recorded envelope does not match topic '" + e.topic + "'");
  }
  auto& seq = seqs_[{e.publisher, e.topic}];
  seq = std::max(seq, e.seq);
  deliver(e);
}

void Bus::deliver(const Envelope& e) {
  for (const std::string_view key : {std::string_view(e.topic), kAllTopics}) {
    auto it = subs_.find(key);
    if (it == subs_.end()) continue;
    auto& list = it->second;
    std::erase_if(list, [](const auto& w) { return w.expired(); });
    for (const auto& w : list) {
      if (auto s = w.lock()) s->push(e);
    }
  }
}

std::shared_ptr<Subscription> Bus::subscribe(std::string_view topic, std::size_t depth) {
  std::lock_guard lock(mu_);
  if (topic != kAllTopics && !topics_.contains(topic)) {
    throw SchemaError("unknown topic '" + std::string(topic) + "'");
  }
  auto sub = std::make_shared<Subscription>(std::string(topic), depth);
  subs_[std::string(topic)].push_back(sub);
  return sub;
}

void Bus::set_time(double t) {
  std::lock_guard lock(mu_);
  now_ = t;
}

double Bus::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

kin::Twist2D arbitrate_velocity(const std::optional<msg::VelocityCommand>& manual,
                                const std::optional<msg::VelocityCommand>& autonomous, bool estop_latched,
                                double now, const ArbitrationConfig& config) {
  if (estop_latched) return {};
  if (manual && now - manual->stamp <= config.manual_timeout) return manual->twist;
  if (autonomous && now - autonomous->stamp <= config.autonomous_timeout) return autonomous->twist;
  return {};
}

bool EstopLatch::set() {
  if (latched_) return latched_;
  latched_ = true;
  bus_->publish(publisher_, topic::kActions,
                msg::ActionRequest{msg::ActionKind::Stop, "", msg::ActionSource::Manual});
  return latched_;
}

bool EstopLatch::reset() {
  latched_ = false;
  return latched_;
}

}  // namespace marvin::bus
