#include "marvin/gateway.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <future>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <thread>

#include "marvin/errors.hpp"

namespace marvin::gw {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using wire::Json;

namespace {

constexpr std::string_view kPublisher = "gateway";

Json error_reply(std::string_view code, std::string_view message) {
  return {{"op", "error"}, {"code", code}, {"message", message}};
}

class Session;

}  // namespace

struct Gateway::Impl : std::enable_shared_from_this<Gateway::Impl> {
  GatewayOptions options;
  std::shared_ptr<bus::Bus> registry = bus::Bus::with_default_topics();
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  std::atomic<bool> stopped{false};

  // Touched on the I/O thread only.
  std::vector<std::weak_ptr<Session>> sessions;

  mutable std::mutex mu;
  std::deque<std::pair<std::string, msg::Payload>> inbound;
  std::atomic<std::size_t> client_count{0};
  std::atomic<std::size_t> subscriber_count{0};
  std::atomic<std::size_t> dropped{0};

  void accept();
  void fanout(const std::string& topic, const std::shared_ptr<const std::string>& frame);
  void recount();
  Json handle(const std::string& text, std::set<std::string, std::less<>>& topics);
};

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, std::shared_ptr<Gateway::Impl> gw) : ws_(std::move(socket)), gw_(std::move(gw)) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->read();
    });
  }

  bool wants(std::string_view topic) const {
    return topics_.contains(topic) || topics_.contains(bus::Bus::kAllTopics);
  }
  bool subscribed() const { return !topics_.empty(); }
  bool open() const { return open_; }
  bool busy() const { return open_ || writing_ || closing_; }

  void send(std::shared_ptr<const std::string> frame) {
    if (!open_) return;
    if (queue_.size() >= gw_->options.client_queue) {
      // Keep the frame being written; drop the oldest one waiting behind it.
      queue_.erase(queue_.begin() + (writing_ ? 1 : 0));
      ++gw_->dropped;
    }
    queue_.push_back(std::move(frame));
    if (!writing_) write();
  }

  /// Closes after the queued frames have been written.
  void close() {
    if (!open_) return;
    open_ = false;
    closing_ = true;
    if (!writing_) finish_close();
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        if (self->open_) {
          self->open_ = false;
          self->queue_.clear();
        }
        self->gw_->recount();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      const Json reply = self->gw_->handle(text, self->topics_);
      self->gw_->recount();
      self->send(std::make_shared<const std::string>(reply.dump()));
      self->read();
    });
  }

  void finish_close() {
    ws_.async_close(websocket::close_code::going_away, [self = shared_from_this()](beast::error_code) {
      self->closing_ = false;
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

  void write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->queue_.pop_front();
      if (ec) {
        self->writing_ = false;
        self->open_ = false;
        self->closing_ = false;
        self->queue_.clear();
        return;
      }
      if (!self->queue_.empty()) {
        self->write();
        return;
      }
      self->writing_ = false;
      if (self->closing_) self->finish_close();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Gateway::Impl> gw_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  std::set<std::string, std::less<>> topics_;
  bool writing_ = false;
  bool open_ = false;
  bool closing_ = false;
};

}  // namespace

void Gateway::Impl::accept() {
  acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    auto session = std::make_shared<Session>(std::move(socket), self);
    self->sessions.push_back(session);
    session->start();
    self->recount();
    self->accept();
  });
}

void Gateway::Impl::recount() {
  std::erase_if(sessions, [](const std::weak_ptr<Session>& w) {
    auto s = w.lock();
    return !s;
  });
  std::size_t n = 0, subs = 0;
  for (const auto& w : sessions) {
    if (auto s = w.lock(); s && s->open()) {
      ++n;
      if (s->subscribed()) ++subs;
    }
  }
  client_count = n;
  subscriber_count = subs;
}

void Gateway::Impl::fanout(const std::string& topic, const std::shared_ptr<const std::string>& frame) {
  for (const auto& w : sessions) {
    if (auto s = w.lock(); s && s->wants(topic)) s->send(frame);
  }
}

Json Gateway::Impl::handle(const std::string& text, std::set<std::string, std::less<>>& topics) {
  Json req;
  try {
    req = Json::parse(text);
  } catch (const Json::parse_error& e) {
    return error_reply("parse", e.what());
  }
  if (!req.is_object() || !req.contains("op") || !req["op"].is_string()) {
    return error_reply("schema", "request must be an object with a string 'op'");
  }
  const Json id = req.contains("id") ? req["id"] : Json();
  auto with_id = [&](Json reply) {
    if (!id.is_null()) reply["id"] = id;
    return reply;
  };
  const std::string op = req["op"].get<std::string>();

  if (op == "subscribe" || op == "unsubscribe") {
    if (!req.contains("topics") || !req["topics"].is_array()) {
      return with_id(error_reply("schema", "'topics' must be an array of topic names"));
    }
    std::vector<std::string> names;
    for (const auto& t : req["topics"]) {
      if (!t.is_string()) return with_id(error_reply("schema", "'topics' must be an array of topic names"));
      const auto name = t.get<std::string>();
      if (name != bus::Bus::kAllTopics && !registry->payload_index(name)) {
        return with_id(error_reply("unknown_topic", "unknown topic '" + name + "'"));
      }
      names.push_back(name);
    }
    for (const auto& name : names) {
      if (op == "subscribe") {
        topics.insert(name);
      } else {
        topics.erase(name);
      }
    }
    return with_id({{"op", "subscribed"}, {"topics", std::vector<std::string>(topics.begin(), topics.end())}});
  }

  if (op == "topics") {
    Json list = Json::object();
    for (const auto& [name, idx] : registry->registry()) {
      list[name] = {{"type", msg::kSchemaNames[idx]}, {"command", wire::is_command_topic(name)}};
    }
    return with_id({{"op", "topics"}, {"topics", list}});
  }

  if (op == "publish") {
    if (!req.contains("topic") || !req["topic"].is_string()) {
      return with_id(error_reply("schema", "'topic' must be a string"));
    }
    const std::string topic = req["topic"].get<std::string>();
    if (!options.accept_commands) return with_id(error_reply("replay", "publishing is disabled during replay"));
    if (!wire::is_command_topic(topic)) {
      return with_id(error_reply("forbidden", "'" + topic + "' is not a command topic"));
    }
    if (!req.contains("payload")) return with_id(error_reply("schema", "missing 'payload'"));
    const auto idx = registry->payload_index(topic);
    msg::Payload payload;
    try {
      payload = wire::from_json(msg::kSchemaNames[*idx], req["payload"]);
    } catch (const SchemaError& e) {
      return with_id(error_reply("schema", e.what()));
    }
    {
      std::lock_guard lock(mu);
      if (inbound.size() >= options.inbound_queue) return with_id(error_reply("busy", "command queue is full"));
      inbound.emplace_back(topic, std::move(payload));
    }
    return with_id({{"op", "ack"}, {"topic", topic}});
  }

  return with_id(error_reply("unknown_op", "unknown op '" + op + "'"));
}

Gateway::Gateway(GatewayOptions options) : impl_(std::make_shared<Impl>()) {
  impl_->options = std::move(options);
  beast::error_code ec;
  const auto address = net::ip::make_address(impl_->options.address, ec);
  if (ec) throw std::runtime_error("invalid address '" + impl_->options.address + "'");
  const tcp::endpoint endpoint{address, impl_->options.port};
  auto& acc = impl_->acceptor;
  acc.open(endpoint.protocol(), ec);
  if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(endpoint, ec);
  if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw std::runtime_error("cannot listen on " + impl_->options.address + ":" +
                             std::to_string(impl_->options.port) + ": " + ec.message());
  }
  impl_->accept();
  impl_->thread = std::thread([impl = impl_] { impl->ioc.run(); });
}

Gateway::~Gateway() { stop(); }

void Gateway::stop() {
  if (impl_->stopped.exchange(true)) return;
  net::post(impl_->ioc, [impl = impl_] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    for (const auto& w : impl->sessions) {
      if (auto s = w.lock()) s->close();
    }
  });
  // Wait briefly for the close handshakes before tearing the loop down.
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(1);
  while (std::chrono::steady_clock::now() < deadline) {
    // Shared so a probe still queued when the loop stops can complete safely in the final poll.
    auto idle = std::make_shared<std::promise<bool>>();
    auto done = idle->get_future();
    net::post(impl_->ioc, [impl = impl_, idle] {
      impl->recount();
      idle->set_value(std::none_of(impl->sessions.begin(), impl->sessions.end(), [](const auto& w) {
        auto s = w.lock();
        return s && s->busy();
      }));
    });
    if (done.wait_for(std::chrono::milliseconds(200)) == std::future_status::ready && done.get()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  net::post(impl_->ioc, [impl = impl_] { impl->ioc.stop(); });
  if (impl_->thread.joinable()) impl_->thread.join();
  // Run the aborted completions so sessions release their reference to the gateway.
  impl_->ioc.restart();
  impl_->ioc.poll();
  impl_->sessions.clear();
}

std::uint16_t Gateway::port() const { return impl_->acceptor.local_endpoint().port(); }

std::size_t Gateway::pump(bus::Bus& bus) {
  std::deque<std::pair<std::string, msg::Payload>> batch;
  {
    std::lock_guard lock(impl_->mu);
    batch.swap(impl_->inbound);
  }
  for (auto& [topic, payload] : batch) bus.publish(kPublisher, topic, std::move(payload));
  return batch.size();
}

void Gateway::broadcast(const bus::Envelope& envelope) { broadcast(std::vector<bus::Envelope>{envelope}); }

void Gateway::broadcast(const std::vector<bus::Envelope>& envelopes) {
  if (envelopes.empty() || impl_->stopped) return;
  std::vector<std::pair<std::string, std::shared_ptr<const std::string>>> frames;
  frames.reserve(envelopes.size());
  for (const auto& e : envelopes) {
    Json j = wire::envelope_to_json(e);
    j["op"] = "message";
    frames.emplace_back(e.topic, std::make_shared<const std::string>(j.dump()));
  }
  net::post(impl_->ioc, [impl = impl_, frames = std::move(frames)] {
    for (const auto& [topic, frame] : frames) impl->fanout(topic, frame);
  });
}

std::size_t Gateway::clients() const { return impl_->client_count; }
std::size_t Gateway::subscribers() const { return impl_->subscriber_count; }
std::size_t Gateway::dropped() const { return impl_->dropped; }

void replay(const wire::LogContents& log, Gateway& gateway, double rate, const std::atomic<bool>* cancel) {
  const auto start = std::chrono::steady_clock::now();
  const double t0 = log.envelopes.empty() ? 0.0 : log.envelopes.front().stamp;
  std::vector<bus::Envelope> batch;
  for (std::size_t i = 0; i < log.envelopes.size(); ++i) {
    if (cancel && *cancel) return;
    const auto& e = log.envelopes[i];
    batch.push_back(e);
    const bool last_of_stamp = i + 1 == log.envelopes.size() || log.envelopes[i + 1].stamp != e.stamp;
    if (!last_of_stamp) continue;
    if (rate > 0.0) {
      std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                std::chrono::duration<double>((e.stamp - t0) / rate)));
    }
    gateway.broadcast(batch);
    batch.clear();
  }
}

}  // namespace marvin::gw
