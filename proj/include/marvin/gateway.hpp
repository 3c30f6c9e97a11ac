#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "marvin/bus.hpp"
#include "marvin/wire.hpp"

/// WebSocket bridge between bus topics and remote clients. Clients speak the
/// JSON protocol documented in docs/protocol.md. Network I/O runs on its own
/// thread; the simulation thread hands messages across with `pump` and
/// `broadcast`, so the bus itself is only touched by the simulation thread.
namespace marvin::gw {

struct GatewayOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 0;            // 0 picks a free port
  std::size_t client_queue = 4096;   // outbound frames per client before the oldest is dropped
  std::size_t inbound_queue = 1024;  // pending client commands before new ones are refused
  bool accept_commands = true;       // false while replaying a log
};

class Gateway {
 public:
  /// Binds and starts serving. Throws std::runtime_error when the address or port is unavailable.
  explicit Gateway(GatewayOptions options = {});
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  std::uint16_t port() const;

  /// Publishes queued client commands on `bus` (publisher "gateway") and returns how many were published.
  std::size_t pump(bus::Bus& bus);
  /// Sends envelopes to every client subscribed to their topic.
  void broadcast(const std::vector<bus::Envelope>& envelopes);
  void broadcast(const bus::Envelope& envelope);

  std::size_t clients() const;
  /// Clients holding at least one subscription.
  std::size_t subscribers() const;
  /// Frames dropped because a client could not keep up.
  std::size_t dropped() const;

  void stop();

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

/// Streams a parsed log to the gateway's clients with the original stamps,
/// pacing by `rate` simulated seconds per wall second (0 = no pacing).
/// Returns early when `cancel` becomes true.
void replay(const wire::LogContents& log, Gateway& gateway, double rate, const std::atomic<bool>* cancel = nullptr);

}  // namespace marvin::gw
