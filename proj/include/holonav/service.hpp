#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "holonav/config.hpp"
#include "holonav/serialization.hpp"
#include "holonav/session.hpp"

namespace holonav {

inline constexpr int kWireVersion = 1;

/// Envelope shared by both transports: {"v":1,"seq":n,"kind":k,"payload":{...},"reply_to":m}.
struct WireMessage {
  std::uint64_t seq = 0;
  std::string kind;
  Json payload = Json::object();
  std::optional<std::uint64_t> reply_to;
};

Json wire_to_json(const WireMessage& m);
/// Checks the envelope only (version, kind type, payload object). Throws FormatError.
WireMessage wire_from_json(const Json& j);

/// Live navigation session served to any number of clients over
/// newline-delimited JSON (TCP) and WebSocket text frames.
///
/// One thread owns the session, the simulator and every socket; clients'
/// messages are applied in arrival order. Accepted events reach the log
/// before any broadcast.
class NavigationService {
 public:
  /// `sink_override` replaces the configured log file (no reload); used for fault injection.
  explicit NavigationService(ServiceConfig config, std::shared_ptr<LogSink> sink_override = nullptr);
  ~NavigationService();

  NavigationService(const NavigationService&) = delete;
  NavigationService& operator=(const NavigationService&) = delete;

  /// Reloads the log, binds both listeners and starts the service thread.
  /// Throws on an unusable log or port.
  void start();
  /// Closes every connection and joins the service thread. Idempotent.
  void stop();
  std::uint16_t tcp_port() const;
  std::uint16_t ws_port() const;

  /// Snapshot as of the last applied event (thread-safe copy).
  SessionSnapshot snapshot() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace holonav
