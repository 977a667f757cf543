#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "holonav/serialization.hpp"
#include "holonav/tracking.hpp"

namespace holonav {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7400;     // newline-delimited JSON over TCP; 0 picks a free port
  std::uint16_t ws_port = 7401;  // same messages over WebSocket text frames
  double tick_hz = 30.0;
  TrackingNoise noise;
  /// Session log; empty keeps the session in memory only.
  std::string log_path = "holonav_session.jsonl";
  bool sync_log = false;
  std::uint64_t seed = 1;

  void validate() const;
};

ServiceConfig service_config_from_json(const Json& j);
Json service_config_to_json(const ServiceConfig& c);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment.
std::optional<std::string> process_env(const std::string& name);

/// HOLONAV_HOST, _PORT, _WS_PORT, _TICK_HZ, _SIGMA_POS, _SIGMA_ROT, _LOG, _SEED.
/// Throws FormatError naming the variable on an unparsable value.
ServiceConfig apply_env_overrides(ServiceConfig c, const EnvLookup& env = process_env);

/// Defaults, then the optional JSON file, then the environment.
ServiceConfig load_service_config(const std::optional<std::string>& path,
                                  const EnvLookup& env = process_env);

}  // namespace holonav
