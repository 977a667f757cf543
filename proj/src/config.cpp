#include "holonav/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

#include "holonav/errors.hpp"

namespace holonav {

namespace {

std::uint16_t port_from(long long v, const std::string& field) {
  if (v < 0 || v > 65535) throw FormatError(field, "port must be in [0, 65535]");
  return static_cast<std::uint16_t>(v);
}

template <typename T>
T parse_number(const std::string& text, const std::string& field) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError(field, "cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace

void ServiceConfig::validate() const {
  if (host.empty()) throw FormatError("host", "must not be empty");
  if (!(tick_hz > 0.0 && tick_hz <= 1000.0)) throw FormatError("tick_hz", "must be in (0, 1000]");
  if (!(noise.sigma_pos >= 0.0) || !std::isfinite(noise.sigma_pos)) {
    throw FormatError("noise.sigma_pos_mm", "must be a non-negative number");
  }
  if (!(noise.sigma_rot >= 0.0) || !std::isfinite(noise.sigma_rot)) {
    throw FormatError("noise.sigma_rot_rad", "must be a non-negative number");
  }
}

ServiceConfig service_config_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("config", "expected a JSON object");
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    if (j.contains("port")) c.port = port_from(j.at("port").get<long long>(), "port");
    if (j.contains("ws_port")) c.ws_port = port_from(j.at("ws_port").get<long long>(), "ws_port");
    c.tick_hz = j.value("tick_hz", c.tick_hz);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      c.noise.sigma_pos = n.value("sigma_pos_mm", c.noise.sigma_pos);
      c.noise.sigma_rot = n.value("sigma_rot_rad", c.noise.sigma_rot);
    }
    c.log_path = j.value("log_path", c.log_path);
    c.sync_log = j.value("sync_log", c.sync_log);
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw FormatError("config", e.what());
  }
  c.validate();
  return c;
}

Json service_config_to_json(const ServiceConfig& c) {
  return Json{{"host", c.host},
              {"port", c.port},
              {"ws_port", c.ws_port},
              {"tick_hz", c.tick_hz},
              {"noise", {{"sigma_pos_mm", c.noise.sigma_pos}, {"sigma_rot_rad", c.noise.sigma_rot}}},
              {"log_path", c.log_path},
              {"sync_log", c.sync_log},
              {"seed", c.seed}};
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

ServiceConfig apply_env_overrides(ServiceConfig c, const EnvLookup& env) {
  if (auto v = env("HOLONAV_HOST")) c.host = *v;
  if (auto v = env("HOLONAV_PORT")) c.port = port_from(parse_number<long long>(*v, "HOLONAV_PORT"), "HOLONAV_PORT");
  if (auto v = env("HOLONAV_WS_PORT")) {
    c.ws_port = port_from(parse_number<long long>(*v, "HOLONAV_WS_PORT"), "HOLONAV_WS_PORT");
  }
  if (auto v = env("HOLONAV_TICK_HZ")) c.tick_hz = parse_number<double>(*v, "HOLONAV_TICK_HZ");
  if (auto v = env("HOLONAV_SIGMA_POS")) c.noise.sigma_pos = parse_number<double>(*v, "HOLONAV_SIGMA_POS");
  if (auto v = env("HOLONAV_SIGMA_ROT")) c.noise.sigma_rot = parse_number<double>(*v, "HOLONAV_SIGMA_ROT");
  if (auto v = env("HOLONAV_LOG")) c.log_path = *v;
  if (auto v = env("HOLONAV_SEED")) c.seed = parse_number<std::uint64_t>(*v, "HOLONAV_SEED");
  c.validate();
  return c;
}

ServiceConfig load_service_config(const std::optional<std::string>& path, const EnvLookup& env) {
  ServiceConfig c = path ? service_config_from_json(read_json_file(*path)) : ServiceConfig{};
  return apply_env_overrides(std::move(c), env);
}

}  // namespace holonav
