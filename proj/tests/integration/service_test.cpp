#include "holonav/service.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "holonav/config.hpp"
#include "holonav/errors.hpp"
#include "holonav/scene.hpp"
#include "holonav/session_log.hpp"
#include "wire_client.hpp"

using namespace holonav;
using holonav::testing::TcpClient;
using holonav::testing::WsClient;

namespace {

std::string temp_log(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("holonav_service_" + name + ".jsonl");
  std::filesystem::remove(p);
  return p.string();
}

ServiceConfig test_config(const std::string& log) {
  ServiceConfig c;
  c.port = 0;
  c.ws_port = 0;
  c.log_path = log;
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json command_of(const std::string& type) { return Json{{"type", type}}; }

void drive_to_navigating(holonav::testing::WireClient& c) {
  for (const char* t : {"LoadVolume", "DetectFiducials", "Calibrate", "Register", "StartNavigation"}) {
    const auto seq = c.command(command_of(t));
    const Json reply = c.reply_to(seq);
    REQUIRE(reply.at("kind") == "state_snapshot");
  }
}

Json triangle(const std::string& id) {
  return Json{{"id", id},
              {"kind", "risk_zone"},
              {"label", "vessel"},
              {"author", "remote"},
              {"points", {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}}}};
}

class ThrowingSink : public LogSink {
 public:
  void append(const LogEntry&) override { throw std::runtime_error("disk full"); }
};

}  // namespace

TEST_CASE("connect: first message is a version-1 state snapshot") {
  NavigationService svc(test_config(""));
  svc.start();
  TcpClient tcp(svc.tcp_port());
  const Json hello = tcp.next();
  CHECK(hello.at("v") == 1);
  CHECK(hello.at("seq") == 1);
  CHECK(hello.at("kind") == "state_snapshot");
  CHECK(hello.at("payload").at("state") == "Idle");
  WsClient ws(svc.ws_port());
  CHECK(ws.next().at("payload").at("state") == "Idle");
}

TEST_CASE("command replies: snapshot on accept, rejection to the sender only") {
  NavigationService svc(test_config(""));
  svc.start();
  TcpClient a(svc.tcp_port());
  WsClient b(svc.ws_port());
  a.next();
  b.next();

  const auto bad = a.command(command_of("StartNavigation"));
  const Json rejected = a.next();
  CHECK(rejected.at("kind") == "command_rejected");
  CHECK(rejected.at("reply_to") == bad);
  CHECK(rejected.at("payload").at("reason").get<std::string>().find("requires Registered") !=
        std::string::npos);

  const auto load = a.command(command_of("LoadVolume"));
  const Json reply = a.next();
  CHECK(reply.at("kind") == "state_snapshot");
  CHECK(reply.at("reply_to") == load);
  CHECK(reply.at("payload").at("state") == "VolumeLoaded");
  CHECK(reply.at("payload").at("volume_source") == "phantom:default");

  // B never saw the rejection; its next message is the broadcast, without reply_to.
  const Json seen_by_b = b.next();
  CHECK(seen_by_b.at("kind") == "state_snapshot");
  CHECK_FALSE(seen_by_b.contains("reply_to"));
  CHECK(seen_by_b.at("payload") == reply.at("payload"));
}

TEST_CASE("simulated workflow reaches Navigating with a registration near the truth") {
  NavigationService svc(test_config(""));
  svc.start();
  TcpClient c(svc.tcp_port());
  c.next();
  drive_to_navigating(c);
  const auto snap = svc.snapshot();
  CHECK(snap.state == WorkflowState::Navigating);
  CHECK(snap.fiducials.points.size() == 6);
  REQUIRE(snap.registration.has_value());
  const auto truth = SceneConfig::default_scene();
  CHECK(translation_distance(snap.registration->world_from_patient, truth.world_from_patient) < 3.0);
  CHECK((*snap.tip_offset - truth.pointer_tip).norm() < 1.0);
  CHECK(c.seq_monotone());
}

TEST_CASE("annotation fan-out to two clients over both framings") {
  NavigationService svc(test_config(""));
  svc.start();
  TcpClient a(svc.tcp_port());
  WsClient b(svc.ws_port());
  a.next();
  b.next();
  drive_to_navigating(a);
  for (int i = 0; i < 5; ++i) b.next();

  const auto seq = b.send("annotation_event", triangle("R1"));
  const Json own = b.next();
  CHECK(own.at("kind") == "annotation_event");
  CHECK(own.at("reply_to") == seq);
  CHECK(own.at("payload").at("id") == "R1");
  CHECK(own.at("payload").at("author") == "remote");
  const Json other = a.next();
  CHECK(other.at("kind") == "annotation_event");
  CHECK(other.at("payload") == own.at("payload"));
  CHECK(a.next().at("payload").at("annotations").size() == 1);
  CHECK(b.next().at("kind") == "state_snapshot");

  // A duplicate id changes nothing: the sender alone gets the current snapshot.
  const auto dup = b.send("annotation_event", triangle("R1"));
  const Json dup_reply = b.next();
  CHECK(dup_reply.at("kind") == "state_snapshot");
  CHECK(dup_reply.at("reply_to") == dup);
  CHECK(svc.snapshot().annotations.size() == 1);
  CHECK(a.seq_monotone());
  CHECK(b.seq_monotone());
}

TEST_CASE("malformed frames get an error and the connection stays usable") {
  NavigationService svc(test_config(""));
  svc.start();
  TcpClient c(svc.tcp_port());
  c.next();
  c.send_raw("this is not json");
  Json e = c.next();
  CHECK(e.at("kind") == "error");
  c.send_raw(R"({"v":2,"seq":1,"kind":"command","payload":{"type":"LoadVolume"}})");
  e = c.next();
  CHECK(e.at("kind") == "error");
  CHECK(e.at("payload").at("field") == "v");
  c.send_raw(R"({"v":1,"seq":2,"kind":"command","payload":{"type":"Fly"}})");
  CHECK(c.next().at("kind") == "error");
  c.send_raw(R"({"v":1,"seq":3,"kind":"telepathy","payload":{}})");
  CHECK(c.next().at("kind") == "error");
  c.send_raw(R"([1,2,3])");
  CHECK(c.next().at("kind") == "error");
  const auto seq = c.command(command_of("LoadVolume"));
  // Client seq restarted at 1, below the 3 already seen: discarded.
  const Json stale = c.next();
  CHECK(stale.at("kind") == "error");
  CHECK(stale.at("payload").at("field") == "seq");
  c.send_raw(Json{{"v", 1}, {"seq", seq + 10}, {"kind", "command"}, {"payload", command_of("LoadVolume")}}.dump());
  const Json ok = c.next();
  CHECK(ok.at("kind") == "state_snapshot");
  CHECK(ok.at("payload").at("state") == "VolumeLoaded");

  WsClient w(svc.ws_port());
  w.next();
  w.send_raw("{{{");
  CHECK(w.next().at("kind") == "error");
  w.command(command_of("ToggleModelVisibility"));
  CHECK(w.next().at("payload").at("model_visible") == false);
}

TEST_CASE("tracking samples stream at the tick rate") {
  auto config = test_config("");
  config.tick_hz = 30.0;
  NavigationService svc(config);
  svc.start();
  TcpClient c(svc.tcp_port());
  c.next();
  std::map<std::string, int> per_tracker;
  const auto t0 = std::chrono::steady_clock::now();
  while (std::chrono::steady_clock::now() - t0 < std::chrono::seconds(1)) {
    const Json m = c.next_any();
    if (m.at("kind") == "tracking_sample") ++per_tracker[m.at("payload").at("tracker")];
  }
  CHECK(per_tracker["glasses"] >= 24);
  CHECK(per_tracker["glasses"] <= 36);
  CHECK(per_tracker["pointer"] == doctest::Approx(per_tracker["glasses"]).epsilon(0.1));
}

TEST_CASE("write-ahead: every snapshot a client sees is already in the log") {
  const auto log = temp_log("wal");
  NavigationService svc(test_config(log));
  svc.start();
  TcpClient c(svc.tcp_port());
  c.next();
  for (const char* t : {"LoadVolume", "DetectFiducials", "Calibrate", "Register", "StartNavigation"}) {
    const auto seq = c.command(command_of(t));
    const Json reply = c.reply_to(seq);
    const auto last_seq = reply.at("payload").at("last_seq").get<std::uint64_t>();
    const auto entries = parse_log(read_file(log));
    REQUIRE_FALSE(entries.empty());
    CHECK(entries.back().seq == last_seq);
  }
}

TEST_CASE("fault injection: a failing log write blocks the broadcast") {
  auto sink = std::make_shared<ThrowingSink>();
  NavigationService svc(test_config(""), sink);
  svc.start();
  TcpClient a(svc.tcp_port());
  TcpClient b(svc.tcp_port());
  a.next();
  b.next();
  const auto seq = a.command(command_of("LoadVolume"));
  const Json e = a.next();
  CHECK(e.at("kind") == "error");
  CHECK(e.at("reply_to") == seq);
  CHECK(svc.snapshot().state == WorkflowState::Idle);
  // B hears nothing but tracking samples.
  bool only_tracking = true;
  for (int i = 0; i < 20; ++i) {
    if (b.next_any().at("kind") != "tracking_sample") only_tracking = false;
  }
  CHECK(only_tracking);
}

TEST_CASE("restart reloads the log; replay matches the live session") {
  const auto log = temp_log("restart");
  Json last;
  {
    NavigationService svc(test_config(log));
    svc.start();
    TcpClient c(svc.tcp_port());
    c.next();
    drive_to_navigating(c);
    c.send("annotation_event", triangle("R9"));
    c.next();
    last = c.next().at("payload");
    svc.stop();
  }
  CHECK(snapshot_to_json(reload_session(log).snapshot()) == last);

  // Torn tail from a crash mid-write.
  std::ofstream(log, std::ios::app) << R"({"v":1,"seq":99,"ev)";
  NavigationService again(test_config(log));
  again.start();
  TcpClient c(again.tcp_port());
  CHECK(c.next().at("payload") == last);
  const auto seq = c.command(Json{{"type", "SetOpacity"}, {"value", 0.4}});
  CHECK(c.reply_to(seq).at("payload").at("opacity") == 0.4);
  again.stop();
  const auto reloaded = reload_session(log);
  CHECK(reloaded.snapshot().opacity == 0.4);
  CHECK(reloaded.snapshot().last_seq == last.at("last_seq").get<std::uint64_t>() + 1);
}

TEST_CASE("startup fails loudly on an unwritable log") {
  NavigationService svc(test_config("/nonexistent-dir/session.jsonl"));
  CHECK_THROWS_AS(svc.start(), FormatError);
}

TEST_CASE("wire envelope round trip and validation") {
  const WireMessage m{7, "command", Json{{"type", "Reset"}}, 3};
  const Json j = wire_to_json(m);
  CHECK(j.at("v") == 1);
  const WireMessage back = wire_from_json(j);
  CHECK(back.seq == 7);
  CHECK(back.kind == "command");
  CHECK(back.payload == m.payload);
  CHECK(back.reply_to == std::optional<std::uint64_t>(3));
  CHECK_THROWS_AS(wire_from_json(Json{{"v", 1}, {"kind", "command"}}), FormatError);
  CHECK_THROWS_AS(wire_from_json(Json{{"v", 1}, {"seq", -1}, {"kind", "command"}}), FormatError);
  CHECK_THROWS_AS(wire_from_json(Json{{"v", 1}, {"seq", 1}, {"kind", "command"}, {"payload", 5}}),
                  FormatError);
}

TEST_CASE("service config: file, then environment") {
  const auto path = std::filesystem::temp_directory_path() / "holonav_service_cfg.json";
  std::ofstream(path) << R"({"port": 9000, "tick_hz": 10, "noise": {"sigma_pos_mm": 0.2}})";
  std::map<std::string, std::string> env{{"HOLONAV_PORT", "9100"}, {"HOLONAV_SIGMA_ROT", "0.002"}};
  const EnvLookup lookup = [&](const std::string& k) -> std::optional<std::string> {
    auto it = env.find(k);
    if (it == env.end()) return std::nullopt;
    return it->second;
  };
  const auto c = load_service_config(path.string(), lookup);
  CHECK(c.port == 9100);
  CHECK(c.ws_port == 7401);
  CHECK(c.tick_hz == 10.0);
  CHECK(c.noise.sigma_pos == 0.2);
  CHECK(c.noise.sigma_rot == 0.002);

  env["HOLONAV_TICK_HZ"] = "fast";
  try {
    load_service_config(path.string(), lookup);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.field() == "HOLONAV_TICK_HZ");
  }
  env.erase("HOLONAV_TICK_HZ");
  env["HOLONAV_PORT"] = "70000";
  CHECK_THROWS_AS(load_service_config(path.string(), lookup), FormatError);
  std::filesystem::remove(path);
}
