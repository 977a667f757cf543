#include "holonav/service.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "holonav/calibration.hpp"
#include "holonav/errors.hpp"
#include "holonav/scene.hpp"
#include "holonav/session_log.hpp"
#include "holonav/volume.hpp"

namespace holonav {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxFrameBytes = 1 << 20;
constexpr const char* kDefaultPhantom = "phantom:default";

}  // namespace

Json wire_to_json(const WireMessage& m) {
  Json j{{"v", kWireVersion}, {"seq", m.seq}, {"kind", m.kind}, {"payload", m.payload}};
  if (m.reply_to) j["reply_to"] = *m.reply_to;
  return j;
}

WireMessage wire_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("message", "expected a JSON object");
  if (!j.contains("v") || !j.at("v").is_number_integer() || j.at("v").get<int>() != kWireVersion) {
    throw FormatError("v", "expected protocol version 1");
  }
  if (!j.contains("seq") || !j.at("seq").is_number_unsigned()) {
    throw FormatError("seq", "expected a non-negative integer");
  }
  if (!j.contains("kind") || !j.at("kind").is_string()) {
    throw FormatError("kind", "expected a string");
  }
  WireMessage m;
  m.seq = j.at("seq").get<std::uint64_t>();
  m.kind = j.at("kind").get<std::string>();
  if (j.contains("payload")) {
    if (!j.at("payload").is_object()) throw FormatError("payload", "expected an object");
    m.payload = j.at("payload");
  }
  if (j.contains("reply_to")) {
    if (!j.at("reply_to").is_number_unsigned()) throw FormatError("reply_to", "expected an integer");
    m.reply_to = j.at("reply_to").get<std::uint64_t>();
  }
  return m;
}

namespace {

/// Drops a torn final line left by a crash mid-append so new entries start on a fresh line.
void truncate_torn_tail(const std::string& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec || size == 0) return;
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return;
  std::string text(size, '\0');
  const std::size_t got = std::fread(text.data(), 1, size, f);
  std::fclose(f);
  text.resize(got);
  if (text.empty() || text.back() == '\n') return;
  const auto nl = text.rfind('\n');
  std::filesystem::resize_file(path, nl == std::string::npos ? 0 : nl + 1);
}

}  // namespace

struct NavigationService::Impl : std::enable_shared_from_this<NavigationService::Impl> {
  struct Connection : std::enable_shared_from_this<Connection> {
    explicit Connection(Impl& owner) : impl(owner) {}
    virtual ~Connection() = default;
    virtual void start() = 0;
    virtual void close() = 0;
    virtual void write_text(std::string text) = 0;

    void send(const std::string& kind, Json payload, std::optional<std::uint64_t> reply_to) {
      write_text(wire_to_json({++out_seq, kind, std::move(payload), reply_to}).dump());
    }

    Impl& impl;
    std::uint64_t out_seq = 0;
    std::optional<std::uint64_t> last_in_seq;
    bool closed = false;
  };

  struct TcpConnection : Connection {
    TcpConnection(Impl& owner, tcp::socket s)
        : Connection(owner), socket(std::move(s)), buffer(kMaxFrameBytes) {}

    void start() override {
      impl.on_open(shared_from_this());
      read();
    }

    void read() {
      auto self = std::static_pointer_cast<TcpConnection>(shared_from_this());
      asio::async_read_until(socket, buffer, '\n', [self](boost::system::error_code ec, std::size_t n) {
        if (self->closed) return;
        if (ec == asio::error::not_found) {
          self->send("error", Json{{"message", "frame exceeds 1 MiB"}}, std::nullopt);
          self->close();
          return;
        }
        if (ec) {
          self->impl.on_close(self);
          return;
        }
        std::string line(asio::buffers_begin(self->buffer.data()),
                         asio::buffers_begin(self->buffer.data()) + static_cast<long>(n) - 1);
        self->buffer.consume(n);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos) {
          self->impl.on_text(self, line);
        }
        self->read();
      });
    }

    void write_text(std::string text) override {
      if (closed) return;
      text.push_back('\n');
      queue.push_back(std::move(text));
      if (queue.size() == 1) flush();
    }

    void flush() {
      auto self = std::static_pointer_cast<TcpConnection>(shared_from_this());
      asio::async_write(socket, asio::buffer(queue.front()), [self](boost::system::error_code ec, std::size_t) {
        if (ec) {
          self->impl.on_close(self);
          return;
        }
        self->queue.pop_front();
        if (!self->queue.empty()) self->flush();
      });
    }

    void close() override {
      if (closed) return;
      closed = true;
      boost::system::error_code ignored;
      socket.shutdown(tcp::socket::shutdown_both, ignored);
      socket.close(ignored);
      impl.on_close(shared_from_this());
    }

    tcp::socket socket;
    asio::streambuf buffer;
    std::deque<std::string> queue;
  };

  struct WsConnection : Connection {
    WsConnection(Impl& owner, tcp::socket s) : Connection(owner), ws(std::move(s)) {}

    void start() override {
      ws.read_message_max(kMaxFrameBytes);
      ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      auto self = std::static_pointer_cast<WsConnection>(shared_from_this());
      ws.async_accept([self](beast::error_code ec) {
        if (ec) {
          self->closed = true;
          return;
        }
        self->ws.text(true);
        self->impl.on_open(self);
        self->read();
      });
    }

    void read() {
      auto self = std::static_pointer_cast<WsConnection>(shared_from_this());
      ws.async_read(buffer, [self](beast::error_code ec, std::size_t) {
        if (self->closed) return;
        if (ec == websocket::error::message_too_big) {
          self->send("error", Json{{"message", "frame exceeds 1 MiB"}}, std::nullopt);
          self->close();
          return;
        }
        if (ec) {
          self->impl.on_close(self);
          return;
        }
        const std::string text = beast::buffers_to_string(self->buffer.data());
        self->buffer.consume(self->buffer.size());
        self->impl.on_text(self, text);
        self->read();
      });
    }

    void write_text(std::string text) override {
      if (closed) return;
      queue.push_back(std::move(text));
      if (queue.size() == 1) flush();
    }

    void flush() {
      auto self = std::static_pointer_cast<WsConnection>(shared_from_this());
      ws.async_write(asio::buffer(queue.front()), [self](beast::error_code ec, std::size_t) {
        if (ec) {
          self->impl.on_close(self);
          return;
        }
        self->queue.pop_front();
        if (!self->queue.empty()) self->flush();
      });
    }

    void close() override {
      if (closed) return;
      closed = true;
      beast::error_code ignored;
      beast::get_lowest_layer(ws).shutdown(tcp::socket::shutdown_both, ignored);
      beast::get_lowest_layer(ws).close(ignored);
      impl.on_close(shared_from_this());
    }

    websocket::stream<tcp::socket> ws;
    beast::flat_buffer buffer;
    std::deque<std::string> queue;
  };

  Impl(ServiceConfig c, std::shared_ptr<LogSink> override_sink)
      : config(std::move(c)),
        sink(std::move(override_sink)),
        sink_overridden(sink != nullptr),
        procedure(make_scene(config), config.seed),
        tracking_rng(config.seed ^ 0x9e3779b97f4a7c15ULL),
        tcp_acceptor(io),
        ws_acceptor(io),
        tick_timer(io) {}

  static SceneConfig make_scene(const ServiceConfig& c) {
    SceneConfig scene = SceneConfig::default_scene();
    scene.noise = c.noise;
    return scene;
  }

  // -- lifecycle ---------------------------------------------------------

  void open_session() {
    if (sink_overridden) {
      session = Session(sink.get());
    } else if (!config.log_path.empty()) {
      std::vector<LogEntry> entries;
      if (std::filesystem::exists(config.log_path)) {
        truncate_torn_tail(config.log_path);
        entries = read_log(config.log_path);
      }
      session = Session::replay(entries);
      sink = std::make_shared<JsonlFileSink>(config.log_path, config.sync_log);
      session.set_sink(sink.get());
    }
    publish();
    session.add_listener([this](const LogEntry& entry, const SessionSnapshot&) { on_event(entry); });
  }

  void bind(tcp::acceptor& acceptor, std::uint16_t port) {
    const tcp::endpoint endpoint(asio::ip::make_address(config.host), port);
    acceptor.open(endpoint.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(endpoint);
    acceptor.listen();
  }

  void start() {
    config.validate();
    open_session();
    bind(tcp_acceptor, config.port);
    bind(ws_acceptor, config.ws_port);
    accept(tcp_acceptor, false);
    accept(ws_acceptor, true);
    tick_period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / config.tick_hz));
    tick_origin = std::chrono::steady_clock::now();
    schedule_tick();
    running = true;
    thread = std::thread([self = shared_from_this()] { self->io.run(); });
  }

  void stop() {
    if (!running) return;
    running = false;
    asio::post(io, [this] {
      boost::system::error_code ignored;
      tcp_acceptor.close(ignored);
      ws_acceptor.close(ignored);
      tick_timer.cancel();
      const auto all = connections;
      for (const auto& c : all) c->close();
      io.stop();
    });
    if (thread.joinable()) thread.join();
  }

  void accept(tcp::acceptor& acceptor, bool websocket_framing) {
    acceptor.async_accept([this, &acceptor, websocket_framing](boost::system::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec == asio::error::operation_aborted || !acceptor.is_open()) return;
        accept(acceptor, websocket_framing);
        return;
      }
      std::shared_ptr<Connection> conn;
      if (websocket_framing) {
        conn = std::make_shared<WsConnection>(*this, std::move(socket));
      } else {
        conn = std::make_shared<TcpConnection>(*this, std::move(socket));
      }
      conn->start();
      accept(acceptor, websocket_framing);
    });
  }

  void on_open(const std::shared_ptr<Connection>& c) {
    connections.insert(c);
    c->send("state_snapshot", snapshot_to_json(session.snapshot()), std::nullopt);
  }

  void on_close(const std::shared_ptr<Connection>& c) {
    c->closed = true;
    connections.erase(c);
  }

  // -- inbound -----------------------------------------------------------

  void reply_error(const std::shared_ptr<Connection>& c, const std::string& message,
                   const std::string& field, std::optional<std::uint64_t> reply_to) {
    Json payload{{"message", message}};
    if (!field.empty()) payload["field"] = field;
    c->send("error", std::move(payload), reply_to);
  }

  void on_text(const std::shared_ptr<Connection>& c, const std::string& text) {
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::parse_error& e) {
      reply_error(c, std::string("malformed JSON: ") + e.what(), "", std::nullopt);
      return;
    }
    std::optional<std::uint64_t> seq;
    if (j.is_object() && j.contains("seq") && j.at("seq").is_number_unsigned()) {
      seq = j.at("seq").get<std::uint64_t>();
    }
    WireMessage m;
    try {
      m = wire_from_json(j);
    } catch (const FormatError& e) {
      reply_error(c, e.what(), e.field(), seq);
      return;
    }
    if (c->last_in_seq && m.seq <= *c->last_in_seq) {
      reply_error(c, "seq " + std::to_string(m.seq) + " does not increase; frame discarded", "seq",
                  m.seq);
      return;
    }
    c->last_in_seq = m.seq;
    if (m.kind == "command") {
      handle_command(c, m);
    } else if (m.kind == "annotation_event") {
      handle_annotation(c, m);
    } else {
      reply_error(c, "unsupported kind '" + m.kind + "' (expected command or annotation_event)",
                  "kind", m.seq);
    }
  }

  void reject(const std::shared_ptr<Connection>& c, const std::string& type, const std::string& reason,
              std::uint64_t reply_to) {
    c->send("command_rejected", Json{{"type", type}, {"reason", reason}}, reply_to);
  }

  void handle_command(const std::shared_ptr<Connection>& c, const WireMessage& m) {
    Command command;
    try {
      command = command_from_json(m.payload);
    } catch (const FormatError& e) {
      reply_error(c, e.what(), e.field(), m.seq);
      return;
    }
    const std::string type = command_name(command);
    std::optional<VoxelVolume> loaded;
    try {
      loaded = fill_from_simulation(command, m.payload);
    } catch (const std::exception& e) {
      reject(c, type, type + " rejected: " + e.what(), m.seq);
      return;
    }
    origin = c;
    origin_seq = m.seq;
    reply_kind = "state_snapshot";
    CommandOutcome outcome;
    try {
      outcome = session.handle_command(command);
    } catch (const std::exception& e) {
      clear_origin();
      reply_error(c, std::string("session log write failed: ") + e.what(), "log", m.seq);
      return;
    }
    clear_origin();
    if (!outcome.accepted) {
      reject(c, type, outcome.reason, m.seq);
      return;
    }
    if (loaded) ct = std::move(loaded);
    if (std::holds_alternative<cmd::Reset>(command)) ct.reset();
  }

  void handle_annotation(const std::shared_ptr<Connection>& c, const WireMessage& m) {
    Annotation a;
    try {
      a = annotation_from_json(m.payload);
    } catch (const FormatError& e) {
      reply_error(c, e.what(), e.field(), m.seq);
      return;
    }
    origin = c;
    origin_seq = m.seq;
    reply_kind = "annotation_event";
    AnnotationOutcome outcome;
    try {
      outcome = session.apply_remote_annotation(std::move(a));
    } catch (const StateError& e) {
      clear_origin();
      reject(c, "annotation_event", e.what(), m.seq);
      return;
    } catch (const InvalidArgument& e) {
      clear_origin();
      reject(c, "annotation_event", e.what(), m.seq);
      return;
    } catch (const std::exception& e) {
      clear_origin();
      reply_error(c, std::string("session log write failed: ") + e.what(), "log", m.seq);
      return;
    }
    clear_origin();
    if (!outcome.applied) {
      // Already known: no state change, so only the sender hears back.
      c->send("state_snapshot", snapshot_to_json(session.snapshot()), m.seq);
    }
  }

  void clear_origin() {
    origin.reset();
    origin_seq.reset();
  }

  VoxelVolume load_volume(const std::string& source) const {
    if (source == kDefaultPhantom) return procedure.acquire_ct();
    return read_volume(source);
  }

  /// Commands that arrive without their measured payload are completed from
  /// the simulated scanner, tracker and pointer, so the log holds concrete values.
  std::optional<VoxelVolume> fill_from_simulation(Command& command, const Json& payload) {
    const WorkflowState state = session.state();
    if (auto* c = std::get_if<cmd::LoadVolume>(&command)) {
      if (c->source.empty()) c->source = kDefaultPhantom;
      if (state == WorkflowState::Idle) return load_volume(c->source);
    } else if (auto* d = std::get_if<cmd::DetectFiducials>(&command)) {
      if (!payload.contains("fiducials") && state == WorkflowState::VolumeLoaded) {
        if (!ct) ct = load_volume(session.snapshot().volume_source);
        d->fiducials = procedure.detect(*ct);
      }
    } else if (auto* k = std::get_if<cmd::Calibrate>(&command)) {
      if (!payload.contains("tip_offset") && state == WorkflowState::FiducialsDetected) {
        const PivotSolution sol = procedure.calibrate_pointer();
        const CalibrationVerdict verdict = calibration_quality(sol);
        if (!verdict.accepted) {
          std::string why = "calibration quality check failed:";
          for (const auto& r : verdict.reasons) why += " " + r;
          throw InvalidArgument(why);
        }
        k->tip_offset = sol.tip_offset;
        k->residual_rms = sol.residual_rms;
      }
    } else if (auto* r = std::get_if<cmd::Register>(&command)) {
      if (!payload.contains("world_from_patient") && state == WorkflowState::PointerCalibrated) {
        const RegistrationResult result = procedure.register_patient(session.snapshot().fiducials);
        r->world_from_patient = result.world_from_patient;
        r->fre_rms = result.fre_rms;
      }
    }
    return std::nullopt;
  }

  // -- outbound ----------------------------------------------------------

  void publish() {
    std::lock_guard lock(snapshot_mutex);
    published = session.snapshot();
  }

  /// Session listener: runs after the entry is in the log.
  void on_event(const LogEntry& entry) {
    publish();
    if (const auto* r = std::get_if<RemoteAnnotationEvent>(&entry.event)) {
      broadcast("annotation_event", annotation_to_json(r->annotation),
                reply_kind == "annotation_event");
    }
    broadcast("state_snapshot", snapshot_to_json(session.snapshot()), reply_kind == "state_snapshot");
  }

  void broadcast(const std::string& kind, const Json& payload, bool carries_reply) {
    for (const auto& c : connections) {
      const bool is_origin = carries_reply && origin && c == origin;
      c->send(kind, payload, is_origin ? origin_seq : std::nullopt);
    }
  }

  void schedule_tick() {
    ++tick_count;
    tick_timer.expires_at(tick_origin + tick_period * static_cast<long>(tick_count));
    tick_timer.async_wait([this](boost::system::error_code ec) {
      if (ec) return;
      tick();
      schedule_tick();
    });
  }

  void tick() {
    const double t = static_cast<double>(tick_count) / config.tick_hz;
    const auto& room = procedure.config().room;
    const TrackingSample glasses =
        sample_pose(room, TrackerId::Glasses, procedure.glasses_pose(t), config.noise, tracking_rng, t);
    const TrackingSample pointer =
        sample_pose(room, TrackerId::Pointer, procedure.pointer_pose(t), config.noise, tracking_rng, t);
    if (connections.empty()) return;
    Json g = sample_to_json(glasses);
    const auto s = session.state();
    if (glasses.pose && (s == WorkflowState::Registered || s == WorkflowState::Navigating)) {
      g["view_from_patient"] = transform_to_json(session.compute_overlay(*glasses.pose));
    }
    broadcast("tracking_sample", g, false);
    broadcast("tracking_sample", sample_to_json(pointer), false);
  }

  ServiceConfig config;
  std::shared_ptr<LogSink> sink;
  bool sink_overridden;
  Session session;
  SimulatedProcedure procedure;
  std::optional<VoxelVolume> ct;
  std::mt19937_64 tracking_rng;

  asio::io_context io;
  tcp::acceptor tcp_acceptor;
  tcp::acceptor ws_acceptor;
  asio::steady_timer tick_timer;
  std::chrono::steady_clock::time_point tick_origin;
  std::chrono::steady_clock::duration tick_period{};
  std::uint64_t tick_count = 0;
  std::thread thread;
  bool running = false;

  std::set<std::shared_ptr<Connection>> connections;
  std::shared_ptr<Connection> origin;
  std::optional<std::uint64_t> origin_seq;
  std::string reply_kind;

  mutable std::mutex snapshot_mutex;
  SessionSnapshot published;
};

NavigationService::NavigationService(ServiceConfig config, std::shared_ptr<LogSink> sink_override)
    : impl_(std::make_shared<Impl>(std::move(config), std::move(sink_override))) {}

NavigationService::~NavigationService() { stop(); }

void NavigationService::start() { impl_->start(); }

void NavigationService::stop() { impl_->stop(); }

std::uint16_t NavigationService::tcp_port() const { return impl_->tcp_acceptor.local_endpoint().port(); }

std::uint16_t NavigationService::ws_port() const { return impl_->ws_acceptor.local_endpoint().port(); }

SessionSnapshot NavigationService::snapshot() const {
  std::lock_guard lock(impl_->snapshot_mutex);
  return impl_->published;
}

}  // namespace holonav
