#include "holonav/session.hpp"

#include <chrono>
#include <cmath>
#include <type_traits>

#include "holonav/errors.hpp"

namespace holonav {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::array<const char*, 6> kStateNames = {
    "Idle", "VolumeLoaded", "FiducialsDetected", "PointerCalibrated", "Registered", "Navigating"};

double system_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string to_string(WorkflowState s) { return kStateNames[static_cast<std::size_t>(s)]; }

WorkflowState workflow_state_from_string(const std::string& name) {
  for (std::size_t i = 0; i < kStateNames.size(); ++i) {
    if (name == kStateNames[i]) return static_cast<WorkflowState>(i);
  }
  throw InvalidArgument("unknown workflow state '" + name + "'");
}

std::string to_string(AnnotationKind k) {
  switch (k) {
    case AnnotationKind::Point: return "point";
    case AnnotationKind::Polyline: return "polyline";
    case AnnotationKind::RiskZone: return "risk_zone";
  }
  return "point";
}

std::string to_string(Author a) { return a == Author::Local ? "local" : "remote"; }

namespace {

AnnotationKind annotation_kind_from_string(const std::string& s) {
  if (s == "point") return AnnotationKind::Point;
  if (s == "polyline") return AnnotationKind::Polyline;
  if (s == "risk_zone") return AnnotationKind::RiskZone;
  throw FormatError("kind", "unknown annotation kind '" + s + "'");
}

std::size_t minimum_points(AnnotationKind k) {
  switch (k) {
    case AnnotationKind::Point: return 1;
    case AnnotationKind::Polyline: return 2;
    case AnnotationKind::RiskZone: return 3;
  }
  return 1;
}

}  // namespace

void Annotation::validate() const {
  if (id.empty()) {
    throw InvalidArgument("annotation id must not be empty");
  }
  const std::size_t need = minimum_points(kind);
  if (points.size() < need || (kind == AnnotationKind::Point && points.size() != 1)) {
    throw InvalidArgument(to_string(kind) + " annotation needs " +
                          (kind == AnnotationKind::Point ? "exactly 1 point"
                                                         : "at least " + std::to_string(need) +
                                                               " points") +
                          ", got " + std::to_string(points.size()));
  }
  for (const auto& p : points) {
    require_finite(p, "annotation point");
  }
}

double outline_length(const Annotation& polyline) {
  if (polyline.kind != AnnotationKind::Polyline) {
    throw InvalidArgument("outline length is defined for polylines, not " +
                          to_string(polyline.kind));
  }
  double length = 0.0;
  for (std::size_t i = 1; i < polyline.points.size(); ++i) {
    length += (polyline.points[i] - polyline.points[i - 1]).norm();
  }
  return length;
}

std::string command_name(const Command& c) {
  return std::visit(
      overloaded{[](const cmd::LoadVolume&) { return "LoadVolume"; },
                 [](const cmd::DetectFiducials&) { return "DetectFiducials"; },
                 [](const cmd::Calibrate&) { return "Calibrate"; },
                 [](const cmd::Register&) { return "Register"; },
                 [](const cmd::StartNavigation&) { return "StartNavigation"; },
                 [](const cmd::ToggleModelVisibility&) { return "ToggleModelVisibility"; },
                 [](const cmd::SetOpacity&) { return "SetOpacity"; },
                 [](const cmd::MarkPoint&) { return "MarkPoint"; },
                 [](const cmd::BeginOutline&) { return "BeginOutline"; },
                 [](const cmd::AppendOutline&) { return "AppendOutline"; },
                 [](const cmd::EndOutline&) { return "EndOutline"; },
                 [](const cmd::Reset&) { return "Reset"; }},
      c);
}

Json command_to_json(const Command& c) {
  Json j = std::visit(
      overloaded{
          [](const cmd::LoadVolume& x) { return Json{{"source", x.source}}; },
          [](const cmd::DetectFiducials& x) {
            return Json{{"fiducials", fiducials_to_json(x.fiducials)}};
          },
          [](const cmd::Calibrate& x) {
            return Json{{"tip_offset", vec3_to_json(x.tip_offset)},
                        {"residual_rms", x.residual_rms}};
          },
          [](const cmd::Register& x) {
            return Json{{"world_from_patient", transform_to_json(x.world_from_patient)},
                        {"fre_rms", x.fre_rms}};
          },
          [](const cmd::SetOpacity& x) { return Json{{"value", x.value}}; },
          [](const cmd::MarkPoint& x) {
            return Json{{"point", vec3_to_json(x.point)}, {"label", x.label}};
          },
          [](const cmd::BeginOutline& x) {
            return Json{{"kind", to_string(x.kind)}, {"label", x.label}};
          },
          [](const cmd::AppendOutline& x) { return Json{{"point", vec3_to_json(x.point)}}; },
          [](const auto&) { return Json::object(); }},
      c);
  j["type"] = command_name(c);
  return j;
}

Command command_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
    throw FormatError("command", "expected an object with a string \"type\"");
  }
  const std::string type = j.at("type").get<std::string>();
  try {
    if (type == "LoadVolume") return cmd::LoadVolume{j.value("source", std::string())};
    if (type == "DetectFiducials") {
      cmd::DetectFiducials c;
      if (j.contains("fiducials")) c.fiducials = fiducials_from_json(j.at("fiducials"), "fiducials");
      return c;
    }
    if (type == "Calibrate") {
      cmd::Calibrate c;
      if (j.contains("tip_offset")) c.tip_offset = vec3_from_json(j.at("tip_offset"), "tip_offset");
      c.residual_rms = j.value("residual_rms", 0.0);
      return c;
    }
    if (type == "Register") {
      cmd::Register c;
      if (j.contains("world_from_patient")) {
        c.world_from_patient = transform_from_json(j.at("world_from_patient"), "world_from_patient");
      }
      c.fre_rms = j.value("fre_rms", 0.0);
      return c;
    }
    if (type == "StartNavigation") return cmd::StartNavigation{};
    if (type == "ToggleModelVisibility") return cmd::ToggleModelVisibility{};
    if (type == "SetOpacity") {
      if (!j.contains("value") || !j.at("value").is_number()) {
        throw FormatError("value", "SetOpacity needs a numeric value");
      }
      return cmd::SetOpacity{j.at("value").get<double>()};
    }
    if (type == "MarkPoint") {
      if (!j.contains("point")) throw FormatError("point", "MarkPoint needs a point");
      return cmd::MarkPoint{vec3_from_json(j.at("point"), "point"), j.value("label", std::string())};
    }
    if (type == "BeginOutline") {
      const auto kind = annotation_kind_from_string(j.value("kind", std::string("polyline")));
      if (kind == AnnotationKind::Point) {
        throw FormatError("kind", "outlines are polyline or risk_zone");
      }
      return cmd::BeginOutline{kind, j.value("label", std::string())};
    }
    if (type == "AppendOutline") {
      if (!j.contains("point")) throw FormatError("point", "AppendOutline needs a point");
      return cmd::AppendOutline{vec3_from_json(j.at("point"), "point")};
    }
    if (type == "EndOutline") return cmd::EndOutline{};
    if (type == "Reset") return cmd::Reset{};
  } catch (const Json::exception& e) {
    throw FormatError("command", e.what());
  }
  throw FormatError("type", "unknown command '" + type + "'");
}

Json annotation_to_json(const Annotation& a) {
  Json pts = Json::array();
  for (const auto& p : a.points) pts.push_back(vec3_to_json(p));
  return Json{{"id", a.id},
              {"kind", to_string(a.kind)},
              {"points", pts},
              {"label", a.label},
              {"author", to_string(a.author)}};
}

Annotation annotation_from_json(const Json& j) {
  if (!j.is_object()) {
    throw FormatError("annotation", "expected an object");
  }
  Annotation a;
  try {
    a.id = j.value("id", std::string());
    a.kind = annotation_kind_from_string(j.value("kind", std::string("risk_zone")));
    a.label = j.value("label", std::string());
    const std::string author = j.value("author", std::string("remote"));
    if (author != "local" && author != "remote") {
      throw FormatError("author", "expected local or remote");
    }
    a.author = author == "local" ? Author::Local : Author::Remote;
    if (!j.contains("points") || !j.at("points").is_array()) {
      throw FormatError("points", "expected an array of [x,y,z]");
    }
    std::size_t i = 0;
    for (const auto& p : j.at("points")) {
      a.points.push_back(vec3_from_json(p, "points[" + std::to_string(i++) + "]"));
    }
  } catch (const Json::exception& e) {
    throw FormatError("annotation", e.what());
  }
  return a;
}

Json log_entry_to_json(const LogEntry& e) {
  Json event = std::visit(
      overloaded{[](const Command& c) { return Json{{"type", "command"}, {"command", command_to_json(c)}}; },
                 [](const RemoteAnnotationEvent& r) {
                   return Json{{"type", "remote_annotation"},
                               {"annotation", annotation_to_json(r.annotation)}};
                 }},
      e.event);
  return Json{{"v", 1}, {"seq", e.seq}, {"ts", e.timestamp}, {"event", event}};
}

LogEntry log_entry_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("seq") || !j.at("seq").is_number_unsigned() ||
      !j.contains("event")) {
    throw FormatError("log entry", "expected {\"seq\":n, \"ts\":t, \"event\":{...}}");
  }
  if (!j.contains("v") || !j.at("v").is_number_integer() || j.at("v").get<int>() != 1) {
    throw FormatError("v", "unsupported log entry version");
  }
  LogEntry e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.timestamp = j.value("ts", 0.0);
  const Json& ev = j.at("event");
  const std::string type = ev.value("type", std::string());
  if (type == "command") {
    e.event = command_from_json(ev.value("command", Json()));
  } else if (type == "remote_annotation") {
    e.event = RemoteAnnotationEvent{annotation_from_json(ev.value("annotation", Json()))};
  } else {
    throw FormatError("event.type", "unknown event type '" + type + "' at seq " +
                                        std::to_string(e.seq));
  }
  return e;
}

Json snapshot_to_json(const SessionSnapshot& s) {
  Json annotations = Json::array();
  for (const auto& a : s.annotations) annotations.push_back(annotation_to_json(a));
  Json j{{"state", to_string(s.state)},
         {"volume_source", s.volume_source},
         {"fiducials", fiducials_to_json(s.fiducials)},
         {"tip_offset", s.tip_offset ? vec3_to_json(*s.tip_offset) : Json()},
         {"registration", Json()},
         {"model_visible", s.model_visible},
         {"opacity", s.opacity},
         {"annotations", annotations},
         {"outline_in_progress",
          s.outline_in_progress ? annotation_to_json(*s.outline_in_progress) : Json()},
         {"last_seq", s.last_seq}};
  if (s.registration) {
    j["registration"] = Json{{"world_from_patient", transform_to_json(s.registration->world_from_patient)},
                             {"fre_rms", s.registration->fre_rms}};
  }
  return j;
}

Session::Session(LogSink* sink, Clock clock)
    : sink_(sink), clock_(clock ? std::move(clock) : Clock(system_seconds)) {}

namespace {

std::string rejection(const Command& c, WorkflowState s, const std::string& why) {
  return command_name(c) + " rejected in state " + to_string(s) + ": " + why;
}

bool annotating_state(WorkflowState s) {
  return s == WorkflowState::Registered || s == WorkflowState::Navigating;
}

}  // namespace

std::optional<std::string> Session::check_command(const Command& command) const {
  const WorkflowState s = snapshot_.state;
  auto require = [&](WorkflowState needed) -> std::optional<std::string> {
    if (s != needed) return rejection(command, s, "requires " + to_string(needed));
    return std::nullopt;
  };
  auto require_annotating = [&]() -> std::optional<std::string> {
    if (!annotating_state(s)) return rejection(command, s, "requires Registered or Navigating");
    return std::nullopt;
  };
  return std::visit(
      overloaded{
          [&](const cmd::LoadVolume&) { return require(WorkflowState::Idle); },
          [&](const cmd::DetectFiducials& c) -> std::optional<std::string> {
            if (auto r = require(WorkflowState::VolumeLoaded)) return r;
            if (c.fiducials.points.size() < 3) {
              return rejection(command, s, "registration needs at least 3 fiducials");
            }
            try {
              c.fiducials.validate();
            } catch (const InvalidArgument& e) {
              return rejection(command, s, e.what());
            }
            return std::nullopt;
          },
          [&](const cmd::Calibrate& c) -> std::optional<std::string> {
            if (auto r = require(WorkflowState::FiducialsDetected)) return r;
            if (!c.tip_offset.allFinite() || !std::isfinite(c.residual_rms)) {
              return rejection(command, s, "non-finite calibration");
            }
            return std::nullopt;
          },
          [&](const cmd::Register& c) -> std::optional<std::string> {
            if (auto r = require(WorkflowState::PointerCalibrated)) return r;
            if (!std::isfinite(c.fre_rms)) return rejection(command, s, "non-finite FRE");
            return std::nullopt;
          },
          [&](const cmd::StartNavigation&) { return require(WorkflowState::Registered); },
          [&](const cmd::ToggleModelVisibility&) -> std::optional<std::string> {
            return std::nullopt;
          },
          [&](const cmd::SetOpacity& c) -> std::optional<std::string> {
            if (!(c.value >= 0.0 && c.value <= 1.0)) {
              return rejection(command, s, "opacity must be in [0, 1]");
            }
            return std::nullopt;
          },
          [&](const cmd::MarkPoint& c) -> std::optional<std::string> {
            if (auto r = require_annotating()) return r;
            if (!c.point.allFinite()) return rejection(command, s, "non-finite point");
            return std::nullopt;
          },
          [&](const cmd::BeginOutline& c) -> std::optional<std::string> {
            if (auto r = require_annotating()) return r;
            if (snapshot_.outline_in_progress) {
              return rejection(command, s, "an outline is already in progress");
            }
            if (c.kind == AnnotationKind::Point) {
              return rejection(command, s, "outlines are polyline or risk_zone");
            }
            return std::nullopt;
          },
          [&](const cmd::AppendOutline& c) -> std::optional<std::string> {
            if (auto r = require_annotating()) return r;
            if (!snapshot_.outline_in_progress) {
              return rejection(command, s, "no outline in progress");
            }
            if (!c.point.allFinite()) return rejection(command, s, "non-finite point");
            return std::nullopt;
          },
          [&](const cmd::EndOutline&) -> std::optional<std::string> {
            if (auto r = require_annotating()) return r;
            if (!snapshot_.outline_in_progress) {
              return rejection(command, s, "no outline in progress");
            }
            const auto& o = *snapshot_.outline_in_progress;
            if (o.points.size() < minimum_points(o.kind)) {
              return rejection(command, s,
                               to_string(o.kind) + " needs at least " +
                                   std::to_string(minimum_points(o.kind)) + " points");
            }
            return std::nullopt;
          },
          [&](const cmd::Reset&) -> std::optional<std::string> { return std::nullopt; }},
      command);
}

LogEntry Session::next_entry(SessionEvent event) const {
  return LogEntry{snapshot_.last_seq + 1, clock_(), std::move(event)};
}

void Session::commit(const LogEntry& entry) {
  if (sink_) {
    sink_->append(entry);
  }
  apply(entry);
  log_.push_back(entry);
  for (const auto& l : listeners_) {
    l(entry, snapshot_);
  }
}

CommandOutcome Session::handle_command(const Command& command) {
  CommandOutcome out;
  if (auto reason = check_command(command)) {
    out.reason = std::move(*reason);
    return out;
  }
  LogEntry entry = next_entry(command);
  commit(entry);
  out.accepted = true;
  out.entry = std::move(entry);
  return out;
}

AnnotationOutcome Session::apply_remote_annotation(Annotation annotation) {
  if (snapshot_.state != WorkflowState::Navigating) {
    throw StateError("remote annotations require Navigating, session is " +
                     to_string(snapshot_.state));
  }
  annotation.author = Author::Remote;
  annotation.validate();
  for (const auto& a : snapshot_.annotations) {
    if (a.id == annotation.id) {
      return {};
    }
  }
  LogEntry entry = next_entry(RemoteAnnotationEvent{std::move(annotation)});
  commit(entry);
  return {true, std::move(entry)};
}

RigidTransform Session::compute_overlay(const RigidTransform& glasses_pose_world) const {
  if (!annotating_state(snapshot_.state) || !snapshot_.registration) {
    throw StateError("overlay requires Registered or Navigating, session is " +
                     to_string(snapshot_.state));
  }
  return glasses_pose_world.inverse() * snapshot_.registration->world_from_patient;
}

void Session::add_listener(Listener listener) { listeners_.push_back(std::move(listener)); }

void Session::apply(const LogEntry& entry) {
  std::visit(overloaded{[&](const Command& c) { apply_command(c, entry.seq); },
                        [&](const RemoteAnnotationEvent& r) {
                          snapshot_.annotations.push_back(r.annotation);
                        }},
             entry.event);
  snapshot_.last_seq = entry.seq;
}

void Session::apply_command(const Command& command, std::uint64_t seq) {
  SessionSnapshot& s = snapshot_;
  std::visit(
      overloaded{
          [&](const cmd::LoadVolume& c) {
            s.volume_source = c.source;
            s.state = WorkflowState::VolumeLoaded;
          },
          [&](const cmd::DetectFiducials& c) {
            s.fiducials = c.fiducials;
            s.state = WorkflowState::FiducialsDetected;
          },
          [&](const cmd::Calibrate& c) {
            s.tip_offset = c.tip_offset;
            s.state = WorkflowState::PointerCalibrated;
          },
          [&](const cmd::Register& c) {
            s.registration = RegistrationState{c.world_from_patient, c.fre_rms};
            s.state = WorkflowState::Registered;
          },
          [&](const cmd::StartNavigation&) { s.state = WorkflowState::Navigating; },
          [&](const cmd::ToggleModelVisibility&) { s.model_visible = !s.model_visible; },
          [&](const cmd::SetOpacity& c) { s.opacity = c.value; },
          [&](const cmd::MarkPoint& c) {
            s.annotations.push_back(Annotation{"L" + std::to_string(seq), AnnotationKind::Point,
                                               {c.point}, c.label, Author::Local});
          },
          [&](const cmd::BeginOutline& c) {
            s.outline_in_progress =
                Annotation{"L" + std::to_string(seq), c.kind, {}, c.label, Author::Local};
          },
          [&](const cmd::AppendOutline& c) { s.outline_in_progress->points.push_back(c.point); },
          [&](const cmd::EndOutline&) {
            s.annotations.push_back(std::move(*s.outline_in_progress));
            s.outline_in_progress.reset();
          },
          [&](const cmd::Reset&) {
            // Annotations are patient-frame data and outlive a re-registration.
            s.state = WorkflowState::Idle;
            s.volume_source.clear();
            s.fiducials = FiducialSet{};
            s.tip_offset.reset();
            s.registration.reset();
            s.outline_in_progress.reset();
          }},
      command);
}

Session Session::replay(const std::vector<LogEntry>& entries) {
  Session session;
  std::uint64_t expected = 1;
  for (const auto& entry : entries) {
    if (entry.seq != expected) {
      if (entry.seq > expected) {
        throw FormatError("seq", "missing seq " + std::to_string(expected));
      }
      throw FormatError("seq", "out-of-order seq " + std::to_string(entry.seq) + " after " +
                                   std::to_string(expected - 1));
    }
    const std::string where = "seq " + std::to_string(entry.seq);
    std::visit(overloaded{[&](const Command& c) {
                            if (auto reason = session.check_command(c)) {
                              throw FormatError(where, *reason);
                            }
                          },
                          [&](const RemoteAnnotationEvent& r) {
                            if (session.state() != WorkflowState::Navigating) {
                              throw FormatError(where, "remote annotation outside Navigating");
                            }
                            try {
                              r.annotation.validate();
                            } catch (const InvalidArgument& e) {
                              throw FormatError(where, e.what());
                            }
                            for (const auto& a : session.snapshot_.annotations) {
                              if (a.id == r.annotation.id) {
                                throw FormatError(where, "duplicate annotation id " + a.id);
                              }
                            }
                          }},
               entry.event);
    session.apply(entry);
    session.log_.push_back(entry);
    ++expected;
  }
  return session;
}

}  // namespace holonav
