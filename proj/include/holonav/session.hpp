#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "holonav/fiducials.hpp"
#include "holonav/geometry.hpp"
#include "holonav/serialization.hpp"

namespace holonav {

/// Strictly forward workflow; only Reset moves backwards (to Idle).
enum class WorkflowState {
  Idle,
  VolumeLoaded,
  FiducialsDetected,
  PointerCalibrated,
  Registered,
  Navigating,
};

std::string to_string(WorkflowState s);
WorkflowState workflow_state_from_string(const std::string& name);

enum class AnnotationKind { Point, Polyline, RiskZone };
enum class Author { Local, Remote };

std::string to_string(AnnotationKind k);
std::string to_string(Author a);

/// Points are in the patient frame, so annotations survive re-registration.
struct Annotation {
  std::string id;
  AnnotationKind kind = AnnotationKind::Point;
  std::vector<Point3> points;
  std::string label;
  Author author = Author::Local;

  /// point: exactly 1; polyline: >= 2; risk_zone: >= 3. Throws InvalidArgument.
  void validate() const;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Sum of segment lengths of an open polyline (mm). InvalidArgument for other kinds.
double outline_length(const Annotation& polyline);

namespace cmd {
struct LoadVolume {
  std::string source;
  friend bool operator==(const LoadVolume&, const LoadVolume&) = default;
};
struct DetectFiducials {
  FiducialSet fiducials;  // patient frame
  friend bool operator==(const DetectFiducials&, const DetectFiducials&) = default;
};
struct Calibrate {
  Vec3 tip_offset = Vec3::Zero();
  double residual_rms = 0.0;
  friend bool operator==(const Calibrate&, const Calibrate&) = default;
};
struct Register {
  RigidTransform world_from_patient;
  double fre_rms = 0.0;
  friend bool operator==(const Register&, const Register&) = default;
};
struct StartNavigation {
  friend bool operator==(const StartNavigation&, const StartNavigation&) = default;
};
struct ToggleModelVisibility {
  friend bool operator==(const ToggleModelVisibility&, const ToggleModelVisibility&) = default;
};
struct SetOpacity {
  double value = 1.0;
  friend bool operator==(const SetOpacity&, const SetOpacity&) = default;
};
struct MarkPoint {
  Point3 point = Point3::Zero();
  std::string label;
  friend bool operator==(const MarkPoint&, const MarkPoint&) = default;
};
struct BeginOutline {
  AnnotationKind kind = AnnotationKind::Polyline;
  std::string label;
  friend bool operator==(const BeginOutline&, const BeginOutline&) = default;
};
struct AppendOutline {
  Point3 point = Point3::Zero();
  friend bool operator==(const AppendOutline&, const AppendOutline&) = default;
};
struct EndOutline {
  friend bool operator==(const EndOutline&, const EndOutline&) = default;
};
struct Reset {
  friend bool operator==(const Reset&, const Reset&) = default;
};
}  // namespace cmd

/// The sterile command surface that gestures and virtual buttons resolve to.
using Command = std::variant<cmd::LoadVolume, cmd::DetectFiducials, cmd::Calibrate, cmd::Register,
                             cmd::StartNavigation, cmd::ToggleModelVisibility, cmd::SetOpacity,
                             cmd::MarkPoint, cmd::BeginOutline, cmd::AppendOutline,
                             cmd::EndOutline, cmd::Reset>;

std::string command_name(const Command& c);
Json command_to_json(const Command& c);
/// {"type": "<Name>", ...payload}. Missing payload fields take defaults.
Command command_from_json(const Json& j);

Json annotation_to_json(const Annotation& a);
Annotation annotation_from_json(const Json& j);

struct RemoteAnnotationEvent {
  Annotation annotation;
  friend bool operator==(const RemoteAnnotationEvent&, const RemoteAnnotationEvent&) = default;
};

using SessionEvent = std::variant<Command, RemoteAnnotationEvent>;

struct LogEntry {
  std::uint64_t seq = 0;
  double timestamp = 0.0;  // seconds since epoch; informational only
  SessionEvent event;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

Json log_entry_to_json(const LogEntry& e);
/// Throws FormatError.
LogEntry log_entry_from_json(const Json& j);

struct RegistrationState {
  RigidTransform world_from_patient;
  double fre_rms = 0.0;
  friend bool operator==(const RegistrationState&, const RegistrationState&) = default;
};

/// Everything the console needs to draw; also the replay comparison target.
struct SessionSnapshot {
  WorkflowState state = WorkflowState::Idle;
  std::string volume_source;
  FiducialSet fiducials;
  std::optional<Vec3> tip_offset;
  std::optional<RegistrationState> registration;
  bool model_visible = true;
  double opacity = 1.0;
  std::vector<Annotation> annotations;
  std::optional<Annotation> outline_in_progress;
  std::uint64_t last_seq = 0;

  friend bool operator==(const SessionSnapshot&, const SessionSnapshot&) = default;
};

Json snapshot_to_json(const SessionSnapshot& s);

/// Durable destination of log entries. append() must not return before the
/// entry is stored; throwing aborts the mutation.
class LogSink {
 public:
  virtual ~LogSink() = default;
  virtual void append(const LogEntry& entry) = 0;
};

struct CommandOutcome {
  bool accepted = false;
  std::string reason;             // set when rejected
  std::optional<LogEntry> entry;  // set when accepted
};

struct AnnotationOutcome {
  bool applied = false;  // false for a duplicate id
  std::optional<LogEntry> entry;
};

/// Event-sourced navigation session.
///
/// Every accepted mutation becomes a LogEntry with the next sequence number;
/// the entry is handed to the sink before the state changes and before
/// listeners run. Replaying the entries from Idle reproduces the snapshot.
/// Not thread-safe: one owner drives it.
class Session {
 public:
  using Clock = std::function<double()>;
  using Listener = std::function<void(const LogEntry&, const SessionSnapshot&)>;

  explicit Session(LogSink* sink = nullptr, Clock clock = {});

  const SessionSnapshot& snapshot() const noexcept { return snapshot_; }
  WorkflowState state() const noexcept { return snapshot_.state; }
  const std::vector<LogEntry>& log() const noexcept { return log_; }

  /// Rejections are values; a sink failure propagates and leaves the session unchanged.
  CommandOutcome handle_command(const Command& command);

  /// Empty when `command` is legal now, otherwise the rejection reason.
  std::optional<std::string> check_command(const Command& command) const;

  /// Stores a remote annotation (author forced to Remote). Duplicate ids are
  /// ignored without logging or notifying. Throws StateError outside Navigating
  /// and InvalidArgument for malformed annotations.
  AnnotationOutcome apply_remote_annotation(Annotation annotation);

  /// view_from_patient = inverse(glasses_pose_world) * world_from_patient.
  /// Throws StateError unless Registered or Navigating.
  RigidTransform compute_overlay(const RigidTransform& glasses_pose_world) const;

  void add_listener(Listener listener);

  /// Rebuilds a session from log entries. Sequence numbers must run 1, 2, 3...;
  /// a gap throws FormatError naming the missing seq. The replayed session has
  /// no sink; its log holds the given entries.
  static Session replay(const std::vector<LogEntry>& entries);

  /// Later mutations go to `sink`; entries already in the log are not re-sent.
  void set_sink(LogSink* sink) noexcept { sink_ = sink; }

 private:
  LogEntry next_entry(SessionEvent event) const;
  void commit(const LogEntry& entry);
  void apply(const LogEntry& entry);
  void apply_command(const Command& command, std::uint64_t seq);

  LogSink* sink_;
  Clock clock_;
  SessionSnapshot snapshot_;
  std::vector<LogEntry> log_;
  std::vector<Listener> listeners_;
};

}  // namespace holonav
