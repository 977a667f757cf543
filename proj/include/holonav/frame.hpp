#pragma once

#include <array>
#include <random>
#include <string>

#include "holonav/fiducials.hpp"
#include "holonav/geometry.hpp"
#include "holonav/serialization.hpp"

namespace holonav {

inline constexpr double kAdjustmentStep = 1.0;  // mm
inline constexpr int kMaxAdjustmentSteps = 40;
inline constexpr int kFrameConfigVersion = 1;

/// Adjustable head frame. Steps are (nose-bridge extension, left ear, right ear).
struct FrameConfig {
  std::array<int, 3> adjustment_steps{0, 0, 0};
  std::array<bool, 2> ear_screw_locked{false, false};
  /// CT-visible markers in frame coordinates (mm).
  FiducialSet fiducials_frame;
  /// Pose of the removable tracked marker in frame coordinates: maps marker
  /// coordinates into frame coordinates.
  RigidTransform marker_mount;
  /// Per-axis Gaussian reseating error of the mount (mm); 0 = exact kinematic mount.
  double repeatability_sigma = 0.0;

  /// Six-marker non-symmetric constellation with a top-front marker mount.
  static FrameConfig default_config();

  /// Steps in range, >= 3 non-collinear fiducials. Throws InvalidArgument.
  void validate() const;

  friend bool operator==(const FrameConfig&, const FrameConfig&) = default;
};

/// Contact points on the head in frame coordinates.
struct AnchorPoints {
  Point3 nose_bridge;
  Point3 left_ear;
  Point3 right_ear;

  friend bool operator==(const AnchorPoints&, const AnchorPoints&) = default;
};

AnchorPoints nominal_anchor_points();
AnchorPoints anchor_points(const FrameConfig& config);

struct FrameState {
  FrameConfig config;
  bool marker_attached = false;
  /// Mount pose realised by the current attachment (equals config.marker_mount without noise).
  RigidTransform seated_mount;

  friend bool operator==(const FrameState&, const FrameState&) = default;
};

FrameState make_frame_state(FrameConfig config, bool marker_attached = false);

/// Nearest step count, ties toward zero.
std::array<int, 3> quantize_adjustment(const std::array<double, 3>& requested_mm);

/// Throws InvalidArgument if any quantised value leaves [0, kMaxAdjustmentSteps].
FrameState set_adjustment(const FrameState& state, const std::array<double, 3>& requested_mm);

/// Exact reattachment. Throws StateError if already attached.
FrameState attach_marker(const FrameState& state);
/// Reattachment with the configured repeatability noise drawn from `rng`.
FrameState attach_marker(const FrameState& state, std::mt19937_64& rng);
/// Throws StateError if already detached.
FrameState detach_marker(const FrameState& state);

/// Marker pose in frame coordinates. Throws StateError while detached.
const RigidTransform& marker_pose_in_frame(const FrameState& state);

/// Frame fiducials expressed in patient coordinates for a given mounting.
FiducialSet ct_fiducials_patient(const FrameState& state, const RigidTransform& frame_from_patient);

Json frame_config_to_json(const FrameConfig& config);
/// Throws FormatError on version mismatch, malformed fields or out-of-range steps.
FrameConfig frame_config_from_json(const Json& j);

void save_config(const FrameState& state, const std::string& path);
/// Restored frames start with the marker detached.
FrameState restore_config(const std::string& path);

}  // namespace holonav
