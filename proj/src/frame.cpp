#include "holonav/frame.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <numbers>

#include "holonav/errors.hpp"

namespace holonav {

FrameConfig FrameConfig::default_config() {
  FrameConfig c;
  c.fiducials_frame = FiducialSet::from_points(
      "frame", {Point3(2.0, 85.0, 8.0), Point3(-62.0, 38.0, 30.0), Point3(66.0, 30.0, 22.0),
                Point3(-70.0, -22.0, 4.0), Point3(73.0, -12.0, -14.0), Point3(12.0, 52.0, 50.0)});
  c.marker_mount = RigidTransform::from_axis_angle(Vec3::UnitX(), 20.0 * std::numbers::pi / 180.0,
                                                   Vec3(0.0, 60.0, 110.0));
  return c;
}

void FrameConfig::validate() const {
  for (int s : adjustment_steps) {
    if (s < 0 || s > kMaxAdjustmentSteps) {
      throw InvalidArgument("adjustment step " + std::to_string(s) + " outside [0, " +
                            std::to_string(kMaxAdjustmentSteps) + "]");
    }
  }
  fiducials_frame.validate();
  if (fiducials_frame.size() < 3) {
    throw InvalidArgument("frame needs at least 3 fiducials");
  }
  const Point3 mean = centroid(fiducials_frame.points);
  Eigen::Matrix3Xd centered(3, static_cast<Eigen::Index>(fiducials_frame.size()));
  for (std::size_t i = 0; i < fiducials_frame.size(); ++i) {
    centered.col(static_cast<Eigen::Index>(i)) = fiducials_frame.points[i] - mean;
  }
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  if (svd.singularValues()[1] <= 1e-9 * svd.singularValues()[0]) {
    throw InvalidArgument("frame fiducials are collinear");
  }
  if (!(repeatability_sigma >= 0.0)) {
    throw InvalidArgument("repeatability sigma must be non-negative");
  }
}

AnchorPoints nominal_anchor_points() {
  return {Point3(0.0, 95.0, -10.0), Point3(-75.0, 0.0, -20.0), Point3(75.0, 0.0, -20.0)};
}

AnchorPoints anchor_points(const FrameConfig& config) {
  AnchorPoints a = nominal_anchor_points();
  const auto& s = config.adjustment_steps;
  a.nose_bridge.y() += s[0] * kAdjustmentStep;
  a.left_ear.x() -= s[1] * kAdjustmentStep;
  a.right_ear.x() += s[2] * kAdjustmentStep;
  return a;
}

FrameState make_frame_state(FrameConfig config, bool marker_attached) {
  config.validate();
  FrameState st;
  st.seated_mount = config.marker_mount;
  st.config = std::move(config);
  st.marker_attached = marker_attached;
  return st;
}

std::array<int, 3> quantize_adjustment(const std::array<double, 3>& requested_mm) {
  std::array<int, 3> steps{};
  for (std::size_t i = 0; i < 3; ++i) {
    const double q = requested_mm[i] / kAdjustmentStep;
    if (!std::isfinite(q)) {
      throw InvalidArgument("adjustment must be finite");
    }
    // Round half toward zero: 2.5 -> 2, -2.5 -> -2.
    const double magnitude = std::ceil(std::abs(q) - 0.5);
    steps[i] = static_cast<int>(std::copysign(magnitude, q));
  }
  return steps;
}

FrameState set_adjustment(const FrameState& state, const std::array<double, 3>& requested_mm) {
  const auto steps = quantize_adjustment(requested_mm);
  for (std::size_t i = 0; i < 3; ++i) {
    if (steps[i] < 0 || steps[i] > kMaxAdjustmentSteps) {
      throw InvalidArgument("adjustment " + std::to_string(requested_mm[i]) +
                            " mm outside the mechanical range [0, " +
                            std::to_string(kMaxAdjustmentSteps * kAdjustmentStep) + "] mm");
    }
  }
  FrameState next = state;
  next.config.adjustment_steps = steps;
  return next;
}

FrameState attach_marker(const FrameState& state) {
  if (state.marker_attached) {
    throw StateError("marker is already attached");
  }
  FrameState next = state;
  next.marker_attached = true;
  next.seated_mount = state.config.marker_mount;
  return next;
}

FrameState attach_marker(const FrameState& state, std::mt19937_64& rng) {
  FrameState next = attach_marker(state);
  const double sigma = state.config.repeatability_sigma;
  if (sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, sigma);
    const Vec3 offset(normal(rng), normal(rng), normal(rng));
    next.seated_mount = RigidTransform::from_translation(offset) * state.config.marker_mount;
  }
  return next;
}

FrameState detach_marker(const FrameState& state) {
  if (!state.marker_attached) {
    throw StateError("marker is already detached");
  }
  FrameState next = state;
  next.marker_attached = false;
  next.seated_mount = state.config.marker_mount;
  return next;
}

const RigidTransform& marker_pose_in_frame(const FrameState& state) {
  if (!state.marker_attached) {
    throw StateError("marker pose queried while the marker is detached");
  }
  return state.seated_mount;
}

FiducialSet ct_fiducials_patient(const FrameState& state, const RigidTransform& frame_from_patient) {
  return state.config.fiducials_frame.transformed(frame_from_patient.inverse(), "patient");
}

Json frame_config_to_json(const FrameConfig& config) {
  return Json{{"version", kFrameConfigVersion},
              {"adjustment_steps", config.adjustment_steps},
              {"ear_screw_locked", config.ear_screw_locked},
              {"fiducials", fiducials_to_json(config.fiducials_frame)},
              {"marker_mount", transform_to_json(config.marker_mount)},
              {"noise", Json{{"repeatability_sigma_mm", config.repeatability_sigma}}}};
}

FrameConfig frame_config_from_json(const Json& j) {
  if (!j.is_object()) {
    throw FormatError("frame", "expected a JSON object");
  }
  if (!j.contains("version") || !j.at("version").is_number_integer() ||
      j.at("version").get<int>() != kFrameConfigVersion) {
    throw FormatError("version", "expected frame config version " +
                                     std::to_string(kFrameConfigVersion));
  }
  FrameConfig c;
  const Json& steps = j.value("adjustment_steps", Json());
  if (!steps.is_array() || steps.size() != 3) {
    throw FormatError("adjustment_steps", "expected 3 integers");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (!steps[i].is_number_integer()) {
      throw FormatError("adjustment_steps", "expected 3 integers");
    }
    c.adjustment_steps[i] = steps[i].get<int>();
    if (c.adjustment_steps[i] < 0 || c.adjustment_steps[i] > kMaxAdjustmentSteps) {
      throw FormatError("adjustment_steps", "step " + std::to_string(c.adjustment_steps[i]) +
                                                " outside [0, " +
                                                std::to_string(kMaxAdjustmentSteps) + "]");
    }
  }
  if (j.contains("ear_screw_locked")) {
    const Json& locks = j.at("ear_screw_locked");
    if (!locks.is_array() || locks.size() != 2 || !locks[0].is_boolean() ||
        !locks[1].is_boolean()) {
      throw FormatError("ear_screw_locked", "expected 2 booleans");
    }
    c.ear_screw_locked = {locks[0].get<bool>(), locks[1].get<bool>()};
  }
  if (!j.contains("fiducials")) {
    throw FormatError("fiducials", "missing");
  }
  c.fiducials_frame = fiducials_from_json(j.at("fiducials"), "fiducials");
  if (!j.contains("marker_mount")) {
    throw FormatError("marker_mount", "missing");
  }
  c.marker_mount = transform_from_json(j.at("marker_mount"), "marker_mount");
  if (j.contains("noise")) {
    c.repeatability_sigma = j.at("noise").value("repeatability_sigma_mm", 0.0);
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError("frame", e.what());
  }
  return c;
}

void save_config(const FrameState& state, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw FormatError(path, "cannot open for writing");
  }
  out << frame_config_to_json(state.config).dump(2) << '\n';
  if (!out) {
    throw FormatError(path, "write failed");
  }
}

FrameState restore_config(const std::string& path) {
  return make_frame_state(frame_config_from_json(read_json_file(path)), false);
}

}  // namespace holonav
