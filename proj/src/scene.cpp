#include "holonav/scene.hpp"

#include <cmath>
#include <numbers>

#include "holonav/errors.hpp"

namespace holonav {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

SceneConfig SceneConfig::default_scene() {
  SceneConfig c;
  c.frame_from_patient =
      RigidTransform::from_axis_angle(Vec3::UnitZ(), 4.0 * kDeg, Vec3(1.5, -3.0, 2.0));
  // Supine patient, head toward +y, near the room centre at table height.
  c.world_from_patient = RigidTransform::from_axis_angle(Vec3::UnitZ(), 180.0 * kDeg,
                                                         Vec3(3000.0, 3200.0, 1050.0));
  return c;
}

PhantomSpec default_phantom_spec() { return SimulatedProcedure().phantom_spec(); }

std::vector<RigidTransform> generate_pivot_poses(std::mt19937_64& rng, std::size_t count,
                                                 const Vec3& tip, const Point3& pivot,
                                                 double max_tilt, double sigma_translation) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<RigidTransform> poses;
  poses.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double spin = 2.0 * std::numbers::pi * unit(rng);
    const double heading = 2.0 * std::numbers::pi * unit(rng);
    const double tilt = max_tilt * unit(rng);
    const Vec3 tilt_axis(std::cos(heading), std::sin(heading), 0.0);
    const Eigen::Quaterniond r = Eigen::Quaterniond(Eigen::AngleAxisd(tilt, tilt_axis)) *
                                 Eigen::Quaterniond(Eigen::AngleAxisd(spin, Vec3::UnitZ()));
    Vec3 t = pivot - r * tip;
    if (sigma_translation > 0.0) {
      t += sigma_translation * Vec3(normal(rng), normal(rng), normal(rng));
    }
    poses.emplace_back(r, t);
  }
  return poses;
}

SimulatedProcedure::SimulatedProcedure(SceneConfig config, std::uint64_t seed)
    : config_(std::move(config)), rng_(seed) {
  config_.frame.validate();
  config_.room.validate();
}

PhantomSpec SimulatedProcedure::phantom_spec() const {
  PhantomSpec spec;
  spec.tumor_semi_axes = config_.tumor_semi_axes;
  spec.tumor_center = config_.tumor_center_patient;
  spec.fiducial_radius = config_.fiducial_radius;
  const FrameState frame = make_frame_state(config_.frame);
  spec.fiducial_centers = ct_fiducials_patient(frame, config_.frame_from_patient).points;
  return spec;
}

VoxelVolume SimulatedProcedure::acquire_ct(const Vec3& origin_shift) const {
  VolumeGeometry g = config_.geometry;
  g.origin += origin_shift;
  return synthesize_phantom(phantom_spec(), g);
}

FiducialSet SimulatedProcedure::detect(const VoxelVolume& ct) {
  const auto found = detect_fiducials(ct, kDefaultFiducialThreshold);
  std::vector<Point3> points;
  points.reserve(found.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& d : found) {
    Point3 p = d.centroid;
    if (config_.ct_detection_noise > 0.0) {
      p += config_.ct_detection_noise * Vec3(normal(rng_), normal(rng_), normal(rng_));
    }
    points.push_back(p);
  }
  return FiducialSet::from_points("patient", std::move(points));
}

RigidTransform SimulatedProcedure::true_marker_pose_world() const {
  return config_.world_from_patient * config_.frame_from_patient.inverse() *
         config_.frame.marker_mount;
}

TrackingSample SimulatedProcedure::track_marker(double time) {
  return sample_pose(config_.room, TrackerId::Marker, true_marker_pose_world(), config_.noise,
                     rng_, time);
}

RegistrationResult SimulatedProcedure::register_patient(const FiducialSet& ct_detections) {
  const TrackingSample marker = track_marker();
  if (marker.dropout()) {
    throw StateError("frame marker is not visible to any base station");
  }
  return register_via_frame_marker(ct_detections, *marker.pose, config_.frame);
}

PivotSolution SimulatedProcedure::calibrate_pointer(std::size_t poses, double sigma_translation) {
  const auto samples = generate_pivot_poses(rng_, poses, config_.pointer_tip, config_.pivot_world,
                                            35.0 * kDeg, sigma_translation);
  return pivot_calibrate(samples);
}

Point3 SimulatedProcedure::tumor_center_world() const {
  return config_.world_from_patient.apply(config_.tumor_center_patient);
}

RigidTransform SimulatedProcedure::glasses_pose(double time) const {
  const Point3 head = config_.world_from_patient.translation();
  const double phase = 0.2 * time;
  const Point3 eye = head + Vec3(600.0 * std::cos(phase), 600.0 * std::sin(phase), 650.0);
  return BaseStation::aimed_at(0, eye, head).pose_world;
}

RigidTransform SimulatedProcedure::pointer_pose(double time) const {
  const Point3 head = config_.world_from_patient.translation();
  const double sweep = 0.3 * std::sin(0.5 * time);
  return RigidTransform::from_axis_angle(Vec3::UnitX(), sweep,
                                         head + Vec3(40.0 * std::sin(0.7 * time), 80.0, 180.0));
}

}  // namespace holonav
