#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "holonav/calibration.hpp"
#include "holonav/fiducials.hpp"
#include "holonav/frame.hpp"
#include "holonav/registration.hpp"
#include "holonav/tracking.hpp"
#include "holonav/volume.hpp"

namespace holonav {

/// Ground truth for a simulated procedure: phantom anatomy, how the frame
/// sits on the head, where the patient lies in the room, and the tracking setup.
struct SceneConfig {
  VolumeGeometry geometry;
  Vec3 tumor_semi_axes{35.0, 30.0, 30.0};
  Point3 tumor_center_patient{-20.0, 30.0, 20.0};
  double fiducial_radius = 3.0;
  FrameConfig frame = FrameConfig::default_config();
  RigidTransform frame_from_patient;
  RigidTransform world_from_patient;
  RoomConfig room = default_room();
  TrackingNoise noise;
  /// Extra per-axis Gaussian error on CT detections (mm).
  double ct_detection_noise = 0.0;
  Vec3 pointer_tip{0.0, 0.0, -150.0};
  Point3 pivot_world{3100.0, 3000.0, 1100.0};

  static SceneConfig default_scene();
};

/// Default phantom: 70 x 60 x 60 mm tumor plus the default frame's six
/// markers at the default mounting.
PhantomSpec default_phantom_spec();

/// `count` pointer poses pivoting about `pivot` with tip offset `tip`:
/// random spin about the shaft and a tilt of up to `max_tilt` rad about a
/// random horizontal axis, plus Gaussian translation noise.
std::vector<RigidTransform> generate_pivot_poses(std::mt19937_64& rng, std::size_t count,
                                                 const Vec3& tip, const Point3& pivot,
                                                 double max_tilt, double sigma_translation);

/// Deterministic (per seed) stand-in for the CT scanner, the tracking system
/// and the operator's pointer, feeding the navigation pipeline.
class SimulatedProcedure {
 public:
  explicit SimulatedProcedure(SceneConfig config = SceneConfig::default_scene(),
                              std::uint64_t seed = 1);

  const SceneConfig& config() const noexcept { return config_; }
  std::mt19937_64& rng() noexcept { return rng_; }

  PhantomSpec phantom_spec() const;
  /// Origin shift (mm) moves the sampling grid, changing discretisation.
  VoxelVolume acquire_ct(const Vec3& origin_shift = Vec3::Zero()) const;
  FiducialSet detect(const VoxelVolume& ct);

  RigidTransform true_marker_pose_world() const;
  TrackingSample track_marker(double time = 0.0);
  /// Frame-marker route with one tracked marker sample. StateError on dropout.
  RegistrationResult register_patient(const FiducialSet& ct_detections);

  PivotSolution calibrate_pointer(std::size_t poses = 100, double sigma_translation = 0.2);

  Point3 tumor_center_world() const;
  /// Slow orbit of the surgeon's head around the table.
  RigidTransform glasses_pose(double time) const;
  /// Pointer resting near the head with a slow sweep.
  RigidTransform pointer_pose(double time) const;

 private:
  SceneConfig config_;
  std::mt19937_64 rng_;
};

}  // namespace holonav
