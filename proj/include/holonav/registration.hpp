#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "holonav/fiducials.hpp"
#include "holonav/geometry.hpp"

namespace holonav {

struct FrameConfig;

/// Paired landmark sets: source[i] corresponds to target[pairing[i]].
struct Correspondences {
  FiducialSet source;
  FiducialSet target;
  std::vector<std::size_t> pairing;

  /// Identity pairing.
  static Correspondences by_index(FiducialSet source, FiducialSet target);

  /// Equal sizes, at least 3 points, pairing a bijection.
  void validate() const;
};

struct RegistrationResult {
  /// Maps source (patient) coordinates onto target (world) coordinates.
  RigidTransform world_from_patient;
  double fre_rms = 0.0;
  std::vector<double> residuals;
};

/// Relative singular-value floor below which a centred point set counts as collinear.
inline constexpr double kDegeneracyRatio = 1e-9;

/// Closed-form least-squares rigid fit (SVD of the cross-covariance) with the
/// determinant fixed to +1, so a mirrored target still yields a proper rotation.
///
/// Throws InvalidArgument for fewer than 3 pairs and DegenerateConfiguration
/// when the source points are collinear or coincident.
RegistrationResult fit_rigid(const Correspondences& corr);
RegistrationResult fit_rigid(std::span<const Point3> source, std::span<const Point3> target);

/// Sets up to this size are matched by exhaustive permutation search.
inline constexpr std::size_t kExhaustiveMatchLimit = 8;
inline constexpr std::size_t kMaxMatchSize = 10;
/// Pairwise-distance agreement (mm) required by the pruned search above the exhaustive limit.
inline constexpr double kSignatureTolerance = 1.0;

/// Recovers the pairing with the lowest FRE for unlabelled sets of equal size
/// (3..10). FRE ties within 1e-9 mm resolve to the lexicographically smallest
/// pairing.
Correspondences match_correspondences(const FiducialSet& source, const FiducialSet& target);

/// Target registration error (mm) of one point.
double tre(const RegistrationResult& result, const Point3& target_point_patient,
           const Point3& true_point_world);

/// Registration through the removable frame marker:
///   world_from_patient = marker_pose_world * inverse(marker mount) * frame_from_patient
/// where frame_from_patient is fitted from CT-detected fiducials (patient frame,
/// unlabelled) onto the frame's own fiducial layout. FRE and residuals are those
/// of the CT fit.
RegistrationResult register_via_frame_marker(const FiducialSet& ct_frame_fiducials,
                                             const RigidTransform& marker_pose_world,
                                             const FrameConfig& frame);

}  // namespace holonav
