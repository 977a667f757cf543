#pragma once

#include <span>
#include <string>
#include <vector>

#include "holonav/geometry.hpp"

namespace holonav {

struct PivotSolution {
  /// Tip position in the pointer-tracker frame (mm).
  Vec3 tip_offset = Vec3::Zero();
  /// Fixed pivot point in the world frame (mm).
  Point3 pivot_world = Point3::Zero();
  double residual_rms = 0.0;
  /// Ratio of largest to smallest singular value of the stacked system.
  double condition = 1.0;
};

/// Above this condition number the pose set does not determine (tip, pivot).
inline constexpr double kUnobservableCondition = 1e6;

/// Pivot calibration by linear least squares over the stacked rows
/// [R_i | -I] (tip; pivot) = -t_i, solved with an SVD of the 3N x 6 matrix.
///
/// Throws InvalidArgument for fewer than 3 poses and UnobservableMotion when
/// the condition number exceeds kUnobservableCondition (identical poses,
/// rotation about a single axis).
PivotSolution pivot_calibrate(std::span<const RigidTransform> poses);

struct CalibrationBounds {
  double max_residual = 0.5;
  double max_condition = 1e4;
};

struct CalibrationVerdict {
  bool accepted = false;
  /// One entry per violated bound: "residual", "condition".
  std::vector<std::string> reasons;
};

CalibrationVerdict calibration_quality(const PivotSolution& solution,
                                       const CalibrationBounds& bounds = {});

}  // namespace holonav
