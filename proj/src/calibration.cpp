#include "holonav/calibration.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

#include "holonav/errors.hpp"

namespace holonav {

PivotSolution pivot_calibrate(std::span<const RigidTransform> poses) {
  if (poses.size() < 3) {
    throw InvalidArgument("pivot calibration needs at least 3 poses, got " +
                          std::to_string(poses.size()));
  }
  const auto rows = static_cast<Eigen::Index>(3 * poses.size());
  Eigen::MatrixXd a(rows, 6);
  Eigen::VectorXd b(rows);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(3 * i);
    a.block<3, 3>(r, 0) = poses[i].rotation_matrix();
    a.block<3, 3>(r, 3) = -Eigen::Matrix3d::Identity();
    b.segment<3>(r) = -poses[i].translation();
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double condition =
      s[5] > 0.0 ? s[0] / s[5] : std::numeric_limits<double>::infinity();
  if (!(condition <= kUnobservableCondition)) {
    throw UnobservableMotion("pivot poses leave the tip unobservable (condition " +
                             std::to_string(condition) +
                             "); rotate about at least two distinct axes");
  }
  const Eigen::VectorXd x = svd.solve(b);

  PivotSolution sol;
  sol.tip_offset = x.head<3>();
  sol.pivot_world = x.tail<3>();
  sol.condition = condition;
  double sum_sq = 0.0;
  for (const auto& pose : poses) {
    sum_sq += (pose.apply(sol.tip_offset) - sol.pivot_world).squaredNorm();
  }
  sol.residual_rms = std::sqrt(sum_sq / static_cast<double>(poses.size()));
  return sol;
}

CalibrationVerdict calibration_quality(const PivotSolution& solution,
                                       const CalibrationBounds& bounds) {
  CalibrationVerdict v;
  if (!(solution.residual_rms <= bounds.max_residual)) {
    v.reasons.emplace_back("residual");
  }
  if (!(solution.condition <= bounds.max_condition)) {
    v.reasons.emplace_back("condition");
  }
  v.accepted = v.reasons.empty();
  return v;
}

}  // namespace holonav
