#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "holonav/geometry.hpp"

namespace holonav {

/// Ordered, labelled landmark positions (mm) expressed in one named frame.
struct FiducialSet {
  std::string frame;
  std::vector<Point3> points;
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return points.size(); }

  /// Labels default to F1..Fn when none are given.
  static FiducialSet from_points(std::string frame, std::vector<Point3> points);

  /// Throws InvalidArgument on a label/point count mismatch or non-finite point.
  void validate() const;

  FiducialSet transformed(const RigidTransform& t, std::string new_frame) const;

  friend bool operator==(const FiducialSet&, const FiducialSet&) = default;
};

Point3 centroid(const std::vector<Point3>& points);

}  // namespace holonav
