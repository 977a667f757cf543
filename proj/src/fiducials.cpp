#include "holonav/fiducials.hpp"

#include "holonav/errors.hpp"

namespace holonav {

FiducialSet FiducialSet::from_points(std::string frame, std::vector<Point3> points) {
  FiducialSet set;
  set.frame = std::move(frame);
  set.points = std::move(points);
  set.labels.reserve(set.points.size());
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    set.labels.push_back("F" + std::to_string(i + 1));
  }
  set.validate();
  return set;
}

void FiducialSet::validate() const {
  if (labels.size() != points.size()) {
    throw InvalidArgument("fiducial set '" + frame + "' has " + std::to_string(points.size()) +
                          " points but " + std::to_string(labels.size()) + " labels");
  }
  for (const auto& p : points) {
    require_finite(p, "fiducial position");
  }
}

FiducialSet FiducialSet::transformed(const RigidTransform& t, std::string new_frame) const {
  FiducialSet out;
  out.frame = std::move(new_frame);
  out.labels = labels;
  out.points.reserve(points.size());
  for (const auto& p : points) {
    out.points.push_back(t.apply(p));
  }
  return out;
}

Point3 centroid(const std::vector<Point3>& points) {
  if (points.empty()) {
    throw InvalidArgument("centroid of an empty point list");
  }
  Point3 sum = Point3::Zero();
  for (const auto& p : points) {
    sum += p;
  }
  return sum / static_cast<double>(points.size());
}

}  // namespace holonav
