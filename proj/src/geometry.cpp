#include "holonav/geometry.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "holonav/errors.hpp"

namespace holonav {

const Vec3& require_finite(const Vec3& v, const char* what) {
  if (!v.allFinite()) {
    throw InvalidArgument(std::string(what) + " has a non-finite component");
  }
  return v;
}

namespace {

Eigen::Quaterniond normalized_or_throw(const Eigen::Quaterniond& q) {
  const double n = q.norm();
  if (!std::isfinite(n) || n < 1e-12) {
    throw InvalidArgument("rotation quaternion must be finite and non-zero");
  }
  // Already unit to rounding: keep the bits so serialised poses reload exactly.
  if (std::abs(q.coeffs().squaredNorm() - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon()) {
    return q;
  }
  return Eigen::Quaterniond(q.coeffs() / n);
}

}  // namespace

RigidTransform::RigidTransform()
    : rotation_(Eigen::Quaterniond::Identity()), translation_(Vec3::Zero()) {}

RigidTransform::RigidTransform(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : rotation_(normalized_or_throw(rotation)),
      translation_(require_finite(translation, "translation")) {}

RigidTransform RigidTransform::from_translation(const Vec3& translation) {
  return RigidTransform(Eigen::Quaterniond::Identity(), translation);
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis, double angle,
                                               const Vec3& translation) {
  require_finite(axis, "axis");
  if (!std::isfinite(angle)) {
    throw InvalidArgument("angle must be finite");
  }
  const double n = axis.norm();
  if (n == 0.0) {
    if (angle != 0.0) {
      throw InvalidArgument("zero rotation axis with non-zero angle");
    }
    return from_translation(translation);
  }
  return RigidTransform(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis / n)), translation);
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix3d& rotation,
                                           const Vec3& translation) {
  if (!rotation.allFinite()) {
    throw InvalidArgument("rotation matrix has a non-finite entry");
  }
  return RigidTransform(Eigen::Quaterniond(rotation), translation);
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Quaterniond inv = rotation_.conjugate();
  return RigidTransform(inv, -(inv * translation_));
}

RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_);
}

bool operator==(const RigidTransform& a, const RigidTransform& b) {
  return a.rotation_.coeffs() == b.rotation_.coeffs() && a.translation_ == b.translation_;
}

double rotation_angle(const RigidTransform& t) {
  const auto& q = t.rotation();
  // atan2 form stays accurate for tiny angles where acos(w) loses half the digits.
  const double s = q.vec().norm();
  return 2.0 * std::atan2(s, std::abs(q.w()));
}

double rotation_distance(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle(a.inverse() * b);
}

double translation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation() - b.translation()).norm();
}

Eigen::Quaterniond exp_rotation(const Vec3& rotation_vector) {
  const double angle = rotation_vector.norm();
  if (angle < 1e-300) {
    return Eigen::Quaterniond::Identity();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, rotation_vector / angle));
}

RigidTransform interpolate(const RigidTransform& a, const RigidTransform& b, double s) {
  return RigidTransform(a.rotation().slerp(s, b.rotation()),
                        a.translation() + s * (b.translation() - a.translation()));
}

}  // namespace holonav
