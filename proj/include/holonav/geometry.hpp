#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace holonav {

/// Positions and displacements are millimetres in a right-handed frame.
using Vec3 = Eigen::Vector3d;
using Point3 = Eigen::Vector3d;

/// Throws InvalidArgument if any component is NaN or infinite.
const Vec3& require_finite(const Vec3& v, const char* what = "vector");

/// Proper rigid motion: unit-quaternion rotation followed by a translation.
///
/// Instances are immutable. Every constructor and every composition leaves
/// the quaternion normalised, so chains of thousands of compositions do not
/// drift away from SO(3).
class RigidTransform {
 public:
  RigidTransform();
  RigidTransform(const Eigen::Quaterniond& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& translation);
  /// Axis need not be unit length. A zero axis is accepted only with a zero angle.
  static RigidTransform from_axis_angle(const Vec3& axis, double angle,
                                        const Vec3& translation = Vec3::Zero());
  /// Matrix must be a proper rotation to round-off; it is re-orthonormalised via the quaternion.
  static RigidTransform from_matrix(const Eigen::Matrix3d& rotation, const Vec3& translation);

  const Eigen::Quaterniond& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }
  Eigen::Matrix3d rotation_matrix() const { return rotation_.toRotationMatrix(); }

  Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }
  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

  RigidTransform inverse() const;

  /// (a * b)(p) == a(b(p))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b);

  /// Exact member-wise equality, used for bit-exact persistence checks.
  friend bool operator==(const RigidTransform& a, const RigidTransform& b);

 private:
  Eigen::Quaterniond rotation_;
  Vec3 translation_;
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }
inline Point3 apply_point(const RigidTransform& t, const Point3& p) { return t.apply(p); }

/// Angle of the rotation part in [0, pi]; q and -q give the same answer.
double rotation_angle(const RigidTransform& t);

/// Rotation angle (rad) of a^-1 * b.
double rotation_distance(const RigidTransform& a, const RigidTransform& b);

/// Euclidean distance between translation parts (mm).
double translation_distance(const RigidTransform& a, const RigidTransform& b);

/// Rotation vector (axis * angle) to quaternion, valid at and near zero.
Eigen::Quaterniond exp_rotation(const Vec3& rotation_vector);

/// Spherical interpolation of rotation and linear interpolation of translation, s in [0,1].
RigidTransform interpolate(const RigidTransform& a, const RigidTransform& b, double s);

}  // namespace holonav
