#pragma once

// Shared generators for the unit and acceptance suites.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "holonav/geometry.hpp"

namespace holonav::testing {

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline Vec3 random_vec(std::mt19937_64& rng, double half_extent) {
  std::uniform_real_distribution<double> u(-half_extent, half_extent);
  return Vec3(u(rng), u(rng), u(rng));
}

/// Uniform random rotation (Shoemake) and translation in a cube.
inline RigidTransform random_transform(std::mt19937_64& rng, double translation_extent = 500.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const Eigen::Quaterniond q(a * std::sin(2 * std::numbers::pi * u2),
                             a * std::cos(2 * std::numbers::pi * u2),
                             b * std::sin(2 * std::numbers::pi * u3),
                             b * std::cos(2 * std::numbers::pi * u3));
  return RigidTransform(q, random_vec(rng, translation_extent));
}

/// Rodrigues' formula written out independently of Eigen's quaternion code.
inline Vec3 rodrigues(const Vec3& axis, double angle, const Vec3& p) {
  const Vec3 k = axis.normalized();
  return p * std::cos(angle) + k.cross(p) * std::sin(angle) + k * k.dot(p) * (1.0 - std::cos(angle));
}

/// Random points in a cube with centred rank >= 2 (retries on near-collinear draws).
inline std::vector<Point3> random_cloud(std::mt19937_64& rng, std::size_t n, double extent = 100.0) {
  for (;;) {
    std::vector<Point3> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(random_vec(rng, extent));
    if (n < 3) return pts;
    Point3 c = Point3::Zero();
    for (const auto& p : pts) c += p;
    c /= static_cast<double>(n);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    if (es.eigenvalues()[1] > 1e-3 * es.eigenvalues()[2]) return pts;
  }
}

}  // namespace holonav::testing
