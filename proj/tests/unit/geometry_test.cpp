#include "holonav/geometry.hpp"
#include "holonav/serialization.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "holonav/errors.hpp"
#include "test_support.hpp"

using namespace holonav;
using holonav::testing::random_transform;
using holonav::testing::random_vec;

namespace {
constexpr double kTol = 1e-9;
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("from_axis_angle: zero rotation is the identity") {
  const auto t = RigidTransform::from_axis_angle(Vec3::UnitZ(), 0.0, Vec3::Zero());
  CHECK(rotation_angle(t) == 0.0);
  CHECK(t.translation().norm() == 0.0);
  CHECK((t.apply(Point3(1, 2, 3)) - Point3(1, 2, 3)).norm() < kTol);
}

TEST_CASE("from_axis_angle: quarter turn about z maps x to y") {
  const auto t = RigidTransform::from_axis_angle(Vec3::UnitZ(), kPi / 2);
  CHECK((t.apply(Point3(1, 0, 0)) - Point3(0, 1, 0)).norm() < kTol);
}

TEST_CASE("from_axis_angle: 120 degrees about the diagonal cycles the axes") {
  const Vec3 axis = Vec3(1, 1, 1) / std::sqrt(3.0);
  const Vec3 oracle = holonav::testing::rodrigues(axis, 2 * kPi / 3, Vec3(1, 0, 0));
  CHECK((oracle - Vec3(0, 1, 0)).norm() < kTol);
  const auto t = RigidTransform::from_axis_angle(axis, 2 * kPi / 3);
  CHECK((t.apply(Point3(1, 0, 0)) - oracle).norm() < kTol);
}

TEST_CASE("from_axis_angle: matches Rodrigues for random axes and unnormalised input") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ang(-2 * kPi, 2 * kPi);
  for (int i = 0; i < 200; ++i) {
    const Vec3 axis = 3.7 * holonav::testing::random_unit(rng);
    const double a = ang(rng);
    const Vec3 p = random_vec(rng, 100);
    const auto t = RigidTransform::from_axis_angle(axis, a);
    CHECK((t.apply(p) - holonav::testing::rodrigues(axis, a, p)).norm() < kTol);
  }
}

TEST_CASE("from_axis_angle: zero axis with a non-zero angle is rejected") {
  CHECK_THROWS_AS(RigidTransform::from_axis_angle(Vec3::Zero(), 0.3), InvalidArgument);
  CHECK_NOTHROW(RigidTransform::from_axis_angle(Vec3::Zero(), 0.0));
}

TEST_CASE("constructors reject non-finite input") {
  const double nan = std::nan("");
  CHECK_THROWS_AS(RigidTransform(Eigen::Quaterniond::Identity(), Vec3(nan, 0, 0)), InvalidArgument);
  CHECK_THROWS_AS(RigidTransform(Eigen::Quaterniond(0, 0, 0, 0), Vec3::Zero()), InvalidArgument);
  CHECK_THROWS_AS(require_finite(Vec3(0, INFINITY, 0)), InvalidArgument);
}

TEST_CASE("compose: identity law and inverse law") {
  std::mt19937_64 rng(3);
  const auto t = random_transform(rng);
  const auto left = RigidTransform::identity() * t;
  CHECK(rotation_distance(left, t) < kTol);
  CHECK(translation_distance(left, t) < kTol);
  const auto id = t * invert(t);
  CHECK(rotation_angle(id) < kTol);
  CHECK(id.translation().norm() < kTol);
}

TEST_CASE("compose: pointwise application on 100 random points") {
  std::mt19937_64 rng(4);
  const auto a = random_transform(rng);
  const auto b = random_transform(rng);
  const auto ab = compose(a, b);
  for (int i = 0; i < 100; ++i) {
    const Point3 p = random_vec(rng, 200);
    CHECK((ab.apply(p) - a.apply(b.apply(p))).norm() < kTol);
  }
}

TEST_CASE("invert: identity, pure translation, random transforms") {
  CHECK(invert(RigidTransform::identity()) == RigidTransform::identity());
  const auto inv = invert(RigidTransform::from_translation(Vec3(0, 0, 5)));
  CHECK((inv.translation() - Vec3(0, 0, -5)).norm() == 0.0);
  CHECK(rotation_angle(inv) == 0.0);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto t = random_transform(rng);
    const auto both = invert(t) * t;
    CHECK(rotation_angle(both) < kTol);
    CHECK(both.translation().norm() < kTol);
  }
}

TEST_CASE("apply_point: trivial cases") {
  CHECK((apply_point(RigidTransform::identity(), Point3(1, 2, 3)) - Point3(1, 2, 3)).norm() == 0.0);
  CHECK((apply_point(RigidTransform::from_translation(Vec3(10, 20, 30)), Point3::Zero()) -
         Point3(10, 20, 30))
            .norm() == 0.0);
  const auto rz = RigidTransform::from_axis_angle(Vec3::UnitZ(), kPi / 2);
  CHECK((apply_point(rz, Point3(1, 0, 0)) - Point3(0, 1, 0)).norm() < kTol);
}

TEST_CASE("property: isometry, associativity, unit norm, double cover") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_transform(rng);
    const auto b = random_transform(rng);
    const auto c = random_transform(rng);
    const Point3 p = random_vec(rng, 300);
    const Point3 q = random_vec(rng, 300);

    CHECK(std::abs((a.apply(p) - a.apply(q)).norm() - (p - q).norm()) < kTol);

    const auto left = (a * b) * c;
    const auto right = a * (b * c);
    CHECK(rotation_distance(left, right) < kTol);
    CHECK(translation_distance(left, right) < kTol);

    CHECK(std::abs(left.rotation().norm() - 1.0) < kTol);

    const RigidTransform flipped(Eigen::Quaterniond(-a.rotation().coeffs()), a.translation());
    CHECK((flipped.apply(p) - a.apply(p)).norm() < kTol);
    CHECK(rotation_distance(flipped, a) < kTol);
  }
}

TEST_CASE("long composition chains stay normalised") {
  std::mt19937_64 rng(8);
  RigidTransform acc;
  const auto step = RigidTransform::from_axis_angle(holonav::testing::random_unit(rng), 0.0123,
                                                    Vec3(0.1, 0.2, 0.3));
  for (int i = 0; i < 100000; ++i) acc = acc * step;
  CHECK(std::abs(acc.rotation().norm() - 1.0) < kTol);
}

TEST_CASE("interpolate: endpoints and midpoint") {
  const auto a = RigidTransform::from_translation(Vec3(0, 0, 0));
  const auto b = RigidTransform::from_axis_angle(Vec3::UnitZ(), kPi / 2, Vec3(10, 0, 0));
  CHECK(rotation_distance(interpolate(a, b, 0.0), a) < kTol);
  CHECK(rotation_distance(interpolate(a, b, 1.0), b) < kTol);
  const auto mid = interpolate(a, b, 0.5);
  CHECK(std::abs(rotation_angle(mid) - kPi / 4) < kTol);
  CHECK((mid.translation() - Vec3(5, 0, 0)).norm() < kTol);
}

TEST_CASE("transform JSON round trip is bit-exact") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 2000; ++i) {
    const auto t = holonav::testing::random_transform(rng, 3000.0);
    const auto back = transform_from_json(Json::parse(transform_to_json(t).dump()), "t");
    REQUIRE(back == t);
    // Composition results reload exactly too.
    const auto c = t * holonav::testing::random_transform(rng);
    REQUIRE(transform_from_json(Json::parse(transform_to_json(c).dump()), "c") == c);
  }
}
