#include "holonav/scene.hpp"

#include <doctest.h>

#include "holonav/errors.hpp"
#include "test_support.hpp"

using namespace holonav;

TEST_CASE("default phantom: every frame marker is detected near its true centre") {
  SimulatedProcedure proc;
  const auto spec = proc.phantom_spec();
  REQUIRE(spec.fiducial_centers.size() == 6);
  CHECK_NOTHROW(spec.validate());
  const auto detections = proc.detect(proc.acquire_ct());
  REQUIRE(detections.points.size() == 6);
  for (const auto& truth : spec.fiducial_centers) {
    double best = 1e9;
    for (const auto& d : detections.points) best = std::min(best, (d - truth).norm());
    CHECK(best < 0.3);
  }
}

TEST_CASE("simulated registration lands the tumour within 2 mm") {
  std::mt19937_64 rng(31);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SimulatedProcedure proc(SceneConfig::default_scene(), seed);
    const Vec3 shift = holonav::testing::random_vec(rng, 0.6);
    const auto result = proc.register_patient(proc.detect(proc.acquire_ct(shift)));
    CHECK(result.fre_rms < 0.5);
    const double err =
        tre(result, proc.config().tumor_center_patient, proc.tumor_center_world());
    CHECK(err < 2.0);
  }
}

TEST_CASE("register_patient refuses a hidden marker") {
  auto config = SceneConfig::default_scene();
  const Point3 head = config.world_from_patient.translation();
  config.room.occluders.push_back({head - Vec3::Constant(400), head + Vec3::Constant(400)});
  SimulatedProcedure proc(config, 2);
  const auto ct = proc.detect(proc.acquire_ct());
  CHECK_THROWS_AS(proc.register_patient(ct), StateError);
}

TEST_CASE("pointer calibration recovers the tip offset") {
  SimulatedProcedure proc(SceneConfig::default_scene(), 4);
  const auto sol = proc.calibrate_pointer();
  CHECK((sol.tip_offset - proc.config().pointer_tip).norm() < 0.5);
  CHECK((sol.pivot_world - proc.config().pivot_world).norm() < 0.5);
  CHECK(calibration_quality(sol).accepted);
}

TEST_CASE("generate_pivot_poses keeps the tip on the pivot") {
  std::mt19937_64 rng(32);
  const Vec3 tip(0, 0, -150);
  const Point3 pivot(10, 20, 30);
  for (const auto& pose : generate_pivot_poses(rng, 50, tip, pivot, 0.6, 0.0)) {
    CHECK((pose.apply(tip) - pivot).norm() < 1e-9);
    // Shaft axis stays within the tilt cone.
    const double tilt = std::acos(std::clamp(pose.rotate(Vec3::UnitZ()).z(), -1.0, 1.0));
    CHECK(tilt <= 0.6 + 1e-9);
  }
}

TEST_CASE("glasses orbit looks at the head from inside the tracked volume") {
  SimulatedProcedure proc;
  const auto& room = proc.config().room;
  const Point3 head = proc.config().world_from_patient.translation();
  for (double t = 0.0; t < 30.0; t += 0.5) {
    const auto g = proc.glasses_pose(t);
    const Vec3 to_head = (head - g.translation()).normalized();
    CHECK(g.rotate(Vec3(0, 0, -1)).dot(to_head) > 0.999);
    CHECK_FALSE(visible_stations(room, g.translation()).empty());
    CHECK_FALSE(visible_stations(room, proc.pointer_pose(t).translation()).empty());
  }
  CHECK_FALSE(visible_stations(room, proc.true_marker_pose_world().translation()).empty());
}

TEST_CASE("a fixed seed reproduces the procedure") {
  SimulatedProcedure a(SceneConfig::default_scene(), 9), b(SceneConfig::default_scene(), 9);
  const auto ca = a.calibrate_pointer(), cb = b.calibrate_pointer();
  CHECK(ca.tip_offset == cb.tip_offset);
  const auto ra = a.register_patient(a.detect(a.acquire_ct()));
  const auto rb = b.register_patient(b.detect(b.acquire_ct()));
  CHECK(ra.world_from_patient == rb.world_from_patient);
}
