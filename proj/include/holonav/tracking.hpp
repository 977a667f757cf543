#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "holonav/geometry.hpp"
#include "holonav/serialization.hpp"

namespace holonav {

/// Fixed emitter covering a cone about its local -z axis.
struct BaseStation {
  int id = 0;
  RigidTransform pose_world;
  double fov_half_angle = 60.0 * 3.14159265358979323846 / 180.0;  // rad
  double max_range = 7000.0;                                       // mm

  Point3 position() const { return pose_world.translation(); }
  Vec3 view_direction() const { return pose_world.rotate(Vec3(0.0, 0.0, -1.0)); }

  /// Station at `position` whose -z axis points at `target`; local x stays horizontal.
  static BaseStation aimed_at(int id, const Point3& position, const Point3& target);
};

/// Axis-aligned box that blocks line of sight.
struct Occluder {
  Point3 min;
  Point3 max;
};

/// Room in world mm; floor at z = 0, x and y in [0, extent].
struct RoomConfig {
  std::vector<BaseStation> stations;
  std::array<double, 2> extent_m{6.0, 6.0};
  std::vector<Occluder> occluders;

  /// 1..4 stations, unique ids, valid cones and ranges, well-formed boxes.
  void validate() const;
};

RoomConfig default_room();

/// True when the closed segment a-b touches the box.
bool segment_hits_box(const Point3& a, const Point3& b, const Occluder& box);

/// Ids (ascending) of stations whose cone and range contain the sensor with an unblocked line of sight.
std::vector<int> visible_stations(const RoomConfig& room, const Point3& sensor_position);

/// The removable frame marker is tracked like the two hand-held trackers.
enum class TrackerId { Glasses, Pointer, Marker };

std::string to_string(TrackerId id);
TrackerId tracker_from_string(const std::string& name);

struct TrackingNoise {
  double sigma_pos = 0.5;   // mm per axis, single station
  double sigma_rot = 1e-3;  // rad per axis, single station
};

struct TrackingSample {
  double time = 0.0;
  TrackerId tracker = TrackerId::Glasses;
  /// Empty on dropout.
  std::optional<RigidTransform> pose;
  std::vector<int> visible_station_ids;
  /// Effective per-axis position sigma after fusing the visible stations.
  double position_sigma = 0.0;

  bool dropout() const { return !pose.has_value(); }
};

/// Perturbs the true pose with Gaussian noise of sigma / sqrt(k), k = number
/// of visible stations; k = 0 yields a dropout sample.
TrackingSample sample_pose(const RoomConfig& room, TrackerId tracker,
                           const RigidTransform& true_pose, const TrackingNoise& noise,
                           std::mt19937_64& rng, double time = 0.0);
TrackingSample sample_pose(const RoomConfig& room, TrackerId tracker,
                           const RigidTransform& true_pose, const TrackingNoise& noise,
                           std::uint64_t seed, double time = 0.0);

struct Waypoint {
  double time = 0.0;  // s
  RigidTransform pose;
};

/// Samples a piecewise (linear position, slerp rotation) path at a fixed
/// rate from the first to the last waypoint time inclusive.
std::vector<TrackingSample> simulate_trajectory(const RoomConfig& room, TrackerId tracker,
                                                std::span<const Waypoint> waypoints,
                                                double rate_hz, const TrackingNoise& noise,
                                                std::mt19937_64& rng);
std::vector<TrackingSample> simulate_trajectory(const RoomConfig& room, TrackerId tracker,
                                                std::span<const Waypoint> waypoints,
                                                double rate_hz, const TrackingNoise& noise,
                                                std::uint64_t seed);

/// Fraction of a horizontal grid (step mm, at height mm) seen by at least
/// `min_stations` stations.
double coverage_fraction(const RoomConfig& room, double height, double step,
                         std::size_t min_stations = 1);

struct TrackerPath {
  TrackerId tracker = TrackerId::Glasses;
  std::vector<Waypoint> waypoints;
};

/// Scenario file contents; see docs in README for the JSON schema.
struct Scenario {
  RoomConfig room;
  TrackingNoise noise;
  double rate_hz = 30.0;
  std::uint64_t seed = 1;
  std::vector<TrackerPath> trackers;
};

Scenario scenario_from_json(const Json& j);
Json room_to_json(const RoomConfig& room);
RoomConfig room_from_json(const Json& j, const std::string& field);

/// Runs each tracker path in file order from one generator seeded with `seed`;
/// output is ordered by time, then tracker order in the file.
std::vector<TrackingSample> run_scenario(const Scenario& scenario);

Json sample_to_json(const TrackingSample& sample);

}  // namespace holonav
