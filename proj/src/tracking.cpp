#include "holonav/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "holonav/errors.hpp"

namespace holonav {

BaseStation BaseStation::aimed_at(int id, const Point3& position, const Point3& target) {
  const Vec3 forward = target - position;
  if (!(forward.norm() > 0.0)) {
    throw InvalidArgument("station aim target coincides with its position");
  }
  const Vec3 z = -forward.normalized();
  Vec3 x = Vec3::UnitZ().cross(z);
  if (x.norm() < 1e-12) {
    x = Vec3::UnitX();
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  BaseStation s;
  s.id = id;
  s.pose_world = RigidTransform::from_matrix(r, position);
  return s;
}

void RoomConfig::validate() const {
  if (stations.empty() || stations.size() > 4) {
    throw InvalidArgument("room needs 1 to 4 base stations, got " +
                          std::to_string(stations.size()));
  }
  std::set<int> ids;
  for (const auto& s : stations) {
    if (!ids.insert(s.id).second) {
      throw InvalidArgument("duplicate station id " + std::to_string(s.id));
    }
    if (!(s.fov_half_angle > 0.0 && s.fov_half_angle < std::numbers::pi / 2)) {
      throw InvalidArgument("station " + std::to_string(s.id) +
                            " field-of-view half angle must be in (0, pi/2)");
    }
    if (!(s.max_range > 0.0)) {
      throw InvalidArgument("station " + std::to_string(s.id) + " range must be positive");
    }
  }
  if (!(extent_m[0] > 0.0 && extent_m[1] > 0.0)) {
    throw InvalidArgument("room extent must be positive");
  }
  for (const auto& box : occluders) {
    require_finite(box.min, "occluder min");
    require_finite(box.max, "occluder max");
    if ((box.max.array() < box.min.array()).any()) {
      throw InvalidArgument("occluder max corner lies below its min corner");
    }
  }
}

RoomConfig default_room() {
  RoomConfig room;
  room.extent_m = {6.0, 6.0};
  constexpr double kHeight = 2500.0;
  const Point3 aim(3000.0, 3000.0, 1000.0);
  const std::array<Point3, 4> corners = {Point3(0.0, 0.0, kHeight), Point3(6000.0, 0.0, kHeight),
                                         Point3(6000.0, 6000.0, kHeight),
                                         Point3(0.0, 6000.0, kHeight)};
  for (int i = 0; i < 4; ++i) {
    room.stations.push_back(BaseStation::aimed_at(i, corners[static_cast<std::size_t>(i)], aim));
  }
  return room;
}

bool segment_hits_box(const Point3& a, const Point3& b, const Occluder& box) {
  double t_enter = 0.0;
  double t_exit = 1.0;
  const Vec3 d = b - a;
  for (int axis = 0; axis < 3; ++axis) {
    if (d[axis] == 0.0) {
      if (a[axis] < box.min[axis] || a[axis] > box.max[axis]) {
        return false;
      }
      continue;
    }
    double t0 = (box.min[axis] - a[axis]) / d[axis];
    double t1 = (box.max[axis] - a[axis]) / d[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) {
      return false;
    }
  }
  return true;
}

std::vector<int> visible_stations(const RoomConfig& room, const Point3& sensor_position) {
  std::vector<int> ids;
  for (const auto& station : room.stations) {
    const Vec3 to_sensor = sensor_position - station.position();
    const double range = to_sensor.norm();
    if (range == 0.0 || range > station.max_range) {
      continue;
    }
    const double cos_angle = station.view_direction().dot(to_sensor) / range;
    if (cos_angle < std::cos(station.fov_half_angle)) {
      continue;
    }
    const bool blocked =
        std::any_of(room.occluders.begin(), room.occluders.end(), [&](const Occluder& box) {
          return segment_hits_box(station.position(), sensor_position, box);
        });
    if (!blocked) {
      ids.push_back(station.id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string to_string(TrackerId id) {
  switch (id) {
    case TrackerId::Glasses: return "glasses";
    case TrackerId::Pointer: return "pointer";
    case TrackerId::Marker: return "marker";
  }
  return "glasses";
}

TrackerId tracker_from_string(const std::string& name) {
  if (name == "glasses") return TrackerId::Glasses;
  if (name == "pointer") return TrackerId::Pointer;
  if (name == "marker") return TrackerId::Marker;
  throw InvalidArgument("unknown tracker '" + name + "' (expected glasses, pointer or marker)");
}

TrackingSample sample_pose(const RoomConfig& room, TrackerId tracker,
                           const RigidTransform& true_pose, const TrackingNoise& noise,
                           std::mt19937_64& rng, double time) {
  if (!(noise.sigma_pos >= 0.0) || !(noise.sigma_rot >= 0.0)) {
    throw InvalidArgument("noise sigmas must be non-negative");
  }
  TrackingSample s;
  s.time = time;
  s.tracker = tracker;
  s.visible_station_ids = visible_stations(room, true_pose.translation());
  const std::size_t k = s.visible_station_ids.size();
  if (k == 0) {
    return s;
  }
  const double fuse = 1.0 / std::sqrt(static_cast<double>(k));
  s.position_sigma = noise.sigma_pos * fuse;
  const double rot_sigma = noise.sigma_rot * fuse;

  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 dp;
  Vec3 dr;
  for (int i = 0; i < 3; ++i) dp[i] = normal(rng);
  for (int i = 0; i < 3; ++i) dr[i] = normal(rng);

  if (s.position_sigma == 0.0 && rot_sigma == 0.0) {
    s.pose = true_pose;
    return s;
  }
  const Eigen::Quaterniond rotation =
      rot_sigma == 0.0 ? true_pose.rotation() : exp_rotation(rot_sigma * dr) * true_pose.rotation();
  s.pose = RigidTransform(rotation, true_pose.translation() + s.position_sigma * dp);
  return s;
}

TrackingSample sample_pose(const RoomConfig& room, TrackerId tracker,
                           const RigidTransform& true_pose, const TrackingNoise& noise,
                           std::uint64_t seed, double time) {
  std::mt19937_64 rng(seed);
  return sample_pose(room, tracker, true_pose, noise, rng, time);
}

std::vector<TrackingSample> simulate_trajectory(const RoomConfig& room, TrackerId tracker,
                                                std::span<const Waypoint> waypoints,
                                                double rate_hz, const TrackingNoise& noise,
                                                std::mt19937_64& rng) {
  if (waypoints.size() < 2) {
    throw InvalidArgument("trajectory needs at least 2 waypoints");
  }
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (!(waypoints[i].time > waypoints[i - 1].time)) {
      throw InvalidArgument("waypoint times must be strictly increasing (index " +
                            std::to_string(i) + ")");
    }
  }
  if (!(rate_hz > 0.0 && std::isfinite(rate_hz))) {
    throw InvalidArgument("sample rate must be positive");
  }
  const double t0 = waypoints.front().time;
  const double t_end = waypoints.back().time;
  const auto count = static_cast<std::size_t>(std::floor((t_end - t0) * rate_hz + 1e-9)) + 1;

  std::vector<TrackingSample> out;
  out.reserve(count);
  std::size_t seg = 0;
  for (std::size_t n = 0; n < count; ++n) {
    const double t = t0 + static_cast<double>(n) / rate_hz;
    while (seg + 2 < waypoints.size() && t > waypoints[seg + 1].time) {
      ++seg;
    }
    const auto& a = waypoints[seg];
    const auto& b = waypoints[seg + 1];
    const double s = std::clamp((t - a.time) / (b.time - a.time), 0.0, 1.0);
    out.push_back(sample_pose(room, tracker, interpolate(a.pose, b.pose, s), noise, rng, t));
  }
  return out;
}

std::vector<TrackingSample> simulate_trajectory(const RoomConfig& room, TrackerId tracker,
                                                std::span<const Waypoint> waypoints,
                                                double rate_hz, const TrackingNoise& noise,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return simulate_trajectory(room, tracker, waypoints, rate_hz, noise, rng);
}

double coverage_fraction(const RoomConfig& room, double height, double step,
                         std::size_t min_stations) {
  if (!(step > 0.0)) {
    throw InvalidArgument("coverage grid step must be positive");
  }
  std::size_t total = 0;
  std::size_t covered = 0;
  const double xmax = room.extent_m[0] * 1000.0;
  const double ymax = room.extent_m[1] * 1000.0;
  for (double x = step / 2; x < xmax; x += step) {
    for (double y = step / 2; y < ymax; y += step) {
      ++total;
      if (visible_stations(room, Point3(x, y, height)).size() >= min_stations) {
        ++covered;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

BaseStation station_from_json(const Json& j, const std::string& field) {
  if (!j.is_object()) {
    throw FormatError(field, "expected an object");
  }
  const int id = j.value("id", 0);
  BaseStation s;
  if (j.contains("pose")) {
    s.id = id;
    s.pose_world = transform_from_json(j.at("pose"), field + ".pose");
  } else if (j.contains("position") && j.contains("look_at")) {
    s = BaseStation::aimed_at(id, vec3_from_json(j.at("position"), field + ".position"),
                              vec3_from_json(j.at("look_at"), field + ".look_at"));
  } else {
    throw FormatError(field, "station needs \"pose\" or \"position\" + \"look_at\"");
  }
  if (j.contains("fov_half_angle_deg")) {
    s.fov_half_angle = j.at("fov_half_angle_deg").get<double>() * kDegToRad;
  }
  if (j.contains("max_range_mm")) {
    s.max_range = j.at("max_range_mm").get<double>();
  }
  return s;
}

}  // namespace

Json room_to_json(const RoomConfig& room) {
  Json stations = Json::array();
  for (const auto& s : room.stations) {
    stations.push_back(Json{{"id", s.id},
                            {"pose", transform_to_json(s.pose_world)},
                            {"fov_half_angle_deg", s.fov_half_angle / kDegToRad},
                            {"max_range_mm", s.max_range}});
  }
  Json occluders = Json::array();
  for (const auto& o : room.occluders) {
    occluders.push_back(Json{{"min", vec3_to_json(o.min)}, {"max", vec3_to_json(o.max)}});
  }
  return Json{{"extent_m", room.extent_m}, {"stations", stations}, {"occluders", occluders}};
}

RoomConfig room_from_json(const Json& j, const std::string& field) {
  RoomConfig room;
  if (j.is_string()) {
    if (j.get<std::string>() != "default") {
      throw FormatError(field, "unknown room preset '" + j.get<std::string>() + "'");
    }
    room = default_room();
  } else if (j.is_object()) {
    if (j.contains("extent_m")) {
      const auto& e = j.at("extent_m");
      if (!e.is_array() || e.size() != 2) {
        throw FormatError(field + ".extent_m", "expected [x, y] in metres");
      }
      room.extent_m = {e[0].get<double>(), e[1].get<double>()};
    }
    if (!j.contains("stations") || !j.at("stations").is_array()) {
      throw FormatError(field + ".stations", "expected an array");
    }
    std::size_t i = 0;
    for (const auto& s : j.at("stations")) {
      room.stations.push_back(
          station_from_json(s, field + ".stations[" + std::to_string(i++) + "]"));
    }
  } else {
    throw FormatError(field, "expected \"default\" or a room object");
  }
  if (j.is_object() && j.contains("occluders")) {
    std::size_t i = 0;
    for (const auto& o : j.at("occluders")) {
      const std::string f = field + ".occluders[" + std::to_string(i++) + "]";
      room.occluders.push_back(
          {vec3_from_json(o.at("min"), f + ".min"), vec3_from_json(o.at("max"), f + ".max")});
    }
  }
  try {
    room.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(field, e.what());
  }
  return room;
}

Scenario scenario_from_json(const Json& j) {
  if (!j.is_object()) {
    throw FormatError("scenario", "expected a JSON object");
  }
  Scenario sc;
  sc.room = room_from_json(j.value("room", Json("default")), "room");
  if (j.contains("occluders")) {
    std::size_t i = 0;
    for (const auto& o : j.at("occluders")) {
      const std::string f = "occluders[" + std::to_string(i++) + "]";
      sc.room.occluders.push_back(
          {vec3_from_json(o.at("min"), f + ".min"), vec3_from_json(o.at("max"), f + ".max")});
    }
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    sc.noise.sigma_pos = n.value("sigma_pos_mm", sc.noise.sigma_pos);
    sc.noise.sigma_rot = n.value("sigma_rot_rad", sc.noise.sigma_rot);
  }
  sc.rate_hz = j.value("rate_hz", sc.rate_hz);
  sc.seed = j.value("seed", sc.seed);
  if (!j.contains("trackers") || !j.at("trackers").is_array()) {
    throw FormatError("trackers", "expected an array of tracker paths");
  }
  std::size_t ti = 0;
  for (const auto& t : j.at("trackers")) {
    const std::string f = "trackers[" + std::to_string(ti++) + "]";
    TrackerPath path;
    try {
      path.tracker = tracker_from_string(t.value("tracker", std::string("glasses")));
    } catch (const InvalidArgument& e) {
      throw FormatError(f + ".tracker", e.what());
    }
    if (!t.contains("waypoints") || !t.at("waypoints").is_array()) {
      throw FormatError(f + ".waypoints", "expected an array");
    }
    std::size_t wi = 0;
    for (const auto& w : t.at("waypoints")) {
      const std::string wf = f + ".waypoints[" + std::to_string(wi++) + "]";
      if (!w.contains("t") || !w.contains("position")) {
        throw FormatError(wf, "waypoint needs \"t\" and \"position\"");
      }
      Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
      if (w.contains("rotation")) {
        const auto& r = w.at("rotation");
        if (!r.is_array() || r.size() != 4) {
          throw FormatError(wf + ".rotation", "expected [w,x,y,z]");
        }
        q = Eigen::Quaterniond(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                               r[3].get<double>());
      }
      path.waypoints.push_back(
          {w.at("t").get<double>(),
           RigidTransform(q, vec3_from_json(w.at("position"), wf + ".position"))});
    }
    sc.trackers.push_back(std::move(path));
  }
  try {
    sc.room.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError("room", e.what());
  }
  return sc;
}

std::vector<TrackingSample> run_scenario(const Scenario& scenario) {
  std::mt19937_64 rng(scenario.seed);
  std::vector<TrackingSample> all;
  for (const auto& path : scenario.trackers) {
    auto samples = simulate_trajectory(scenario.room, path.tracker, path.waypoints,
                                       scenario.rate_hz, scenario.noise, rng);
    all.insert(all.end(), samples.begin(), samples.end());
  }
  // Stable: ties on time keep file order of trackers.
  std::stable_sort(all.begin(), all.end(), [](const TrackingSample& a, const TrackingSample& b) {
    return a.time < b.time;
  });
  return all;
}

Json sample_to_json(const TrackingSample& sample) {
  Json j{{"t", sample.time},
         {"tracker", to_string(sample.tracker)},
         {"dropout", sample.dropout()},
         {"visible", sample.visible_station_ids},
         {"position_sigma", sample.position_sigma}};
  if (sample.pose) {
    j["pose"] = transform_to_json(*sample.pose);
  }
  return j;
}

}  // namespace holonav
