#include "holonav/serialization.hpp"

#include <fstream>
#include <sstream>

#include "holonav/errors.hpp"

namespace holonav {

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) {
    throw FormatError(field, "expected an array of 3 numbers");
  }
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) {
      throw FormatError(field, "expected an array of 3 numbers");
    }
    v[i] = j[i].get<double>();
  }
  if (!v.allFinite()) {
    throw FormatError(field, "non-finite component");
  }
  return v;
}

Json transform_to_json(const RigidTransform& t) {
  const auto& q = t.rotation();
  return Json{{"rotation", Json::array({q.w(), q.x(), q.y(), q.z()})},
              {"translation", vec3_to_json(t.translation())}};
}

RigidTransform transform_from_json(const Json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("rotation") || !j.contains("translation")) {
    throw FormatError(field, "expected {\"rotation\":[w,x,y,z],\"translation\":[x,y,z]}");
  }
  const Json& r = j.at("rotation");
  if (!r.is_array() || r.size() != 4) {
    throw FormatError(field + ".rotation", "expected [w,x,y,z]");
  }
  for (const auto& c : r) {
    if (!c.is_number()) {
      throw FormatError(field + ".rotation", "expected [w,x,y,z]");
    }
  }
  const Eigen::Quaterniond q(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                             r[3].get<double>());
  try {
    return RigidTransform(q, vec3_from_json(j.at("translation"), field + ".translation"));
  } catch (const InvalidArgument& e) {
    throw FormatError(field, e.what());
  }
}

Json fiducials_to_json(const FiducialSet& set) {
  Json points = Json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    points.push_back(Json{{"label", set.labels[i]}, {"position", vec3_to_json(set.points[i])}});
  }
  return Json{{"frame", set.frame}, {"points", points}};
}

FiducialSet fiducials_from_json(const Json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("points") || !j.at("points").is_array()) {
    throw FormatError(field, "expected {\"frame\":..., \"points\":[...]}");
  }
  FiducialSet set;
  set.frame = j.value("frame", std::string("unnamed"));
  std::size_t i = 0;
  for (const auto& p : j.at("points")) {
    const std::string where = field + ".points[" + std::to_string(i) + "]";
    if (!p.is_object() || !p.contains("position")) {
      throw FormatError(where, "expected {\"label\":..., \"position\":[x,y,z]}");
    }
    set.points.push_back(vec3_from_json(p.at("position"), where + ".position"));
    set.labels.push_back(p.value("label", "F" + std::to_string(i + 1)));
    ++i;
  }
  return set;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError(path, "cannot open file");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return Json::parse(buffer.str());
  } catch (const Json::parse_error& e) {
    throw FormatError(path, std::string("JSON parse error: ") + e.what());
  }
}

}  // namespace holonav
