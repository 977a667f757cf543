#pragma once

// nlohmann::json adapters for the core value types. Doubles are written with
// round-trip precision, so transforms survive save/load bit-exactly.

#include <json.hpp>

#include "holonav/fiducials.hpp"
#include "holonav/geometry.hpp"

namespace holonav {

using Json = nlohmann::json;

Json vec3_to_json(const Vec3& v);
/// Throws FormatError(field) unless j is a 3-element numeric array.
Vec3 vec3_from_json(const Json& j, const std::string& field);

Json transform_to_json(const RigidTransform& t);
/// Accepts {"rotation":[w,x,y,z], "translation":[x,y,z]}.
RigidTransform transform_from_json(const Json& j, const std::string& field);

Json fiducials_to_json(const FiducialSet& set);
FiducialSet fiducials_from_json(const Json& j, const std::string& field);

/// Reads a whole file as JSON; FormatError on I/O or parse failure.
Json read_json_file(const std::string& path);

}  // namespace holonav
