#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "holonav/geometry.hpp"

namespace holonav {

using VoxelIndex = std::array<std::size_t, 3>;
using VolumeDims = std::array<std::uint32_t, 3>;

/// Axis-aligned scalar grid in patient space. `origin` is the centre of voxel
/// (0,0,0); voxel (i,j,k) sits at origin + (i,j,k) * spacing. Storage is x-fastest.
class VoxelVolume {
 public:
  VoxelVolume(VolumeDims dims, const Vec3& spacing, const Point3& origin,
              std::vector<std::int16_t> intensities);
  VoxelVolume(VolumeDims dims, const Vec3& spacing, const Point3& origin, std::int16_t fill);

  const VolumeDims& dims() const noexcept { return dims_; }
  const Vec3& spacing() const noexcept { return spacing_; }
  const Point3& origin() const noexcept { return origin_; }
  std::span<const std::int16_t> intensities() const noexcept { return intensities_; }
  std::size_t voxel_count() const noexcept { return intensities_.size(); }

  std::size_t linear_index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return i + dims_[0] * (j + dims_[1] * k);
  }
  std::int16_t at(std::size_t i, std::size_t j, std::size_t k) const {
    return intensities_[linear_index(i, j, k)];
  }

  /// Throws InvalidArgument when ijk lies outside dims.
  Point3 voxel_to_patient(const VoxelIndex& ijk) const;
  /// Continuous (fractional) voxel coordinates of a patient-space point.
  Vec3 patient_to_voxel(const Point3& p) const;
  /// Voxel volume in mm^3.
  double voxel_volume() const { return spacing_.prod(); }

  friend bool operator==(const VoxelVolume&, const VoxelVolume&) = default;

 private:
  VolumeDims dims_;
  Vec3 spacing_;
  Point3 origin_;
  std::vector<std::int16_t> intensities_;
};

inline Point3 voxel_to_patient(const VoxelVolume& v, const VoxelIndex& ijk) {
  return v.voxel_to_patient(ijk);
}

/// Grid placement shared by phantom synthesis and the CLI.
struct VolumeGeometry {
  VolumeDims dims{160, 160, 160};
  Vec3 spacing{1.25, 1.25, 1.25};
  Point3 origin{-99.375, -99.375, -99.375};
};

struct PhantomIntensities {
  std::int16_t background = 0;
  std::int16_t tumor = 300;
  std::int16_t fiducial = 3000;
};

/// Default detection threshold: well above tumor contrast, well below metal markers.
inline constexpr std::int16_t kDefaultFiducialThreshold = 1000;

/// Ellipsoidal tumor plus spherical contrast markers. A tumor with any zero
/// semi-axis is omitted.
struct PhantomSpec {
  Vec3 tumor_semi_axes{35.0, 30.0, 30.0};
  Point3 tumor_center{0.0, 0.0, 0.0};
  std::vector<Point3> fiducial_centers;
  double fiducial_radius = 3.0;
  PhantomIntensities intensities;

  /// Pairwise marker separation >= 4 radius, finite values, positive radius.
  void validate() const;
};

VoxelVolume synthesize_phantom(const PhantomSpec& spec, const VolumeGeometry& geometry);

struct DetectedFiducial {
  Point3 centroid;
  std::size_t voxel_count = 0;
  std::int16_t peak_intensity = 0;
};

/// Labels 26-connected components of voxels >= threshold and keeps those
/// with a voxel count in [min_voxels, max_voxels]. Centroids are
/// intensity-weighted. Output is sorted by descending voxel count, then
/// lexicographically by centroid.
std::vector<DetectedFiducial> detect_fiducials(const VoxelVolume& volume, std::int16_t threshold,
                                               std::size_t min_voxels = 1,
                                               std::size_t max_voxels = 100000);

// Volume file: little-endian "HNAV", u32 version (1), 3 x u32 dims,
// 3 x f64 spacing, 3 x f64 origin, then i16 intensities in x-fastest order.
inline constexpr std::uint32_t kVolumeFormatVersion = 1;

std::vector<std::uint8_t> encode_volume(const VoxelVolume& volume);
/// Throws FormatError naming the header field (or "intensities") at fault.
VoxelVolume decode_volume(std::span<const std::uint8_t> bytes);

void write_volume(const std::string& path, const VoxelVolume& volume);
VoxelVolume read_volume(const std::string& path);

}  // namespace holonav
