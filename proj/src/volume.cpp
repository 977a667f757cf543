#include "holonav/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "holonav/errors.hpp"

namespace holonav {

namespace {

void validate_grid(const VolumeDims& dims, const Vec3& spacing, const Point3& origin) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] == 0) {
      throw InvalidArgument("volume dims must be positive");
    }
    if (!std::isfinite(spacing[a]) || spacing[a] <= 0.0) {
      throw InvalidArgument("volume spacing must be positive and finite");
    }
  }
  require_finite(origin, "volume origin");
}

std::size_t product(const VolumeDims& dims) {
  return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
}

}  // namespace

VoxelVolume::VoxelVolume(VolumeDims dims, const Vec3& spacing, const Point3& origin,
                         std::vector<std::int16_t> intensities)
    : dims_(dims), spacing_(spacing), origin_(origin), intensities_(std::move(intensities)) {
  validate_grid(dims_, spacing_, origin_);
  if (intensities_.size() != product(dims_)) {
    throw InvalidArgument("intensity count " + std::to_string(intensities_.size()) +
                          " does not match dims product " + std::to_string(product(dims_)));
  }
}

VoxelVolume::VoxelVolume(VolumeDims dims, const Vec3& spacing, const Point3& origin,
                         std::int16_t fill)
    : dims_(dims), spacing_(spacing), origin_(origin) {
  validate_grid(dims_, spacing_, origin_);
  intensities_.assign(product(dims_), fill);
}

Point3 VoxelVolume::voxel_to_patient(const VoxelIndex& ijk) const {
  for (int a = 0; a < 3; ++a) {
    if (ijk[a] >= dims_[a]) {
      throw InvalidArgument("voxel index out of range on axis " + std::to_string(a));
    }
  }
  return origin_ + Vec3(static_cast<double>(ijk[0]), static_cast<double>(ijk[1]),
                        static_cast<double>(ijk[2]))
                       .cwiseProduct(spacing_);
}

Vec3 VoxelVolume::patient_to_voxel(const Point3& p) const {
  return (p - origin_).cwiseQuotient(spacing_);
}

void PhantomSpec::validate() const {
  require_finite(tumor_semi_axes, "tumor semi-axes");
  require_finite(tumor_center, "tumor center");
  if ((tumor_semi_axes.array() < 0.0).any()) {
    throw InvalidArgument("tumor semi-axes must be non-negative");
  }
  if (!fiducial_centers.empty() && !(fiducial_radius > 0.0 && std::isfinite(fiducial_radius))) {
    throw InvalidArgument("fiducial radius must be positive");
  }
  for (std::size_t a = 0; a < fiducial_centers.size(); ++a) {
    require_finite(fiducial_centers[a], "fiducial center");
    for (std::size_t b = a + 1; b < fiducial_centers.size(); ++b) {
      if ((fiducial_centers[a] - fiducial_centers[b]).norm() < 4.0 * fiducial_radius) {
        throw InvalidArgument("fiducials " + std::to_string(a) + " and " + std::to_string(b) +
                              " are closer than 4 radii");
      }
    }
  }
}

namespace {

// Inclusive voxel index range covering [lo, hi] in patient mm, clamped to the grid.
struct IndexBox {
  std::array<std::size_t, 3> lo;
  std::array<std::size_t, 3> hi;
  bool empty = false;
};

IndexBox covering_box(const VoxelVolume& v, const Point3& lo, const Point3& hi) {
  IndexBox box;
  const Vec3 flo = v.patient_to_voxel(lo);
  const Vec3 fhi = v.patient_to_voxel(hi);
  for (int a = 0; a < 3; ++a) {
    const double first = std::max(0.0, std::ceil(flo[a]));
    const double last = std::min(static_cast<double>(v.dims()[a]) - 1.0, std::floor(fhi[a]));
    if (last < first) {
      box.empty = true;
      return box;
    }
    box.lo[a] = static_cast<std::size_t>(first);
    box.hi[a] = static_cast<std::size_t>(last);
  }
  return box;
}

template <typename Inside>
void paint(std::vector<std::int16_t>& data, const VoxelVolume& grid, const IndexBox& box,
           std::int16_t value, Inside inside) {
  if (box.empty) {
    return;
  }
  for (std::size_t k = box.lo[2]; k <= box.hi[2]; ++k) {
    for (std::size_t j = box.lo[1]; j <= box.hi[1]; ++j) {
      for (std::size_t i = box.lo[0]; i <= box.hi[0]; ++i) {
        if (inside(grid.voxel_to_patient({i, j, k}))) {
          data[grid.linear_index(i, j, k)] = value;
        }
      }
    }
  }
}

}  // namespace

VoxelVolume synthesize_phantom(const PhantomSpec& spec, const VolumeGeometry& geometry) {
  spec.validate();
  // Grid with the same placement, used only for index arithmetic.
  const VoxelVolume grid(geometry.dims, geometry.spacing, geometry.origin,
                         spec.intensities.background);
  const Point3 bounds_lo = geometry.origin;
  const Point3 bounds_hi =
      geometry.origin + Vec3(geometry.dims[0] - 1.0, geometry.dims[1] - 1.0, geometry.dims[2] - 1.0)
                            .cwiseProduct(geometry.spacing);
  for (std::size_t f = 0; f < spec.fiducial_centers.size(); ++f) {
    const Point3& c = spec.fiducial_centers[f];
    const Vec3 r = Vec3::Constant(spec.fiducial_radius);
    if (((c - r).array() < bounds_lo.array()).any() || ((c + r).array() > bounds_hi.array()).any()) {
      throw InvalidArgument("fiducial " + std::to_string(f) + " sphere extends outside the volume");
    }
  }

  std::vector<std::int16_t> data(grid.intensities().begin(), grid.intensities().end());

  const Vec3& axes = spec.tumor_semi_axes;
  if ((axes.array() > 0.0).all()) {
    const Point3& c = spec.tumor_center;
    paint(data, grid, covering_box(grid, c - axes, c + axes), spec.intensities.tumor,
          [&](const Point3& p) { return (p - c).cwiseQuotient(axes).squaredNorm() <= 1.0; });
  }
  const double r2 = spec.fiducial_radius * spec.fiducial_radius;
  for (const Point3& c : spec.fiducial_centers) {
    const Vec3 r = Vec3::Constant(spec.fiducial_radius);
    paint(data, grid, covering_box(grid, c - r, c + r), spec.intensities.fiducial,
          [&](const Point3& p) { return (p - c).squaredNorm() <= r2; });
  }
  return VoxelVolume(geometry.dims, geometry.spacing, geometry.origin, std::move(data));
}

std::vector<DetectedFiducial> detect_fiducials(const VoxelVolume& volume, std::int16_t threshold,
                                               std::size_t min_voxels, std::size_t max_voxels) {
  const auto& dims = volume.dims();
  const auto values = volume.intensities();
  const std::size_t nx = dims[0];
  const std::size_t nxy = nx * dims[1];
  auto index_of = [&](std::size_t idx) {
    return Vec3(static_cast<double>(idx % nx), static_cast<double>((idx % nxy) / nx),
                static_cast<double>(idx / nxy));
  };

  std::vector<std::uint8_t> visited(values.size(), 0);
  std::vector<std::size_t> stack;
  std::vector<std::size_t> members;
  std::vector<DetectedFiducial> found;

  for (std::size_t seed = 0; seed < values.size(); ++seed) {
    if (visited[seed] || values[seed] < threshold) {
      continue;
    }
    visited[seed] = 1;
    stack.assign(1, seed);
    members.clear();
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      members.push_back(idx);
      const std::size_t k = idx / nxy;
      const std::size_t j = (idx % nxy) / nx;
      const std::size_t i = idx % nx;
      for (int dk = -1; dk <= 1; ++dk) {
        if ((dk < 0 && k == 0) || (dk > 0 && k + 1 == dims[2])) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          if ((dj < 0 && j == 0) || (dj > 0 && j + 1 == dims[1])) continue;
          for (int di = -1; di <= 1; ++di) {
            if ((di < 0 && i == 0) || (di > 0 && i + 1 == dims[0])) continue;
            const std::size_t n = volume.linear_index(i + di, j + dj, k + dk);
            if (!visited[n] && values[n] >= threshold) {
              visited[n] = 1;
              stack.push_back(n);
            }
          }
        }
      }
    }

    if (members.size() < min_voxels || members.size() > max_voxels) {
      continue;
    }
    DetectedFiducial d;
    d.voxel_count = members.size();
    d.peak_intensity = std::numeric_limits<std::int16_t>::min();
    double weight = 0.0;
    Vec3 weighted = Vec3::Zero();
    Vec3 plain = Vec3::Zero();
    for (std::size_t idx : members) {
      const Vec3 ijk = index_of(idx);
      weight += values[idx];
      weighted += static_cast<double>(values[idx]) * ijk;
      plain += ijk;
      d.peak_intensity = std::max(d.peak_intensity, values[idx]);
    }
    // Non-positive thresholds admit zero or negative weights; use the plain mean then.
    const Vec3 mean_index =
        threshold > 0 ? Vec3(weighted / weight) : Vec3(plain / static_cast<double>(members.size()));
    d.centroid = volume.origin() + mean_index.cwiseProduct(volume.spacing());
    found.push_back(d);
  }

  std::sort(found.begin(), found.end(), [](const DetectedFiducial& a, const DetectedFiducial& b) {
    if (a.voxel_count != b.voxel_count) {
      return a.voxel_count > b.voxel_count;
    }
    return std::lexicographical_compare(a.centroid.data(), a.centroid.data() + 3,
                                        b.centroid.data(), b.centroid.data() + 3);
  });
  return found;
}

namespace {

constexpr char kMagic[4] = {'H', 'N', 'A', 'V'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 3 * 4 + 3 * 8 + 3 * 8;
// Refuse to allocate more than 2^31 voxels (4 GiB of i16).
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 31;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* field) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    need(sizeof(T), field);
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      bits |= static_cast<U>(static_cast<U>(bytes_[pos_ + b]) << (8 * b));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(field, "unexpected end of data");
    }
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* field) {
    need(n, field);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_volume(const VoxelVolume& volume) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 2 * volume.voxel_count());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kVolumeFormatVersion);
  for (auto d : volume.dims()) put_le<std::uint32_t>(out, d);
  for (int a = 0; a < 3; ++a) put_le<double>(out, volume.spacing()[a]);
  for (int a = 0; a < 3; ++a) put_le<double>(out, volume.origin()[a]);
  for (auto v : volume.intensities()) put_le<std::int16_t>(out, v);
  return out;
}

VoxelVolume decode_volume(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic),
                  [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); })) {
    throw FormatError("magic", "bad magic");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVolumeFormatVersion) {
    throw FormatError("version", "unsupported version " + std::to_string(version));
  }
  VolumeDims dims;
  for (auto& d : dims) d = in.get<std::uint32_t>("dims");
  Vec3 spacing;
  for (int a = 0; a < 3; ++a) spacing[a] = in.get<double>("spacing");
  Point3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = in.get<double>("origin");

  std::uint64_t count = 1;
  for (auto d : dims) {
    if (d == 0) {
      throw FormatError("dims", "zero dimension");
    }
    count *= d;
    if (count > kMaxVoxels) {
      throw FormatError("dims", "dim overflow");
    }
  }
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(spacing[a]) || spacing[a] <= 0.0) {
      throw FormatError("spacing", "must be positive and finite");
    }
  }
  if (!origin.allFinite()) {
    throw FormatError("origin", "non-finite component");
  }
  in.need(2 * count, "intensities");
  std::vector<std::int16_t> data(count);
  for (auto& v : data) v = in.get<std::int16_t>("intensities");
  if (in.remaining() != 0) {
    throw FormatError("intensities", "trailing bytes after voxel data");
  }
  return VoxelVolume(dims, spacing, origin, std::move(data));
}

void write_volume(const std::string& path, const VoxelVolume& volume) {
  const auto bytes = encode_volume(volume);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError(path, "cannot open for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw FormatError(path, "write failed");
  }
}

VoxelVolume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(path, "cannot open for reading");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_volume(bytes);
}

}  // namespace holonav
