#include "holonav/registration.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "holonav/errors.hpp"
#include "holonav/frame.hpp"

namespace holonav {

Correspondences Correspondences::by_index(FiducialSet source, FiducialSet target) {
  Correspondences corr;
  corr.pairing.resize(source.size());
  std::iota(corr.pairing.begin(), corr.pairing.end(), std::size_t{0});
  corr.source = std::move(source);
  corr.target = std::move(target);
  return corr;
}

void Correspondences::validate() const {
  source.validate();
  target.validate();
  if (source.size() != target.size()) {
    throw InvalidArgument("correspondence sets differ in size (" + std::to_string(source.size()) +
                          " vs " + std::to_string(target.size()) + ")");
  }
  if (source.size() < 3) {
    throw InvalidArgument("rigid fit needs at least 3 point pairs, got " +
                          std::to_string(source.size()));
  }
  if (pairing.size() != source.size()) {
    throw InvalidArgument("pairing size does not match point count");
  }
  std::vector<bool> used(target.size(), false);
  for (std::size_t t : pairing) {
    if (t >= target.size() || used[t]) {
      throw InvalidArgument("pairing is not a bijection");
    }
    used[t] = true;
  }
}

namespace {

struct CenteredSource {
  Point3 mean;
  Eigen::Matrix3Xd centered;
};

CenteredSource center_and_check(std::span<const Point3> source) {
  CenteredSource c;
  c.mean = Point3::Zero();
  for (const auto& p : source) c.mean += p;
  c.mean /= static_cast<double>(source.size());
  c.centered.resize(3, static_cast<Eigen::Index>(source.size()));
  for (std::size_t i = 0; i < source.size(); ++i) {
    c.centered.col(static_cast<Eigen::Index>(i)) = source[i] - c.mean;
  }
  // A rigid fit is unique iff the centred source has rank >= 2.
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(c.centered);
  const auto& s = svd.singularValues();
  if (!(s[0] > 0.0) || s[1] <= kDegeneracyRatio * s[0]) {
    throw DegenerateConfiguration("source points are collinear or coincident");
  }
  return c;
}

// Kabsch with determinant correction. `target_of(i)` yields the paired target point.
template <typename TargetOf>
RegistrationResult solve(std::span<const Point3> source, const CenteredSource& c,
                         TargetOf target_of) {
  const std::size_t n = source.size();
  Point3 target_mean = Point3::Zero();
  for (std::size_t i = 0; i < n; ++i) target_mean += target_of(i);
  target_mean /= static_cast<double>(n);

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cross += c.centered.col(static_cast<Eigen::Index>(i)) * (target_of(i) - target_mean).transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  const Eigen::Matrix3d rotation = v * d.asDiagonal() * u.transpose();

  RegistrationResult out;
  out.world_from_patient = RigidTransform::from_matrix(rotation, target_mean - rotation * c.mean);
  out.residuals.resize(n);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.residuals[i] = (out.world_from_patient.apply(source[i]) - target_of(i)).norm();
    sum_sq += out.residuals[i] * out.residuals[i];
  }
  out.fre_rms = std::sqrt(sum_sq / static_cast<double>(n));
  return out;
}

}  // namespace

RegistrationResult fit_rigid(const Correspondences& corr) {
  corr.validate();
  const std::span<const Point3> source(corr.source.points);
  const auto c = center_and_check(source);
  return solve(source, c, [&](std::size_t i) -> const Point3& {
    return corr.target.points[corr.pairing[i]];
  });
}

RegistrationResult fit_rigid(std::span<const Point3> source, std::span<const Point3> target) {
  return fit_rigid(Correspondences::by_index(
      FiducialSet::from_points("source", {source.begin(), source.end()}),
      FiducialSet::from_points("target", {target.begin(), target.end()})));
}

namespace {

constexpr double kTieTolerance = 1e-9;

// Enumerates pairings whose pairwise distances agree with the source within
// kSignatureTolerance, in lexicographic order.
void consistent_pairings(const std::vector<Point3>& source, const std::vector<Point3>& target,
                         const std::function<void(const std::vector<std::size_t>&)>& visit) {
  const std::size_t n = source.size();
  auto signature = [](const std::vector<Point3>& pts, std::size_t i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) d.push_back((pts[i] - pts[j]).norm());
    }
    std::sort(d.begin(), d.end());
    return d;
  };
  std::vector<std::vector<std::size_t>> candidates(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto si = signature(source, i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto tj = signature(target, j);
      bool ok = true;
      for (std::size_t k = 0; k < si.size() && ok; ++k) {
        ok = std::abs(si[k] - tj[k]) <= kSignatureTolerance;
      }
      if (ok) candidates[i].push_back(j);
    }
  }

  std::vector<std::size_t> pairing(n);
  std::vector<bool> used(n, false);
  std::function<void(std::size_t)> extend = [&](std::size_t i) {
    if (i == n) {
      visit(pairing);
      return;
    }
    for (std::size_t j : candidates[i]) {
      if (used[j]) continue;
      bool ok = true;
      for (std::size_t prev = 0; prev < i && ok; ++prev) {
        const double ds = (source[i] - source[prev]).norm();
        const double dt = (target[j] - target[pairing[prev]]).norm();
        ok = std::abs(ds - dt) <= kSignatureTolerance;
      }
      if (!ok) continue;
      used[j] = true;
      pairing[i] = j;
      extend(i + 1);
      used[j] = false;
    }
  };
  extend(0);
}

}  // namespace

Correspondences match_correspondences(const FiducialSet& source, const FiducialSet& target) {
  source.validate();
  target.validate();
  if (source.size() != target.size()) {
    throw InvalidArgument("cannot match sets of different sizes (" +
                          std::to_string(source.size()) + " vs " +
                          std::to_string(target.size()) + ")");
  }
  const std::size_t n = source.size();
  if (n < 3 || n > kMaxMatchSize) {
    throw InvalidArgument("matching supports 3.." + std::to_string(kMaxMatchSize) +
                          " fiducials, got " + std::to_string(n));
  }

  const std::span<const Point3> src(source.points);
  const auto c = center_and_check(src);

  double best_fre = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best;
  auto consider = [&](const std::vector<std::size_t>& pairing) {
    const auto r = solve(src, c, [&](std::size_t i) -> const Point3& {
      return target.points[pairing[i]];
    });
    if (r.fre_rms < best_fre - kTieTolerance) {
      best_fre = r.fre_rms;
      best = pairing;
    }
  };

  if (n <= kExhaustiveMatchLimit) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    do {
      consider(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    consistent_pairings(source.points, target.points, consider);
    if (best.empty()) {
      throw DegenerateConfiguration("no pairing agrees with the source distance signature within " +
                                    std::to_string(kSignatureTolerance) + " mm");
    }
  }

  Correspondences corr;
  corr.source = source;
  corr.target = target;
  corr.pairing = std::move(best);
  return corr;
}

double tre(const RegistrationResult& result, const Point3& target_point_patient,
           const Point3& true_point_world) {
  return (result.world_from_patient.apply(target_point_patient) - true_point_world).norm();
}

RegistrationResult register_via_frame_marker(const FiducialSet& ct_frame_fiducials,
                                             const RigidTransform& marker_pose_world,
                                             const FrameConfig& frame) {
  const auto corr = match_correspondences(ct_frame_fiducials, frame.fiducials_frame);
  RegistrationResult fit = fit_rigid(corr);
  const RigidTransform frame_from_patient = fit.world_from_patient;
  fit.world_from_patient = marker_pose_world * frame.marker_mount.inverse() * frame_from_patient;
  return fit;
}

}  // namespace holonav
