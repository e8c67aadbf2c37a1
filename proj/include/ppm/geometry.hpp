#pragma once

// Projection-mapping calibration: base-plane fitting, depth correction and
// camera -> projector rigid transform estimation.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ppm/core.hpp"
#include "ppm/nelder_mead.hpp"

namespace ppm {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;  // depth, larger = farther from the sensor

  friend bool operator==(const Point3&, const Point3&) = default;
  [[nodiscard]] Eigen::Vector3d vec() const { return {x, y, z}; }
  static Point3 from(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
};

inline double distance(const Point3& p, const Point3& q) { return (p.vec() - q.vec()).norm(); }

/// Depth raster in millimeters; NaN marks an invalid (dropout) pixel.
/// Pixel (row, col) sits at lateral position x = col * pitch, y = row * pitch.
struct DepthFrame {
  Raster<double> depths;
  double pixel_pitch = 1.0;

  DepthFrame() = default;
  DepthFrame(int width, int height, double pitch, double fill = 0.0)
      : depths(width, height, fill), pixel_pitch(pitch) {
    if (!(pitch > 0.0) || !std::isfinite(pitch)) {
      throw InvalidArgument("pixel_pitch must be positive and finite");
    }
  }

  [[nodiscard]] int width() const { return depths.width(); }
  [[nodiscard]] int height() const { return depths.height(); }
  [[nodiscard]] Dims dims() const { return depths.dims(); }
  [[nodiscard]] double lateral_x(int col) const { return col * pixel_pitch; }
  [[nodiscard]] double lateral_y(int row) const { return row * pixel_pitch; }
  [[nodiscard]] static bool valid(double z) { return std::isfinite(z); }
  [[nodiscard]] Point3 point(int col, int row) const {
    return {lateral_x(col), lateral_y(row), depths(col, row)};
  }

  friend bool operator==(const DepthFrame& a, const DepthFrame& b) {
    if (a.pixel_pitch != b.pixel_pitch || a.dims() != b.dims()) return false;
    for (std::size_t i = 0; i < a.depths.size(); ++i) {
      const double p = a.depths.storage()[i], q = b.depths.storage()[i];
      if (std::isnan(p) && std::isnan(q)) continue;
      if (p != q) return false;
    }
    return true;
  }
};

inline constexpr double kInvalidDepth = std::numeric_limits<double>::quiet_NaN();

/// Points satisfy a*x + b*y + z + c = 0.
struct PlaneModel {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  [[nodiscard]] double signed_residual(const Point3& p) const { return a * p.x + b * p.y + p.z + c; }
  [[nodiscard]] double depth_at(double x, double y) const { return -(a * x + b * y + c); }
  [[nodiscard]] bool finite() const {
    return std::isfinite(a) && std::isfinite(b) && std::isfinite(c);
  }
  friend bool operator==(const PlaneModel&, const PlaneModel&) = default;
};

struct PlaneFit {
  PlaneModel plane;
  double residual = 0.0;  // mean squared residual at the optimum
};

// Least-squares plane through samples, minimizing
// (1/n) * sum (a*x + b*y + z + c)^2 via the normal equations.
inline PlaneFit fit_base_plane(std::span<const Point3> samples) {
  if (samples.size() < 3) {
    throw DegenerateSamples("plane fit needs at least 3 samples, got " +
                            std::to_string(samples.size()));
  }
  const double n = static_cast<double>(samples.size());
  double mx = 0, my = 0, mz = 0;
  for (const auto& p : samples) {
    mx += p.x;
    my += p.y;
    mz += p.z;
  }
  mx /= n;
  my /= n;
  mz /= n;

  // Centered normal equations for the slopes; the offset follows from the means.
  double sxx = 0, sxy = 0, syy = 0, sxz = 0, syz = 0;
  for (const auto& p : samples) {
    const double dx = p.x - mx, dy = p.y - my, dz = p.z - mz;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
    sxz += dx * dz;
    syz += dy * dz;
  }
  const double det = sxx * syy - sxy * sxy;
  const double scale = std::max(sxx * syy, std::numeric_limits<double>::min());
  if (!(det > 1e-12 * scale)) {
    throw DegenerateSamples("plane samples are collinear in (x, y)");
  }
  PlaneFit fit;
  fit.plane.a = -(syy * sxz - sxy * syz) / det;
  fit.plane.b = -(sxx * syz - sxy * sxz) / det;
  fit.plane.c = -(mz + fit.plane.a * mx + fit.plane.b * my);

  double ss = 0;
  for (const auto& p : samples) {
    const double r = fit.plane.signed_residual(p);
    ss += r * r;
  }
  fit.residual = ss / n;
  return fit;
}

// Random valid pixels of a frame as lateral/depth samples.
inline std::vector<Point3> sample_plane_points(const DepthFrame& frame, std::size_t count,
                                               std::uint64_t seed) {
  std::vector<std::size_t> valid;
  valid.reserve(frame.depths.size());
  for (std::size_t i = 0; i < frame.depths.size(); ++i) {
    if (DepthFrame::valid(frame.depths.storage()[i])) valid.push_back(i);
  }
  if (valid.empty()) throw EmptyInput("depth frame has no valid pixels");

  std::vector<Point3> out;
  const auto w = static_cast<std::size_t>(frame.width());
  auto to_point = [&](std::size_t idx) {
    const int col = static_cast<int>(idx % w), row = static_cast<int>(idx / w);
    return frame.point(col, row);
  };
  if (count >= valid.size()) {
    for (auto idx : valid) out.push_back(to_point(idx));
    return out;
  }
  // Partial Fisher-Yates: distinct pixels, deterministic per seed.
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, valid.size() - 1);
    std::swap(valid[i], valid[pick(rng)]);
    out.push_back(to_point(valid[i]));
  }
  return out;
}

/// z_new = z + a*x + b*y + c for every valid pixel.
inline DepthFrame correct_depth(const DepthFrame& frame, const PlaneModel& plane) {
  DepthFrame out = frame;
  for (int row = 0; row < frame.height(); ++row) {
    for (int col = 0; col < frame.width(); ++col) {
      const double z = frame.depths(col, row);
      if (!DepthFrame::valid(z)) continue;
      out.depths(col, row) = z + plane.a * frame.lateral_x(col) + plane.b * frame.lateral_y(row) + plane.c;
    }
  }
  return out;
}

// Per-pixel mean over the frames in which the pixel is valid.
inline DepthFrame average_depth_frames(std::span<const DepthFrame> frames) {
  if (frames.empty()) throw EmptyInput("no depth frames to average");
  const DepthFrame& first = frames.front();
  for (const auto& f : frames) {
    require_same_dims(first.dims(), f.dims(), "depth frame dimensions differ");
    if (f.pixel_pitch != first.pixel_pitch) {
      throw DimensionMismatch("depth frames have different pixel pitch");
    }
  }
  DepthFrame out(first.width(), first.height(), first.pixel_pitch, kInvalidDepth);
  for (std::size_t i = 0; i < out.depths.size(); ++i) {
    double sum = 0;
    int n = 0;
    for (const auto& f : frames) {
      const double z = f.depths.storage()[i];
      if (DepthFrame::valid(z)) {
        sum += z;
        ++n;
      }
    }
    if (n > 0) out.depths.storage()[i] = sum / n;
  }
  return out;
}

// --------------------------------------------------------------------------
// Rigid transform
// --------------------------------------------------------------------------

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  [[nodiscard]] Eigen::Matrix4d homogeneous() const {
    Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
    h.topLeftCorner<3, 3>() = rotation;
    h.topRightCorner<3, 1>() = translation;
    return h;
  }
  [[nodiscard]] RigidTransform inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }
  // (this * other)(p) = this(other(p))
  [[nodiscard]] RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
  [[nodiscard]] bool is_valid(double tol = 1e-9) const {
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return rotation.allFinite() && translation.allFinite() && ortho <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

inline Eigen::Matrix3d rotation_x(double rad) {
  return Eigen::AngleAxisd(rad, Eigen::Vector3d::UnitX()).toRotationMatrix();
}
inline Eigen::Matrix3d rotation_y(double rad) {
  return Eigen::AngleAxisd(rad, Eigen::Vector3d::UnitY()).toRotationMatrix();
}
inline Eigen::Matrix3d rotation_z(double rad) {
  return Eigen::AngleAxisd(rad, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}
inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

// R = Rz(yaw) * Ry(pitch) * Rx(roll)
inline Eigen::Matrix3d rotation_from_euler(double roll, double pitch, double yaw) {
  return rotation_z(yaw) * rotation_y(pitch) * rotation_x(roll);
}

inline Point3 map_point(const RigidTransform& t, const Point3& p) {
  return Point3::from(t.rotation * p.vec() + t.translation);
}

struct Correspondence {
  Point3 camera;
  Point3 projector;
};

using CorrespondenceSet = std::vector<Correspondence>;

inline double mapping_rmse(const RigidTransform& t, std::span<const Correspondence> pairs) {
  if (pairs.empty()) throw EmptyInput("mapping_rmse needs at least one correspondence");
  double ss = 0;
  for (const auto& c : pairs) {
    ss += (t.rotation * c.camera.vec() + t.translation - c.projector.vec()).squaredNorm();
  }
  return std::sqrt(ss / static_cast<double>(pairs.size()));
}

enum class RigidSolver { procrustes, nelder_mead };

struct ProjectorCalibrationOptions {
  RigidSolver solver = RigidSolver::procrustes;
  // Polish the closed-form result with the simplex solver.
  bool refine = false;
  NelderMeadOptions simplex{};
};

struct ProjectorCalibration {
  RigidTransform transform;
  double rmse = 0.0;
  // Residual RMSE above 10% of the point-cloud extent: data is far from rigid.
  bool not_rigid = false;
};

namespace detail {

struct CenteredClouds {
  Eigen::Vector3d camera_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d projector_mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3Xd camera;
  Eigen::Matrix3Xd projector;
};

inline CenteredClouds center(std::span<const Correspondence> pairs) {
  CenteredClouds c;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  c.camera.resize(3, n);
  c.projector.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c.camera.col(i) = pairs[static_cast<std::size_t>(i)].camera.vec();
    c.projector.col(i) = pairs[static_cast<std::size_t>(i)].projector.vec();
  }
  c.camera_mean = c.camera.rowwise().mean();
  c.projector_mean = c.projector.rowwise().mean();
  c.camera.colwise() -= c.camera_mean;
  c.projector.colwise() -= c.projector_mean;
  return c;
}

inline double cloud_extent(const Eigen::Matrix3Xd& centered) {
  const Eigen::Vector3d lo = centered.rowwise().minCoeff(), hi = centered.rowwise().maxCoeff();
  return (hi - lo).norm();
}

inline RigidTransform procrustes(const CenteredClouds& c) {
  const Eigen::Matrix3d cov = c.camera * c.projector.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
  fix(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * fix * u.transpose();
  t.translation = c.projector_mean - t.rotation * c.camera_mean;
  return t;
}

// Euler angles of R = Rz(yaw) Ry(pitch) Rx(roll).
inline std::array<double, 3> euler_from_rotation(const Eigen::Matrix3d& r) {
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

// Six-parameter simplex search. The translation is parametrized about the
// camera centroid so rotation and translation decouple.
inline RigidTransform simplex_fit(const CenteredClouds& c, const RigidTransform& start,
                                  const NelderMeadOptions& opts) {
  const double extent = std::max(cloud_extent(c.camera), 1e-9);
  const auto angles = euler_from_rotation(start.rotation);
  const Eigen::Vector3d shift = start.rotation * c.camera_mean + start.translation - c.projector_mean;

  const auto n = static_cast<double>(c.camera.cols());
  auto objective = [&](const std::array<double, 6>& p) {
    const Eigen::Matrix3d r = rotation_from_euler(p[0], p[1], p[2]);
    const Eigen::Vector3d t(p[3], p[4], p[5]);
    return ((r * c.camera).colwise() + t - c.projector).squaredNorm() / n;
  };
  const std::array<double, 6> x0{angles[0], angles[1], angles[2], shift.x(), shift.y(), shift.z()};
  const double step_t = 0.05 * extent;
  const std::array<double, 6> steps{0.1, 0.1, 0.1, step_t, step_t, step_t};
  const auto best = nelder_mead<6>(objective, x0, steps, opts);

  RigidTransform t;
  t.rotation = rotation_from_euler(best.x[0], best.x[1], best.x[2]);
  const Eigen::Vector3d shift_best(best.x[3], best.x[4], best.x[5]);
  t.translation = c.projector_mean + shift_best - t.rotation * c.camera_mean;
  return t;
}

}  // namespace detail

// Rigid camera -> projector transform minimizing sum |R*Pc + T - Pp|^2.
inline ProjectorCalibration estimate_projector_transform(std::span<const Correspondence> pairs,
                                                         const ProjectorCalibrationOptions& opts = {}) {
  if (pairs.size() < 3) {
    throw DegenerateConfiguration("rigid estimation needs at least 3 correspondences, got " +
                                  std::to_string(pairs.size()));
  }
  const auto clouds = detail::center(pairs);
  const double extent = detail::cloud_extent(clouds.camera);
  Eigen::JacobiSVD<Eigen::Matrix3Xd> spread(clouds.camera);
  const auto sv = spread.singularValues();
  // Coplanar sets still determine a rigid transform; collinear ones do not.
  if (!(extent > 0.0) || sv(1) <= 1e-9 * sv(0)) {
    throw DegenerateConfiguration("camera points are collinear or coincident");
  }

  ProjectorCalibration out;
  if (opts.solver == RigidSolver::procrustes) {
    out.transform = detail::procrustes(clouds);
    if (opts.refine) out.transform = detail::simplex_fit(clouds, out.transform, opts.simplex);
  } else {
    RigidTransform start;
    start.translation = clouds.projector_mean - clouds.camera_mean;
    out.transform = detail::simplex_fit(clouds, start, opts.simplex);
  }
  out.rmse = mapping_rmse(out.transform, pairs);
  out.not_rigid = out.rmse > 0.1 * extent;
  return out;
}

}  // namespace ppm
