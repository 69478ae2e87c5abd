#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace rangefuse {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Wrap an angle to [0, 2*pi).
double wrap_two_pi(double angle);

/// Wrap a heading to [0, pi). BEV boxes are symmetric under a half turn.
double canonical_heading(double theta);

/// Sensor pose at a sweep's capture time. Rotation is kept as an explicit
/// orthonormal matrix so the validity invariants stay cheap to check.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double timestamp = 0.0;

  static Pose identity(double timestamp = 0.0);
  /// SE(2) pose embedded in 3D: yaw about z plus an (x, y, z) offset.
  static Pose planar(double x, double y, double yaw, double z = 0.0, double timestamp = 0.0);

  /// Orthonormal with determinant +1, within tol per entry.
  bool is_valid(double tol = 1e-9) const;

  Pose inverse() const;
  /// this ∘ other: apply `other` first, then this pose.
  Pose compose(const Pose& other) const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  bool same_frame(const Pose& other) const;
};

struct Point {
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  double intensity = 0.0;
  int ring = -1;  // beam index, -1 when unknown
};

/// Hand-crafted per-point features: radial coordinates in the frame the
/// point was captured in, and again in the most recent (current) frame.
struct PointFeatures {
  double range_native = 0.0;
  double azimuth_native = 0.0;  // [0, 2*pi)
  double intensity = 0.0;
  double range_current = 0.0;
  double azimuth_current = 0.0;  // [0, 2*pi)
  bool degenerate = false;       // point coincides with a sensor origin
};

/// One 360° LiDAR slice, treated as instantaneous.
struct Sweep {
  int index = 0;  // 0 = most recent, negative = past
  Pose pose;
  std::vector<Point> points;
  std::vector<PointFeatures> features;  // parallel to points; may be empty until computed

  std::size_t size() const { return points.size(); }
};

/// Re-express a point captured in frame `src` in frame `dst`.
/// Intensity and ring are carried through unchanged.
Point transform_point(const Point& p, const Pose& src, const Pose& dst);

/// Re-express every point of a sweep in frame `dst`. Point count and
/// per-point features are preserved; only rasterization drops points.
Sweep warp_sweep(const Sweep& s, const Pose& dst);

/// Range/azimuth in the sweep's own frame and in `current_pose`.
/// A point at a sensor origin gets range 0, azimuth 0 and the degenerate flag.
std::vector<PointFeatures> compute_point_features(const Sweep& s, const Pose& current_pose);

}  // namespace rangefuse
