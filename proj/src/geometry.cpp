#include "rangefuse/geometry.hpp"

#include <cmath>

namespace rangefuse {

double wrap_two_pi(double angle) {
  double a = std::fmod(angle, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;  // fmod can land exactly on 2*pi after the add
  return a;
}

double canonical_heading(double theta) {
  double a = std::fmod(theta, kPi);
  if (a < 0.0) a += kPi;
  if (a >= kPi) a = 0.0;
  return a;
}

Pose Pose::identity(double timestamp) {
  Pose p;
  p.timestamp = timestamp;
  return p;
}

Pose Pose::planar(double x, double y, double yaw, double z, double timestamp) {
  Pose p;
  const double c = std::cos(yaw), s = std::sin(yaw);
  p.rotation << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  p.translation = Eigen::Vector3d(x, y, z);
  p.timestamp = timestamp;
  return p;
}

bool Pose::is_valid(double tol) const {
  const Eigen::Matrix3d err = rotation * rotation.transpose() - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(rotation.determinant() - 1.0) > tol) return false;
  return translation.allFinite();
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  out.timestamp = timestamp;
  return out;
}

Pose Pose::compose(const Pose& other) const {
  Pose out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  out.timestamp = timestamp;
  return out;
}

bool Pose::same_frame(const Pose& other) const {
  return rotation == other.rotation && translation == other.translation;
}

Point transform_point(const Point& p, const Pose& src, const Pose& dst) {
  // Identical frames transform bitwise-identically.
  if (src.same_frame(dst)) return p;
  Point out = p;
  const Eigen::Matrix3d r_rel = dst.rotation.transpose() * src.rotation;
  const Eigen::Vector3d t_rel = dst.rotation.transpose() * (src.translation - dst.translation);
  out.xyz = r_rel * p.xyz + t_rel;
  return out;
}

Sweep warp_sweep(const Sweep& s, const Pose& dst) {
  Sweep out;
  out.index = s.index;
  out.pose = dst;
  out.features = s.features;
  out.points.reserve(s.points.size());
  if (s.pose.same_frame(dst)) {
    out.points = s.points;
    return out;
  }
  const Eigen::Matrix3d r_rel = dst.rotation.transpose() * s.pose.rotation;
  const Eigen::Vector3d t_rel = dst.rotation.transpose() * (s.pose.translation - dst.translation);
  for (const Point& p : s.points) {
    Point q = p;
    q.xyz = r_rel * p.xyz + t_rel;
    out.points.push_back(q);
  }
  return out;
}

namespace {

void radial_coords(const Eigen::Vector3d& p, double* range, double* azimuth) {
  *range = p.norm();
  *azimuth = (*range == 0.0) ? 0.0 : wrap_two_pi(std::atan2(p.y(), p.x()));
}

}  // namespace

std::vector<PointFeatures> compute_point_features(const Sweep& s, const Pose& current_pose) {
  std::vector<PointFeatures> out(s.points.size());
  const Sweep warped = warp_sweep(s, current_pose);
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    PointFeatures& f = out[i];
    f.intensity = s.points[i].intensity;
    radial_coords(s.points[i].xyz, &f.range_native, &f.azimuth_native);
    radial_coords(warped.points[i].xyz, &f.range_current, &f.azimuth_current);
    f.degenerate = (f.range_native == 0.0) || (f.range_current == 0.0);
  }
  return out;
}

}  // namespace rangefuse
