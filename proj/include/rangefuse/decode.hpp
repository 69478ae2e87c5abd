#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

#include "rangefuse/geometry.hpp"

namespace rangefuse {

// Trajectory horizon: t = 0 plus 3 s of future sampled at 2 Hz.
inline constexpr int kFutureSteps = 6;
inline constexpr int kHorizons = kFutureSteps + 1;
inline constexpr double kHorizonDt = 0.5;

/// Rotated 2D box in the bird's eye view. `w` extends along the heading,
/// `h` across it; heading is only defined modulo pi.
struct BevBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;
  double theta = 0.0;  // [0, pi)

  std::array<Eigen::Vector2d, 4> corners() const;
  double area() const { return w * h; }
};

/// Per-instance detection plus forecast: one box per horizon with
/// along/cross-track uncertainty scales. Dimensions are shared across t.
struct BoxTrajectory {
  std::array<BevBox, kHorizons> boxes;
  std::array<double, kHorizons> sigma_at{};
  std::array<double, kHorizons> sigma_ct{};
  double score = 0.0;
};

// Per-point regression encoding layout (after the class logits):
//   [w_enc, h_enc] then per t: [x_t, y_t, cos2theta_t, sin2theta_t,
//   log_sigma_at_t, log_sigma_ct_t].
inline constexpr int kEncPerStep = 6;
inline constexpr int kEncodingDim = 2 + kHorizons * kEncPerStep;

struct DecodedTrajectory {
  BoxTrajectory traj;
  bool degenerate_heading = false;  // some (cos2t, sin2t) had ~zero norm
};

/// Decode a per-point regression vector into a BEV box trajectory.
/// Center offsets are expressed in the ray-aligned frame of the point
/// (x along the ray at `point_azimuth`); dimensions are log-encoded.
DecodedTrajectory decode_box(const Eigen::Vector2d& point_xy, double point_azimuth,
                             const double* encoding);

/// Inverse of decode_box (up to the mod-pi heading ambiguity).
std::array<double, kEncodingDim> encode_box(const Eigen::Vector2d& point_xy, double point_azimuth,
                                            const BoxTrajectory& traj);

/// Grid-hash approximate mean shift over 2D centers. Centers are hashed to
/// cells of size `bandwidth`; cell means are merged while any two fall
/// within `bandwidth` of each other. Returns a cluster id per input point;
/// the partition does not depend on input order.
std::vector<int> mean_shift(const std::vector<Eigen::Vector2d>& centers, double bandwidth,
                            int max_iters = 64);

/// Combine the member points of one cluster into a single trajectory.
/// Centers use inverse-variance weights (isotropic proxy: mean of the two
/// track sigmas), orientation a weighted circular mean over 2*theta, and
/// dimensions a plain mean. Score is the mean member score.
BoxTrajectory aggregate_instance(const std::vector<BoxTrajectory>& members);

/// Exact IoU of two rotated rectangles via convex polygon clipping.
/// Degenerate (zero-area) boxes yield 0.
double rotated_iou(const BevBox& a, const BevBox& b);

/// Greedy NMS on the t=0 boxes, descending score, ties broken by lower
/// index. Returns the indices of kept instances in suppression order.
std::vector<int> nms(const std::vector<BoxTrajectory>& instances, double iou_threshold);

}  // namespace rangefuse
