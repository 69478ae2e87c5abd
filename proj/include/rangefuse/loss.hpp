#pragma once

#include <array>
#include <vector>

#include "rangefuse/decode.hpp"
#include "rangefuse/tensor.hpp"

namespace rangefuse {

struct LossWeights {
  double gamma = 2.0;    // focal focusing parameter
  double alpha0 = 1.0;   // horizon weight at t = 0
  double alpha_t = 4.0;  // horizon weight for t > 0
  double beta_at = 2.0;  // along-track weight
  double beta_ct = 1.0;  // cross-track weight
  double b_gt = 0.1;     // ground-truth Laplace scale, meters

  double alpha(int t) const { return t == 0 ? alpha0 : alpha_t; }
};

/// KL divergence between two Laplace distributions, KL(Q(mu_gt, b_gt) ||
/// Q_hat(mu_hat, b_hat)). Throws std::domain_error on nonpositive scales.
double laplace_kl(double mu_gt, double b_gt, double mu_hat, double b_hat);

struct LaplaceKlGrad {
  double value = 0.0;
  double d_mu_hat = 0.0;
  double d_b_hat = 0.0;
};
LaplaceKlGrad laplace_kl_grad(double mu_gt, double b_gt, double mu_hat, double b_hat);

struct FocalResult {
  double value = 0.0;
  std::vector<double> d_logits;  // [N, C]
};

/// Mean over points of -(1 - p_true)^gamma * log(p_true), with p clamped
/// to [1e-7, 1 - 1e-7] before the log. Gradients are w.r.t. the logits
/// that produced `probs` via softmax. Labels are 0-based class ids.
FocalResult focal_loss(const std::vector<double>& probs, const std::vector<int>& labels,
                       int num_classes, double gamma);

/// Ground-truth side of the regression loss for one object: per horizon,
/// the box, the track-frame angle (x-axis = motion direction, box heading
/// when stationary), and the 4 corners already in that frame.
struct GtTrack {
  std::array<BevBox, kHorizons> boxes;
  std::array<double, kHorizons> track_phi{};
  std::array<std::array<Eigen::Vector2d, 4>, kHorizons> corners_track;
};

GtTrack make_gt_track(const std::array<BevBox, kHorizons>& boxes);

/// Canonical corner offsets (+w/2,+h/2), (+w/2,-h/2), (-w/2,-h/2), (-w/2,+h/2).
std::array<Eigen::Vector2d, 4> box_corner_offsets(double w, double h);

struct TrackFrameCorners {
  std::array<std::array<Eigen::Vector2d, 4>, kHorizons> pred;
  std::array<std::array<Eigen::Vector2d, 4>, kHorizons> gt;
  std::array<double, kHorizons> phi{};
};

/// Rotate both boxes' corners into the frame whose x-axis is the ground
/// truth's motion direction at each horizon (along-track), y-axis across
/// it. The predicted heading is first shifted by a multiple of pi to lie
/// within pi/2 of the ground-truth heading so corner indices correspond.
TrackFrameCorners align_track_frame(const BoxTrajectory& pred, const BoxTrajectory& gt);

/// Per-horizon gradients of the corner KL sum w.r.t. one predicted box.
struct BoxParamGrad {
  double value = 0.0;  // sum over corners and axes of beta_a * KL
  double d_cx = 0.0, d_cy = 0.0;
  double d_w = 0.0, d_h = 0.0;
  double d_theta = 0.0;
  double d_sigma_at = 0.0, d_sigma_ct = 0.0;
};

/// Corner KL terms of one predicted box against one ground-truth object at
/// horizon t, with analytic partials. `theta_hat` may be any real angle.
BoxParamGrad corner_kl_terms(const GtTrack& gt, int t, double cx, double cy, double w, double h,
                             double theta_hat, double sigma_at, double sigma_ct,
                             const LossWeights& weights);

struct RegressionResult {
  double value = 0.0;
  // Per pair, per horizon: partials w.r.t. the predicted box parameters.
  std::vector<std::array<BoxParamGrad, kHorizons>> d_pred;
};

/// Eq.-style regression loss over M matched (prediction, ground truth)
/// pairs: mean over horizons of alpha_t * sum_a beta_a * corner KL,
/// normalized by 4M. M = 0 yields 0 with no gradients.
RegressionResult regression_loss(
    const std::vector<std::pair<BoxTrajectory, GtTrack>>& pairs, const LossWeights& weights);

double total_loss(double cls, double reg);

// Graph-building losses for training.

/// Fused softmax + focal loss on raw logits [N, C].
Tensor focal_loss_node(const Tensor& logits, const std::vector<int>& labels, double gamma);

/// Matched sweep-0 points grouped per ground-truth object.
struct RegressionTargets {
  struct PointRef {
    int point = 0;          // row into the regression tensor
    double azimuth = 0.0;   // ray frame of the point in viewpoint 0
    Eigen::Vector2d xy = Eigen::Vector2d::Zero();
  };
  struct Object {
    GtTrack track;
    std::vector<PointRef> points;
  };
  std::vector<Object> objects;
};

/// Regression loss on the raw per-point encoding tensor [N, kEncodingDim].
/// Each matched point contributes its own decoded box; points are averaged
/// within their object so Eq.-style per-object normalization holds.
Tensor regression_loss_node(const Tensor& reg, const RegressionTargets& targets,
                            const LossWeights& weights);

}  // namespace rangefuse
