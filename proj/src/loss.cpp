#include "rangefuse/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "rangefuse/config.hpp"

namespace rangefuse {

namespace {

constexpr double kProbClamp = 1e-7;

inline Eigen::Vector2d rot2(double angle, const Eigen::Vector2d& v) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

// Focal term of one point: loss and d/dp_true.
struct FocalRow {
  double loss = 0.0;
  double d_ptrue = 0.0;
};

FocalRow focal_row(double p_true, double gamma) {
  const double p = std::min(std::max(p_true, kProbClamp), 1.0 - kProbClamp);
  const bool clamped = p != p_true;
  const double one_m = 1.0 - p_true;
  const double pow_g = std::pow(one_m, gamma);
  FocalRow out;
  out.loss = -pow_g * std::log(p);
  // d/dp of -(1-p)^g log(clamp(p)); the clamp freezes the log term.
  const double d_pow = gamma == 0.0 ? 0.0 : gamma * std::pow(one_m, gamma - 1.0) * std::log(p);
  out.d_ptrue = d_pow - (clamped ? 0.0 : pow_g / p);
  return out;
}

}  // namespace

double laplace_kl(double mu_gt, double b_gt, double mu_hat, double b_hat) {
  if (b_gt <= 0.0 || b_hat <= 0.0) throw std::domain_error("laplace_kl: scales must be positive");
  const double d = std::abs(mu_hat - mu_gt);
  return std::log(b_hat / b_gt) + (b_gt * std::exp(-d / b_gt) + d) / b_hat - 1.0;
}

LaplaceKlGrad laplace_kl_grad(double mu_gt, double b_gt, double mu_hat, double b_hat) {
  if (b_gt <= 0.0 || b_hat <= 0.0) throw std::domain_error("laplace_kl: scales must be positive");
  LaplaceKlGrad out;
  const double diff = mu_hat - mu_gt;
  const double d = std::abs(diff);
  const double e = std::exp(-d / b_gt);
  out.value = std::log(b_hat / b_gt) + (b_gt * e + d) / b_hat - 1.0;
  const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  out.d_mu_hat = sign * (1.0 - e) / b_hat;
  out.d_b_hat = 1.0 / b_hat - (b_gt * e + d) / (b_hat * b_hat);
  return out;
}

FocalResult focal_loss(const std::vector<double>& probs, const std::vector<int>& labels,
                       int num_classes, double gamma) {
  const int n = static_cast<int>(labels.size());
  if (probs.size() != static_cast<std::size_t>(n) * num_classes) {
    throw ConfigError("focal_loss: probs size mismatch");
  }
  FocalResult out;
  out.d_logits.assign(probs.size(), 0.0);
  if (n == 0) return out;
  for (int i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || label >= num_classes) throw ConfigError("focal_loss: label out of range");
    const double* p = probs.data() + static_cast<std::size_t>(i) * num_classes;
    const FocalRow row = focal_row(p[label], gamma);
    out.value += row.loss;
    // Chain through the softmax jacobian: dz_k = d_ptrue * p_l (delta - p_k).
    double* g = out.d_logits.data() + static_cast<std::size_t>(i) * num_classes;
    for (int c = 0; c < num_classes; ++c) {
      const double delta = c == label ? 1.0 : 0.0;
      g[c] = row.d_ptrue * p[label] * (delta - p[c]) / n;
    }
  }
  out.value /= n;
  return out;
}

std::array<Eigen::Vector2d, 4> box_corner_offsets(double w, double h) {
  return {Eigen::Vector2d(w / 2, h / 2), Eigen::Vector2d(w / 2, -h / 2),
          Eigen::Vector2d(-w / 2, -h / 2), Eigen::Vector2d(-w / 2, h / 2)};
}

GtTrack make_gt_track(const std::array<BevBox, kHorizons>& boxes) {
  GtTrack out;
  out.boxes = boxes;
  for (int t = 0; t < kHorizons; ++t) {
    const int a = t < kHorizons - 1 ? t : t - 1;
    const Eigen::Vector2d diff(boxes[a + 1].x - boxes[a].x, boxes[a + 1].y - boxes[a].y);
    // Stationary objects have no motion direction; fall back to heading.
    out.track_phi[t] = diff.norm() < 0.025 ? boxes[t].theta : std::atan2(diff.y(), diff.x());
    const auto offsets = box_corner_offsets(boxes[t].w, boxes[t].h);
    for (int c = 0; c < 4; ++c) {
      const Eigen::Vector2d corner =
          Eigen::Vector2d(boxes[t].x, boxes[t].y) + rot2(boxes[t].theta, offsets[c]);
      out.corners_track[t][c] = rot2(-out.track_phi[t], corner);
    }
  }
  return out;
}

TrackFrameCorners align_track_frame(const BoxTrajectory& pred, const BoxTrajectory& gt) {
  TrackFrameCorners out;
  const GtTrack track = make_gt_track(gt.boxes);
  out.phi = track.track_phi;
  out.gt = track.corners_track;
  for (int t = 0; t < kHorizons; ++t) {
    const BevBox& pb = pred.boxes[t];
    const double theta =
        pb.theta + kPi * std::round((track.boxes[t].theta - pb.theta) / kPi);
    const auto offsets = box_corner_offsets(pb.w, pb.h);
    for (int c = 0; c < 4; ++c) {
      const Eigen::Vector2d corner = Eigen::Vector2d(pb.x, pb.y) + rot2(theta, offsets[c]);
      out.pred[t][c] = rot2(-track.track_phi[t], corner);
    }
  }
  return out;
}

BoxParamGrad corner_kl_terms(const GtTrack& gt, int t, double cx, double cy, double w, double h,
                             double theta_hat, double sigma_at, double sigma_ct,
                             const LossWeights& weights) {
  BoxParamGrad out;
  const double theta =
      theta_hat + kPi * std::round((gt.boxes[t].theta - theta_hat) / kPi);
  const double phi = gt.track_phi[t];
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  const auto offsets = box_corner_offsets(w, h);
  const double sx[4] = {0.5, 0.5, -0.5, -0.5};
  const double sy[4] = {0.5, -0.5, -0.5, 0.5};
  for (int n = 0; n < 4; ++n) {
    const Eigen::Vector2d rotated = rot2(theta, offsets[n]);
    const Eigen::Vector2d corner = Eigen::Vector2d(cx, cy) + rotated;
    // Track frame: q = R(-phi) * corner.
    const Eigen::Vector2d q(cphi * corner.x() + sphi * corner.y(),
                            -sphi * corner.x() + cphi * corner.y());
    const Eigen::Vector2d dw = rot2(theta, {sx[n], 0.0});
    const Eigen::Vector2d dh = rot2(theta, {0.0, sy[n]});
    const Eigen::Vector2d dtheta(-rotated.y(), rotated.x());
    for (int axis = 0; axis < 2; ++axis) {
      const double beta = axis == 0 ? weights.beta_at : weights.beta_ct;
      const double sigma = axis == 0 ? sigma_at : sigma_ct;
      const LaplaceKlGrad kl =
          laplace_kl_grad(gt.corners_track[t][n][axis], weights.b_gt, q[axis], sigma);
      out.value += beta * kl.value;
      const Eigen::Vector2d row = axis == 0 ? Eigen::Vector2d(cphi, sphi)
                                            : Eigen::Vector2d(-sphi, cphi);
      const Eigen::Vector2d g_corner = beta * kl.d_mu_hat * row;
      out.d_cx += g_corner.x();
      out.d_cy += g_corner.y();
      out.d_w += g_corner.dot(dw);
      out.d_h += g_corner.dot(dh);
      out.d_theta += g_corner.dot(dtheta);
      if (axis == 0) {
        out.d_sigma_at += beta * kl.d_b_hat;
      } else {
        out.d_sigma_ct += beta * kl.d_b_hat;
      }
    }
  }
  return out;
}

RegressionResult regression_loss(const std::vector<std::pair<BoxTrajectory, GtTrack>>& pairs,
                                 const LossWeights& weights) {
  RegressionResult out;
  const int m = static_cast<int>(pairs.size());
  if (m == 0) return out;
  out.d_pred.resize(pairs.size());
  const double norm = 1.0 / (kHorizons * 4.0 * m);
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    const BoxTrajectory& pred = pairs[j].first;
    const GtTrack& gt = pairs[j].second;
    for (int t = 0; t < kHorizons; ++t) {
      const BevBox& pb = pred.boxes[t];
      BoxParamGrad g = corner_kl_terms(gt, t, pb.x, pb.y, pb.w, pb.h, pb.theta,
                                       pred.sigma_at[t], pred.sigma_ct[t], weights);
      const double scale = weights.alpha(t) * norm;
      g.value *= scale;
      g.d_cx *= scale;
      g.d_cy *= scale;
      g.d_w *= scale;
      g.d_h *= scale;
      g.d_theta *= scale;
      g.d_sigma_at *= scale;
      g.d_sigma_ct *= scale;
      out.value += g.value;
      out.d_pred[j][t] = g;
    }
  }
  return out;
}

double total_loss(double cls, double reg) { return cls + reg; }

Tensor focal_loss_node(const Tensor& logits, const std::vector<int>& labels, double gamma) {
  if (logits.shape().size() != 2) throw ConfigError("focal_loss_node: expected [N, C]");
  const int n = logits.shape()[0], C = logits.shape()[1];
  if (static_cast<int>(labels.size()) != n) throw ConfigError("focal_loss_node: label count");

  // Stable softmax, kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(logits.values().size());
  for (int i = 0; i < n; ++i) {
    const double* row = logits.values().data() + static_cast<std::size_t>(i) * C;
    double* p = probs->data() + static_cast<std::size_t>(i) * C;
    double m = row[0];
    for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
      p[c] = std::exp(row[c] - m);
      sum += p[c];
    }
    for (int c = 0; c < C; ++c) p[c] /= sum;
  }
  double value = 0.0;
  for (int i = 0; i < n; ++i) {
    value += focal_row((*probs)[static_cast<std::size_t>(i) * C + labels[i]], gamma).loss;
  }
  if (n > 0) value /= n;

  return Tensor::make_op({}, {value}, {logits}, [=](detail::TensorNode& node) {
    auto& lp = *node.parents[0];
    if (!lp.requires_grad || n == 0) return;
    lp.ensure_grad();
    const double g0 = node.grad[0];
    for (int i = 0; i < n; ++i) {
      const double* p = probs->data() + static_cast<std::size_t>(i) * C;
      const int label = labels[i];
      const double d_ptrue = focal_row(p[label], gamma).d_ptrue;
      double* g = lp.grad.data() + static_cast<std::size_t>(i) * C;
      for (int c = 0; c < C; ++c) {
        const double delta = c == label ? 1.0 : 0.0;
        g[c] += g0 * d_ptrue * p[label] * (delta - p[c]) / n;
      }
    }
  });
}

Tensor regression_loss_node(const Tensor& reg, const RegressionTargets& targets,
                            const LossWeights& weights) {
  if (reg.shape().size() != 2 || reg.shape()[1] != kEncodingDim) {
    throw ConfigError("regression_loss_node: expected [N, encoding] input");
  }
  const int n = reg.shape()[0];
  const int D = reg.shape()[1];
  const int m = static_cast<int>(targets.objects.size());

  double value = 0.0;
  auto d_reg = std::make_shared<std::vector<double>>(reg.values().size(), 0.0);
  if (m > 0) {
    const double norm = 1.0 / (kHorizons * 4.0 * m);
    for (const auto& obj : targets.objects) {
      if (obj.points.empty()) throw ConfigError("regression target object without points");
      const double point_norm = 1.0 / obj.points.size();
      for (const auto& pt : obj.points) {
        if (pt.point < 0 || pt.point >= n) throw ConfigError("regression target row out of range");
        const double* row = reg.values().data() + static_cast<std::size_t>(pt.point) * D;
        double* grow = d_reg->data() + static_cast<std::size_t>(pt.point) * D;
        const double w = std::exp(row[0]);
        const double h = std::exp(row[1]);
        const double caz = std::cos(pt.azimuth), saz = std::sin(pt.azimuth);
        for (int t = 0; t < kHorizons; ++t) {
          const double* e = row + 2 + t * kEncPerStep;
          const double cx = pt.xy.x() + caz * e[0] - saz * e[1];
          const double cy = pt.xy.y() + saz * e[0] + caz * e[1];
          const double rho2 = e[2] * e[2] + e[3] * e[3];
          const double theta = rho2 < 1e-24 ? 0.0 : 0.5 * std::atan2(e[3], e[2]);
          const double sat = std::exp(e[4]);
          const double sct = std::exp(e[5]);
          BoxParamGrad g = corner_kl_terms(obj.track, t, cx, cy, w, h, theta, sat, sct, weights);
          const double scale = weights.alpha(t) * norm * point_norm;
          value += scale * g.value;
          double* ge = grow + 2 + t * kEncPerStep;
          ge[0] += scale * (g.d_cx * caz + g.d_cy * saz);
          ge[1] += scale * (-g.d_cx * saz + g.d_cy * caz);
          if (rho2 >= 1e-24) {
            ge[2] += scale * g.d_theta * (-e[3] / (2.0 * rho2));
            ge[3] += scale * g.d_theta * (e[2] / (2.0 * rho2));
          }
          ge[4] += scale * g.d_sigma_at * sat;
          ge[5] += scale * g.d_sigma_ct * sct;
          grow[0] += scale * g.d_w * w;
          grow[1] += scale * g.d_h * h;
        }
      }
    }
  }

  return Tensor::make_op({}, {value}, {reg}, [=](detail::TensorNode& node) {
    auto& rp = *node.parents[0];
    if (!rp.requires_grad) return;
    rp.ensure_grad();
    const double g0 = node.grad[0];
    for (std::size_t i = 0; i < d_reg->size(); ++i) rp.grad[i] += g0 * (*d_reg)[i];
  });
}

}  // namespace rangefuse
