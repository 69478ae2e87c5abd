#include "rangefuse/decode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rangefuse/config.hpp"

namespace rangefuse {

namespace {

inline Eigen::Vector2d rot2(double angle, const Eigen::Vector2d& v) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

}  // namespace

std::array<Eigen::Vector2d, 4> BevBox::corners() const {
  // Counter-clockwise.
  const std::array<Eigen::Vector2d, 4> offsets = {
      Eigen::Vector2d(w / 2, h / 2), Eigen::Vector2d(-w / 2, h / 2),
      Eigen::Vector2d(-w / 2, -h / 2), Eigen::Vector2d(w / 2, -h / 2)};
  std::array<Eigen::Vector2d, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = Eigen::Vector2d(x, y) + rot2(theta, offsets[i]);
  return out;
}

DecodedTrajectory decode_box(const Eigen::Vector2d& point_xy, double point_azimuth,
                             const double* encoding) {
  DecodedTrajectory out;
  const double w = std::exp(encoding[0]);
  const double h = std::exp(encoding[1]);
  for (int t = 0; t < kHorizons; ++t) {
    const double* e = encoding + 2 + t * kEncPerStep;
    const Eigen::Vector2d center = point_xy + rot2(point_azimuth, {e[0], e[1]});
    const double rho = std::hypot(e[2], e[3]);
    double theta = 0.0;
    if (rho < 1e-9) {
      out.degenerate_heading = true;
    } else {
      theta = canonical_heading(0.5 * std::atan2(e[3], e[2]));
    }
    out.traj.boxes[t] = BevBox{center.x(), center.y(), w, h, theta};
    out.traj.sigma_at[t] = std::exp(e[4]);
    out.traj.sigma_ct[t] = std::exp(e[5]);
  }
  return out;
}

std::array<double, kEncodingDim> encode_box(const Eigen::Vector2d& point_xy, double point_azimuth,
                                            const BoxTrajectory& traj) {
  std::array<double, kEncodingDim> out{};
  out[0] = std::log(traj.boxes[0].w);
  out[1] = std::log(traj.boxes[0].h);
  for (int t = 0; t < kHorizons; ++t) {
    double* e = out.data() + 2 + t * kEncPerStep;
    const Eigen::Vector2d offset =
        rot2(-point_azimuth, Eigen::Vector2d(traj.boxes[t].x, traj.boxes[t].y) - point_xy);
    e[0] = offset.x();
    e[1] = offset.y();
    e[2] = std::cos(2.0 * traj.boxes[t].theta);
    e[3] = std::sin(2.0 * traj.boxes[t].theta);
    e[4] = std::log(traj.sigma_at[t]);
    e[5] = std::log(traj.sigma_ct[t]);
  }
  return out;
}

std::vector<int> mean_shift(const std::vector<Eigen::Vector2d>& centers, double bandwidth,
                            int max_iters) {
  if (bandwidth <= 0.0) throw ConfigError("mean_shift: bandwidth must be positive");
  const int n = static_cast<int>(centers.size());
  std::vector<int> assignment(n, -1);
  if (n == 0) return assignment;

  struct Cluster {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    double weight = 0.0;
    std::vector<int> members;
    bool alive = true;
  };

  // Hash to bandwidth-sized cells, canonical (sorted) order so the
  // partition cannot depend on input order.
  std::map<std::pair<long long, long long>, Cluster> buckets;
  for (int i = 0; i < n; ++i) {
    const auto key = std::make_pair(
        static_cast<long long>(std::floor(centers[i].x() / bandwidth)),
        static_cast<long long>(std::floor(centers[i].y() / bandwidth)));
    Cluster& c = buckets[key];
    c.mean = (c.mean * c.weight + centers[i]) / (c.weight + 1.0);
    c.weight += 1.0;
    c.members.push_back(i);
  }
  std::vector<Cluster> clusters;
  clusters.reserve(buckets.size());
  for (auto& [key, c] : buckets) {
    std::sort(c.members.begin(), c.members.end());
    clusters.push_back(std::move(c));
  }

  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (!clusters[i].alive) continue;
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        if (!clusters[j].alive) continue;
        if ((clusters[i].mean - clusters[j].mean).norm() > bandwidth) continue;
        Cluster& a = clusters[i];
        Cluster& b = clusters[j];
        a.mean = (a.mean * a.weight + b.mean * b.weight) / (a.weight + b.weight);
        a.weight += b.weight;
        a.members.insert(a.members.end(), b.members.begin(), b.members.end());
        b.alive = false;
        b.members.clear();
        changed = true;
      }
    }
    if (!changed) break;
  }

  int next_id = 0;
  for (const Cluster& c : clusters) {
    if (!c.alive) continue;
    for (int m : c.members) assignment[m] = next_id;
    ++next_id;
  }
  return assignment;
}

BoxTrajectory aggregate_instance(const std::vector<BoxTrajectory>& members) {
  if (members.empty()) throw ConfigError("aggregate_instance: empty cluster");
  BoxTrajectory out;
  double w_mean = 0.0, h_mean = 0.0, score = 0.0;
  for (const BoxTrajectory& m : members) {
    w_mean += m.boxes[0].w;
    h_mean += m.boxes[0].h;
    score += m.score;
  }
  w_mean /= members.size();
  h_mean /= members.size();
  out.score = score / members.size();

  for (int t = 0; t < kHorizons; ++t) {
    double wsum = 0.0, cx = 0.0, cy = 0.0, c2 = 0.0, s2 = 0.0;
    double prec_at = 0.0, prec_ct = 0.0;
    for (const BoxTrajectory& m : members) {
      // Isotropic proxy for the center weight: mean of the two scales.
      const double sigma = 0.5 * (m.sigma_at[t] + m.sigma_ct[t]);
      const double w = 1.0 / (sigma * sigma);
      wsum += w;
      cx += w * m.boxes[t].x;
      cy += w * m.boxes[t].y;
      c2 += w * std::cos(2.0 * m.boxes[t].theta);
      s2 += w * std::sin(2.0 * m.boxes[t].theta);
      prec_at += 1.0 / (m.sigma_at[t] * m.sigma_at[t]);
      prec_ct += 1.0 / (m.sigma_ct[t] * m.sigma_ct[t]);
    }
    BevBox& b = out.boxes[t];
    b.x = cx / wsum;
    b.y = cy / wsum;
    b.w = w_mean;
    b.h = h_mean;
    b.theta = canonical_heading(0.5 * std::atan2(s2, c2));
    out.sigma_at[t] = std::sqrt(1.0 / prec_at);
    out.sigma_ct[t] = std::sqrt(1.0 / prec_ct);
  }
  return out;
}

double rotated_iou(const BevBox& a, const BevBox& b) {
  const double area_a = a.area(), area_b = b.area();
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;

  // Clip a's polygon against each edge of b (both counter-clockwise).
  const auto ca = a.corners();
  const auto cb = b.corners();
  std::vector<Eigen::Vector2d> poly(ca.begin(), ca.end());
  for (int e = 0; e < 4 && !poly.empty(); ++e) {
    const Eigen::Vector2d& p0 = cb[e];
    const Eigen::Vector2d& p1 = cb[(e + 1) % 4];
    const Eigen::Vector2d edge = p1 - p0;
    std::vector<Eigen::Vector2d> kept;
    kept.reserve(poly.size() + 2);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Eigen::Vector2d& cur = poly[i];
      const Eigen::Vector2d& nxt = poly[(i + 1) % poly.size()];
      const double side_cur = edge.x() * (cur.y() - p0.y()) - edge.y() * (cur.x() - p0.x());
      const double side_nxt = edge.x() * (nxt.y() - p0.y()) - edge.y() * (nxt.x() - p0.x());
      if (side_cur >= 0.0) kept.push_back(cur);
      if ((side_cur > 0.0 && side_nxt < 0.0) || (side_cur < 0.0 && side_nxt > 0.0)) {
        kept.push_back(cur + (nxt - cur) * (side_cur / (side_cur - side_nxt)));
      }
    }
    poly = std::move(kept);
  }
  if (poly.size() < 3) return 0.0;
  const double inter = std::abs(polygon_area(poly));
  const double uni = area_a + area_b - inter;
  return uni <= 0.0 ? 0.0 : std::min(1.0, inter / uni);
}

std::vector<int> nms(const std::vector<BoxTrajectory>& instances, double iou_threshold) {
  std::vector<int> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return instances[a].score > instances[b].score;  // ties keep the lower index
  });
  std::vector<int> kept;
  std::vector<bool> suppressed(instances.size(), false);
  for (int idx : order) {
    if (suppressed[idx]) continue;
    kept.push_back(idx);
    for (int other : order) {
      if (suppressed[other] || other == idx) continue;
      if (rotated_iou(instances[idx].boxes[0], instances[other].boxes[0]) > iou_threshold) {
        suppressed[other] = true;
      }
    }
  }
  return kept;
}

}  // namespace rangefuse
