#include "rangefuse/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

namespace rangefuse {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  // splitmix64 step; keeps per-sweep streams independent of call order.
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct RayBox {
  Eigen::Vector2d center;
  double cos_h, sin_h;
  double half_w, half_h;
  double height;
};

RayBox ray_box_at(const ActorSpec& a, double t) {
  const BevPose p = unicycle_at({a.x, a.y, a.heading}, a.motion.speed,
                                a.motion.kind == MotionProfile::Kind::ConstantTurnRate
                                    ? a.motion.yaw_rate
                                    : 0.0,
                                t);
  return RayBox{{p.x, p.y}, std::cos(p.heading), std::sin(p.heading), a.w / 2.0, a.h / 2.0,
                a.height};
}

// Slab intersection of a ray with an upright oriented box. Returns the
// entry distance, or a negative value when there is no hit ahead.
double intersect_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const RayBox& b) {
  const double ox = b.cos_h * (origin.x() - b.center.x()) + b.sin_h * (origin.y() - b.center.y());
  const double oy = -b.sin_h * (origin.x() - b.center.x()) + b.cos_h * (origin.y() - b.center.y());
  const double dx = b.cos_h * dir.x() + b.sin_h * dir.y();
  const double dy = -b.sin_h * dir.x() + b.cos_h * dir.y();

  double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
  const double o[3] = {ox, oy, origin.z()};
  const double d[3] = {dx, dy, dir.z()};
  const double lo[3] = {-b.half_w, -b.half_h, 0.0};
  const double hi[3] = {b.half_w, b.half_h, b.height};
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d[axis]) < 1e-15) {
      if (o[axis] < lo[axis] || o[axis] > hi[axis]) return -1.0;
      continue;
    }
    double t0 = (lo[axis] - o[axis]) / d[axis];
    double t1 = (hi[axis] - o[axis]) / d[axis];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return -1.0;
  }
  return tmin > 1e-9 ? tmin : -1.0;
}

bool point_in_footprint(const BevBox& b, double px, double py, double margin) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double lx = c * (px - b.x) + s * (py - b.y);
  const double ly = -s * (px - b.x) + c * (py - b.y);
  return std::abs(lx) <= b.w / 2.0 + margin && std::abs(ly) <= b.h / 2.0 + margin;
}

}  // namespace

BevPose unicycle_at(const BevPose& start, double speed, double yaw_rate, double t) {
  BevPose out;
  if (std::abs(yaw_rate) < 1e-12) {
    out.x = start.x + speed * t * std::cos(start.heading);
    out.y = start.y + speed * t * std::sin(start.heading);
    out.heading = start.heading;
    return out;
  }
  const double h1 = start.heading + yaw_rate * t;
  out.x = start.x + speed / yaw_rate * (std::sin(h1) - std::sin(start.heading));
  out.y = start.y - speed / yaw_rate * (std::cos(h1) - std::cos(start.heading));
  out.heading = h1;
  return out;
}

Pose ego_pose_at(const Scenario& sc, double t) {
  const BevPose p = unicycle_at({0.0, 0.0, 0.0}, sc.ego.speed, sc.ego.yaw_rate, t);
  return Pose::planar(p.x, p.y, p.heading, sc.ego.z, t);
}

BevBox actor_box_at(const ActorSpec& a, double t) {
  const BevPose p = unicycle_at({a.x, a.y, a.heading}, a.motion.speed,
                                a.motion.kind == MotionProfile::Kind::ConstantTurnRate
                                    ? a.motion.yaw_rate
                                    : 0.0,
                                t);
  BevBox b;
  b.x = p.x;
  b.y = p.y;
  b.w = a.w;
  b.h = a.h;
  b.theta = canonical_heading(p.heading);
  return b;
}

RaycastResult raycast(const Scenario& sc, double t, const Pose& pose, uint64_t jitter_seed) {
  RaycastResult out;
  out.sweep.pose = pose;
  const RvGeometry& g = sc.geometry;

  std::vector<RayBox> boxes;
  boxes.reserve(sc.actors.size());
  for (const ActorSpec& a : sc.actors) boxes.push_back(ray_box_at(a, t));

  std::mt19937_64 rng(jitter_seed);
  std::uniform_real_distribution<double> jitter(-sc.range_jitter, sc.range_jitter);

  for (int row = 0; row < g.n_rows; ++row) {
    const double phi = g.phi_min + (row + 0.5) * g.d_phi();
    const double cos_phi = std::cos(phi), sin_phi = std::sin(phi);
    for (int col = 0; col < g.n_cols; ++col) {
      const double theta = (col + 0.5) * g.d_theta();
      const Eigen::Vector3d dir_sensor(cos_phi * std::cos(theta), cos_phi * std::sin(theta),
                                       sin_phi);
      const Eigen::Vector3d dir = pose.rotation * dir_sensor;
      const Eigen::Vector3d& origin = pose.translation;

      double best = sc.max_range;
      int hit = -2;  // -2 none, -1 ground, >=0 actor
      for (std::size_t a = 0; a < boxes.size(); ++a) {
        const double d = intersect_box(origin, dir, boxes[a]);
        if (d > 0.0 && d < best) {
          best = d;
          hit = static_cast<int>(a);
        }
      }
      if (sc.ground && dir.z() < -1e-12) {
        const double d = -origin.z() / dir.z();
        if (d > 0.0 && d < best) {
          best = d;
          hit = -1;
        }
      }
      if (hit == -2) continue;

      double range = best;
      if (sc.range_jitter > 0.0) range = std::max(0.05, range + jitter(rng));
      Point p;
      p.xyz = dir_sensor * range;
      p.intensity = hit >= 0 ? sc.actors[hit].intensity : sc.ground_intensity;
      p.ring = row;
      out.sweep.points.push_back(p);
      out.actor_ids.push_back(hit);
    }
  }
  return out;
}

ScenarioLog generate_scenario(const Scenario& sc) {
  if (sc.sweep_rate <= 0.0) throw ConfigError("sweep_rate must be positive");
  if (sc.duration <= 0.0) throw ConfigError("duration must be positive");
  for (std::size_t i = 0; i < sc.actors.size(); ++i) {
    if (point_in_footprint(actor_box_at(sc.actors[i], 0.0), 0.0, 0.0, 0.5)) {
      throw ConfigError("actor " + std::to_string(i) + " overlaps the ego start position");
    }
  }

  ScenarioLog log;
  const int n_sweeps = static_cast<int>(std::llround(sc.duration * sc.sweep_rate));
  for (int i = 0; i < n_sweeps; ++i) {
    const double t = i / sc.sweep_rate;
    const Pose pose = ego_pose_at(sc, t);
    RaycastResult rc = raycast(sc, t, pose, mix_seed(sc.seed, static_cast<uint64_t>(i)));
    rc.sweep.index = i;  // chronological here; loaders re-index windows
    log.sweeps.push_back(std::move(rc.sweep));
    log.actor_ids.push_back(std::move(rc.actor_ids));

    FrameLabels labels;
    labels.t = t;
    labels.ego_speed = sc.ego.speed;
    for (std::size_t a = 0; a < sc.actors.size(); ++a) {
      ActorLabel al;
      al.id = static_cast<int>(a);
      al.box = actor_box_at(sc.actors[a], t);
      al.speed = sc.actors[a].motion.speed;
      for (int f = 1; f <= kFutureSteps; ++f) {
        const double dt = f * kHorizonDt;
        al.future.emplace_back(dt, actor_box_at(sc.actors[a], t + dt));
      }
      labels.actors.push_back(std::move(al));
    }
    log.labels.push_back(std::move(labels));
  }
  return log;
}

int suite_count(const KvFile& spec) {
  const int count = spec.global().get_int("count", 1);
  if (count <= 0) throw ConfigError("count must be positive");
  return count;
}

namespace {

MotionProfile motion_from_block(const KvFile::Block& b) {
  MotionProfile m;
  const std::string kind = b.get("motion", "cv");
  if (kind == "cv") {
    m.kind = MotionProfile::Kind::ConstantVelocity;
  } else if (kind == "ct") {
    m.kind = MotionProfile::Kind::ConstantTurnRate;
  } else {
    throw ConfigError("unknown motion kind '" + kind + "' (expected cv or ct)");
  }
  m.speed = b.get_double("speed", 0.0);
  m.yaw_rate = b.get_double("yaw_rate", 0.0);
  return m;
}

double sample_range(std::mt19937_64& rng, double lo, double hi) {
  if (hi < lo) throw ConfigError("range with max < min in scenario spec");
  std::uniform_real_distribution<double> d(lo, hi);
  return hi == lo ? lo : d(rng);
}

}  // namespace

Scenario scenario_from_spec(const KvFile& spec, int scene_index) {
  const KvFile::Block& gl = spec.global();
  Scenario sc;
  sc.duration = gl.get_double("duration", 2.0);
  sc.sweep_rate = gl.get_double("rate", 10.0);
  sc.seed = static_cast<uint64_t>(gl.get_int("seed", 0));
  sc.ground = gl.get_bool("ground", true);
  sc.ground_intensity = gl.get_double("ground_intensity", 0.1);
  sc.range_jitter = gl.get_double("range_jitter", 0.0);
  sc.max_range = gl.get_double("max_range", 75.0);
  sc.geometry = RvGeometry::make(gl.get_int("rv_rows", 32), gl.get_int("rv_cols", 1024),
                                 gl.get_double("phi_min_deg", -30.0) * kPi / 180.0,
                                 gl.get_double("phi_max_deg", 10.0) * kPi / 180.0);
  sc.ego.z = gl.get_double("ego_z", 1.8);

  std::mt19937_64 rng(mix_seed(sc.seed, static_cast<uint64_t>(scene_index)));
  sc.seed = mix_seed(sc.seed, 0x5eed0000ULL + static_cast<uint64_t>(scene_index));

  if (gl.has("ego_speed_min") || gl.has("ego_speed_max")) {
    sc.ego.speed = sample_range(rng, gl.get_double("ego_speed_min", 0.0),
                                gl.get_double("ego_speed_max", 0.0));
  } else {
    sc.ego.speed = gl.get_double("ego_speed", 0.0);
  }
  const double ego_yaw_max = gl.get_double("ego_yaw_rate_max", 0.0);
  if (ego_yaw_max > 0.0) {
    sc.ego.yaw_rate = sample_range(rng, -ego_yaw_max, ego_yaw_max);
  } else {
    sc.ego.yaw_rate = gl.get_double("ego_yaw_rate", 0.0);
  }

  for (const KvFile::Block* b : spec.sections("actor")) {
    ActorSpec a;
    a.x = b->get_double("x", 0.0);
    a.y = b->get_double("y", 0.0);
    a.heading = b->get_double("heading", 0.0);
    a.w = b->get_double("w", 4.5);
    a.h = b->get_double("h", 1.9);
    a.height = b->get_double("height", 1.6);
    a.intensity = b->get_double("intensity", 0.7);
    a.motion = motion_from_block(*b);
    sc.actors.push_back(a);
  }

  for (const KvFile::Block* b : spec.sections("random_actors")) {
    const int lo = b->get_int("count_min", 1);
    const int hi = b->get_int("count_max", lo);
    if (lo < 0 || hi < lo) throw ConfigError("bad random_actors count range");
    std::uniform_int_distribution<int> count_d(lo, hi);
    const int n = count_d(rng);
    const double turn_fraction = b->get_double("turn_fraction", 0.0);
    for (int i = 0; i < n; ++i) {
      ActorSpec a;
      // Spawn in an annulus around the ego start, away from the origin.
      const double radius = sample_range(rng, b->get_double("radius_min", 8.0),
                                         b->get_double("radius_max", 40.0));
      const double bearing = sample_range(rng, 0.0, kTwoPi);
      a.x = radius * std::cos(bearing);
      a.y = radius * std::sin(bearing);
      a.heading = sample_range(rng, 0.0, kTwoPi);
      a.w = sample_range(rng, b->get_double("w_min", 3.8), b->get_double("w_max", 5.2));
      a.h = sample_range(rng, b->get_double("h_min", 1.7), b->get_double("h_max", 2.1));
      a.intensity = sample_range(rng, b->get_double("intensity_min", 0.4),
                                 b->get_double("intensity_max", 0.9));
      a.motion.speed = sample_range(rng, b->get_double("speed_min", 0.0),
                                    b->get_double("speed_max", 15.0));
      const bool turns = sample_range(rng, 0.0, 1.0) < turn_fraction;
      a.motion.kind =
          turns ? MotionProfile::Kind::ConstantTurnRate : MotionProfile::Kind::ConstantVelocity;
      if (turns) {
        const double yr_max = b->get_double("yaw_rate_max", 0.3);
        a.motion.yaw_rate = sample_range(rng, -yr_max, yr_max);
      }
      sc.actors.push_back(a);
    }
  }
  return sc;
}

int simulate_suite(const KvFile& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const int count = suite_count(spec);
  fs::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    Scenario sc = scenario_from_spec(spec, i);
    // Retry placement collisions by re-rolling the variant seed.
    ScenarioLog log;
    int attempt = 0;
    for (;; ++attempt) {
      try {
        log = generate_scenario(sc);
        break;
      } catch (const ConfigError&) {
        if (attempt >= 16 || spec.sections("random_actors").empty()) throw;
        sc = scenario_from_spec(spec, i + (attempt + 1) * count + 7919);
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d", i);
    const fs::path dir = fs::path(out_dir) / name;
    fs::create_directories(dir);
    write_sweep_log((dir / "sweeps.jsonl").string(), log.sweeps);
    write_labels((dir / "labels.jsonl").string(), log.labels);
  }
  return count;
}

}  // namespace rangefuse
