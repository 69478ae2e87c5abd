#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rangefuse/config.hpp"
#include "rangefuse/geometry.hpp"
#include "rangefuse/io.hpp"
#include "rangefuse/range_image.hpp"

namespace rangefuse {

struct MotionProfile {
  enum class Kind { ConstantVelocity, ConstantTurnRate };
  Kind kind = Kind::ConstantVelocity;
  double speed = 0.0;     // m/s
  double yaw_rate = 0.0;  // rad/s, ConstantTurnRate only
};

/// Axis-extruded rectangular actor: BEV footprint w (along heading) by h
/// (across), vertical extent [0, height].
struct ActorSpec {
  double w = 4.5;
  double h = 1.9;
  double height = 1.6;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // full angle, radians
  MotionProfile motion;
  double intensity = 0.7;  // constant return intensity in [0, 1]
};

struct EgoProfile {
  double speed = 0.0;
  double yaw_rate = 0.0;
  double z = 1.8;  // sensor height above ground
};

/// Simulator world: ego trajectory, actors, and the sensor layout.
struct Scenario {
  double duration = 2.0;
  double sweep_rate = 10.0;  // Hz
  EgoProfile ego;
  std::vector<ActorSpec> actors;
  uint64_t seed = 0;
  RvGeometry geometry = RvGeometry::make(32, 1024, -30.0 * kPi / 180.0, 10.0 * kPi / 180.0);
  bool ground = true;
  double ground_intensity = 0.1;
  double range_jitter = 0.0;  // uniform +-jitter on hit ranges, meters
  double max_range = 75.0;
};

struct BevPose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

/// Closed-form unicycle state after t seconds.
BevPose unicycle_at(const BevPose& start, double speed, double yaw_rate, double t);

/// Ego sensor pose at time t (planar motion from the origin, z = ego.z).
Pose ego_pose_at(const Scenario& sc, double t);

/// Actor footprint box at time t, world frame.
BevBox actor_box_at(const ActorSpec& a, double t);

struct RaycastResult {
  Sweep sweep;
  std::vector<int> actor_ids;  // per point: actor index, -1 for ground
};

/// Cast one ray per (row, col) bin center from `pose` into the world at
/// time t. The nearest box or ground intersection within max_range
/// becomes a point; occlusion follows from taking the nearest hit. At
/// most one return per bin by construction.
RaycastResult raycast(const Scenario& sc, double t, const Pose& pose, uint64_t jitter_seed = 0);

struct ScenarioLog {
  std::vector<Sweep> sweeps;
  std::vector<std::vector<int>> actor_ids;  // parallel to sweeps
  std::vector<FrameLabels> labels;
};

/// Simulate every sweep of the scenario with labels at each sweep time
/// (future boxes at 0.5 s steps out to 3 s). Same seed, same log, bit for
/// bit. Throws ConfigError when an actor overlaps the ego start.
ScenarioLog generate_scenario(const Scenario& sc);

/// Number of scenario variants a spec file describes (`count`, default 1).
int suite_count(const KvFile& spec);

/// Concrete scenario for one variant index. Fixed [actor] blocks are kept
/// as-is; a [random_actors] block and ego_speed_min/max ranges are sampled
/// deterministically from (seed, scene_index).
Scenario scenario_from_spec(const KvFile& spec, int scene_index);

/// Run a whole suite and write scene_NNN/{sweeps.jsonl, labels.jsonl}
/// under out_dir. Returns the number of scenes written.
int simulate_suite(const KvFile& spec, const std::string& out_dir);

}  // namespace rangefuse
