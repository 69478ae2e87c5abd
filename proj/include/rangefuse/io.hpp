#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rangefuse/decode.hpp"
#include "rangefuse/geometry.hpp"

namespace rangefuse {

/// One labeled actor at a sweep time: current box, future boxes at fixed
/// offsets, and the actor's speed for binned analysis. Boxes are in the
/// world frame.
struct ActorLabel {
  int id = 0;
  BevBox box;
  std::vector<std::pair<double, BevBox>> future;  // (dt seconds, box)
  double speed = 0.0;
};

struct FrameLabels {
  double t = 0.0;
  std::vector<ActorLabel> actors;
  double ego_speed = 0.0;
};

// Sweep log, one JSON record per line:
//   {"t": seconds, "pose": [16 row-major floats], "points": [[x,y,z,intensity,ring], ...]}
void write_sweep_log(const std::string& path, const std::vector<Sweep>& sweeps);
std::vector<Sweep> read_sweep_log(const std::string& path);

// Labels, one JSON record per line:
//   {"t":, "actors":[{"id":, "box":{...}, "future":[{"dt":, "box":{...}}, ...], "speed":}], "ego_speed":}
void write_labels(const std::string& path, const std::vector<FrameLabels>& frames);
std::vector<FrameLabels> read_labels(const std::string& path);

/// Detections for one evaluation window. `t0` is the window's sweep-0
/// time; trajectories are in that sweep's sensor frame.
struct DetectionRecord {
  double t0 = 0.0;
  BoxTrajectory traj;
};

// Detections, one JSON record per line:
//   {"t0":, "score":, "traj":[{"t":, "x":, "y":, "w":, "h":, "theta":, "sig_at":, "sig_ct":}, ...]}
void write_detections(const std::string& path, const std::vector<DetectionRecord>& dets);
std::vector<DetectionRecord> read_detections(const std::string& path);

}  // namespace rangefuse
