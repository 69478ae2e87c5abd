#include "rangefuse/io.hpp"

#include <fstream>

#include <json.hpp>

#include "rangefuse/config.hpp"

namespace rangefuse {

using nlohmann::json;

namespace {

json box_to_json(const BevBox& b) {
  return json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"theta", b.theta}};
}

BevBox box_from_json(const json& j) {
  BevBox b;
  b.x = j.at("x").get<double>();
  b.y = j.at("y").get<double>();
  b.w = j.at("w").get<double>();
  b.h = j.at("h").get<double>();
  b.theta = j.at("theta").get<double>();
  return b;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  return in;
}

}  // namespace

void write_sweep_log(const std::string& path, const std::vector<Sweep>& sweeps) {
  std::ofstream out = open_out(path);
  for (const Sweep& s : sweeps) {
    json rec;
    rec["t"] = s.pose.timestamp;
    std::vector<double> pose(16, 0.0);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) pose[r * 4 + c] = s.pose.rotation(r, c);
      pose[r * 4 + 3] = s.pose.translation(r);
    }
    pose[15] = 1.0;
    rec["pose"] = pose;
    json pts = json::array();
    for (const Point& p : s.points) {
      pts.push_back({p.xyz.x(), p.xyz.y(), p.xyz.z(), p.intensity, p.ring});
    }
    rec["points"] = std::move(pts);
    out << rec.dump() << "\n";
  }
  if (!out) throw DataError("short write: " + path);
}

std::vector<Sweep> read_sweep_log(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<Sweep> sweeps;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Sweep s;
    s.pose.timestamp = rec.at("t").get<double>();
    const auto pose = rec.at("pose").get<std::vector<double>>();
    if (pose.size() != 16) throw DataError(path + ": pose must have 16 entries");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) s.pose.rotation(r, c) = pose[r * 4 + c];
      s.pose.translation(r) = pose[r * 4 + 3];
    }
    if (!s.pose.is_valid(1e-6)) throw DataError(path + ": pose rotation is not orthonormal");
    for (const auto& p : rec.at("points")) {
      if (p.size() < 4) throw DataError(path + ": point needs at least x,y,z,intensity");
      Point pt;
      pt.xyz = Eigen::Vector3d(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
      pt.intensity = p[3].get<double>();
      pt.ring = p.size() > 4 ? p[4].get<int>() : -1;
      if (!pt.xyz.allFinite()) throw DataError(path + ": non-finite point coordinates");
      s.points.push_back(pt);
    }
    sweeps.push_back(std::move(s));
  }
  return sweeps;
}

void write_labels(const std::string& path, const std::vector<FrameLabels>& frames) {
  std::ofstream out = open_out(path);
  for (const FrameLabels& f : frames) {
    json rec;
    rec["t"] = f.t;
    json actors = json::array();
    for (const ActorLabel& a : f.actors) {
      json fut = json::array();
      for (const auto& [dt, box] : a.future) {
        fut.push_back({{"dt", dt}, {"box", box_to_json(box)}});
      }
      actors.push_back({{"id", a.id},
                        {"box", box_to_json(a.box)},
                        {"future", std::move(fut)},
                        {"speed", a.speed}});
    }
    rec["actors"] = std::move(actors);
    rec["ego_speed"] = f.ego_speed;
    out << rec.dump() << "\n";
  }
  if (!out) throw DataError("short write: " + path);
}

std::vector<FrameLabels> read_labels(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<FrameLabels> frames;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    FrameLabels f;
    f.t = rec.at("t").get<double>();
    f.ego_speed = rec.at("ego_speed").get<double>();
    for (const auto& a : rec.at("actors")) {
      ActorLabel actor;
      actor.id = a.at("id").get<int>();
      actor.box = box_from_json(a.at("box"));
      actor.speed = a.at("speed").get<double>();
      for (const auto& fut : a.at("future")) {
        actor.future.emplace_back(fut.at("dt").get<double>(), box_from_json(fut.at("box")));
      }
      f.actors.push_back(std::move(actor));
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_detections(const std::string& path, const std::vector<DetectionRecord>& dets) {
  std::ofstream out = open_out(path);
  for (const DetectionRecord& d : dets) {
    json traj = json::array();
    for (int t = 0; t < kHorizons; ++t) {
      const BevBox& b = d.traj.boxes[t];
      traj.push_back({{"t", t * kHorizonDt},
                      {"x", b.x},
                      {"y", b.y},
                      {"w", b.w},
                      {"h", b.h},
                      {"theta", b.theta},
                      {"sig_at", d.traj.sigma_at[t]},
                      {"sig_ct", d.traj.sigma_ct[t]}});
    }
    json rec{{"t0", d.t0}, {"score", d.traj.score}, {"traj", std::move(traj)}};
    out << rec.dump() << "\n";
  }
  if (!out) throw DataError("short write: " + path);
}

std::vector<DetectionRecord> read_detections(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<DetectionRecord> dets;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    DetectionRecord d;
    d.t0 = rec.at("t0").get<double>();
    d.traj.score = rec.at("score").get<double>();
    const auto& traj = rec.at("traj");
    if (traj.size() != kHorizons) throw DataError(path + ": trajectory horizon mismatch");
    for (int t = 0; t < kHorizons; ++t) {
      d.traj.boxes[t] = box_from_json(traj[t]);
      d.traj.sigma_at[t] = traj[t].at("sig_at").get<double>();
      d.traj.sigma_ct[t] = traj[t].at("sig_ct").get<double>();
    }
    dets.push_back(std::move(d));
  }
  return dets;
}

}  // namespace rangefuse
