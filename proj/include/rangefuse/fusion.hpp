#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rangefuse/geometry.hpp"
#include "rangefuse/range_image.hpp"

namespace rangefuse {

enum class FusionKind { Early, Late, Incremental };

FusionKind fusion_kind_from_string(const std::string& s);
std::string to_string(FusionKind kind);

enum class ChannelRole {
  RangeNative,
  AzimuthNative,
  Intensity,
  RangeCurrent,
  AzimuthCurrent,
  Occupancy,
  Displacement,
  Learned,
};

struct ChannelInfo {
  ChannelRole role = ChannelRole::Learned;
  int sweep_index = 0;  // k of the contributing sweep (0 = most recent)
  std::string label;
};

/// Dense row-major feature image, channels last.
struct Grid {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<double> data;

  static Grid zeros(int rows, int cols, int channels);
  double& at(int cell, int ch) { return data[static_cast<std::size_t>(cell) * channels + ch]; }
  double at(int cell, int ch) const { return data[static_cast<std::size_t>(cell) * channels + ch]; }
  int cells() const { return rows * cols; }
};

/// Re-projection of one feature image into another viewpoint: for every
/// destination cell, the source cell whose point landed there (minimum
/// re-projected range, ties to the lower source cell).
struct WarpMap {
  std::vector<int> src_cell;  // per destination cell, -1 when nothing landed
  DropStats drops;
  int source_count = 0;  // occupied cells before the warp

  double drop_fraction() const {
    return source_count == 0 ? 0.0 : static_cast<double>(drops.total) / source_count;
  }
};

Grid apply_warp(const Grid& src, const WarpMap& map);

/// Geometry anchor of an occupied cell: the surviving point, carried with
/// its exact position so later warps re-project without re-quantizing.
struct CellAnchor {
  int slot = -1;   // sweep slot (0 = oldest input sweep)
  int point = -1;  // point index within that sweep
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();  // in the image viewpoint
  double range = 0.0;
};

/// Multi-sweep range view image at a single viewpoint.
struct FusedImage {
  RvGeometry geometry;
  Pose viewpoint;
  int viewpoint_index = 0;  // sweep index k of the viewpoint
  Grid channels;
  std::vector<ChannelInfo> layout;
  std::vector<CellAnchor> anchors;          // per cell
  std::vector<uint32_t> provenance_mask;    // bit s = sweep slot s contributed
  std::vector<int> slot_to_index;           // slot → sweep index k

  bool occupied(int cell) const { return anchors[cell].slot >= 0; }
  std::vector<int> provenance(int cell) const;
};

/// Displacement of a warped point against the point natively observed on
/// the same ray, expressed in the ray-aligned frame (x along the ray at
/// azimuth theta, i.e. a rotation about z by -theta).
Eigen::Vector3d displacement_feature(const Eigen::Vector3d& p_warped,
                                     const Eigen::Vector3d& p_native, double theta);

/// Dataflow for fusing K sweeps under one strategy. Grids, warp maps and
/// displacement features depend only on geometry, so they are computed
/// once here and shared by the raw materialization and the network.
struct FusionStep {
  WarpMap warp;        // previous image → next viewpoint
  Grid next_hand;      // hand-crafted channels of the incoming sweep (native)
  Grid displacement;   // 3 channels, zero unless both sides are occupied
  Grid occupancy;      // 1 channel: union occupancy after the fuse
  int next_slot = 0;
};

struct FusionPlan {
  FusionKind kind = FusionKind::Early;
  RvGeometry geometry;
  Pose viewpoint;
  int num_sweeps = 0;
  bool displacement_enabled = true;
  std::vector<int> slot_to_index;

  // Early: per-slot grids already warped into viewpoint 0 (slot order).
  // Late / Incremental: per-slot native grids.
  std::vector<Grid> sweep_grids;
  // Late: warp of each past slot's native image into viewpoint 0.
  std::vector<WarpMap> late_warps;  // index = slot, 0..K-2
  // Early / Late: displacement of each past slot against sweep 0.
  std::vector<Grid> pair_displacement;  // index = slot, 0..K-2
  // Early: union occupancy over all slots.
  Grid union_occupancy;
  // Incremental chain, oldest to newest.
  std::vector<FusionStep> steps;

  // Sweep-0 bookkeeping for the prediction heads.
  std::vector<int> point_cells;       // native cell per sweep-0 point (-1 out of view)
  std::vector<double> point_azimuth;  // native azimuth per sweep-0 point

  // Final-image geometry results.
  std::vector<CellAnchor> final_anchors;
  std::vector<uint32_t> final_provenance;

  // Diagnostics: every warp performed, in execution order, plus the
  // hypothetical one-shot warp of the oldest sweep into viewpoint 0.
  std::vector<WarpMap> warp_diagnostics;
  WarpMap oneshot_oldest;
};

/// Build the fusion dataflow. Sweeps are ordered oldest to newest; the
/// newest sweep defines viewpoint 0. Per-point features are computed here
/// against the newest pose.
FusionPlan build_plan(FusionKind kind, const std::vector<Sweep>& sweeps, const RvGeometry& g,
                      bool displacement_enabled = true);

/// Feature-grid transform slotted between fusion stages (identity when
/// absent). The layout describes the input channels.
using GridExtractor = std::function<Grid(const Grid&, const std::vector<ChannelInfo>&)>;

/// Concatenate the plan's grids into the final fused image without any
/// learned processing.
FusedImage materialize(const FusionPlan& plan);

// Strategy builders per the three fusion schemes. The extractor is applied
// once to the stacked image (Early), per sweep in its native viewpoint
// (Late), or after every pairwise fuse (Incremental).
FusedImage build_early(const std::vector<Sweep>& sweeps, const RvGeometry& g,
                       const GridExtractor& extractor = {});
FusedImage build_late(const std::vector<Sweep>& sweeps, const RvGeometry& g,
                      const GridExtractor& extractor = {});
FusedImage build_incremental(const std::vector<Sweep>& sweeps, const RvGeometry& g,
                             const GridExtractor& extractor = {});

/// Fuse one more sweep into an existing image: warp the image into the
/// sweep's viewpoint, re-project, and concatenate
/// [next hand features, warped image features, displacement]. The sweep's
/// features are computed against its own pose when absent.
FusedImage fuse_pair(const FusedImage& prev, const Sweep& next, const RvGeometry& g,
                     bool displacement_enabled = true);

/// Turn a single rasterized sweep into a fused image (degenerate K=1).
FusedImage from_range_image(const RangeImage& img, const Sweep& s, int sweep_index);

/// Write one line per channel: index, role, contributing sweep, label.
std::string channel_manifest(const std::vector<ChannelInfo>& layout);

}  // namespace rangefuse
