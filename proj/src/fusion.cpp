#include "rangefuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rangefuse/config.hpp"

namespace rangefuse {

FusionKind fusion_kind_from_string(const std::string& s) {
  if (s == "early") return FusionKind::Early;
  if (s == "late") return FusionKind::Late;
  if (s == "incremental") return FusionKind::Incremental;
  throw ConfigError("unknown fusion.kind '" + s + "' (expected early|late|incremental)");
}

std::string to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::Early: return "early";
    case FusionKind::Late: return "late";
    case FusionKind::Incremental: return "incremental";
  }
  return "?";
}

Grid Grid::zeros(int rows, int cols, int channels) {
  Grid g;
  g.rows = rows;
  g.cols = cols;
  g.channels = channels;
  g.data.assign(static_cast<std::size_t>(rows) * cols * channels, 0.0);
  return g;
}

Grid apply_warp(const Grid& src, const WarpMap& map) {
  Grid out = Grid::zeros(src.rows, src.cols, src.channels);
  for (int cell = 0; cell < src.cells(); ++cell) {
    const int s = map.src_cell[cell];
    if (s < 0) continue;
    for (int ch = 0; ch < src.channels; ++ch) out.at(cell, ch) = src.at(s, ch);
  }
  return out;
}

std::vector<int> FusedImage::provenance(int cell) const {
  std::vector<int> out;
  const uint32_t mask = provenance_mask[cell];
  for (std::size_t s = 0; s < slot_to_index.size(); ++s) {
    if (mask & (1u << s)) out.push_back(slot_to_index[s]);
  }
  return out;
}

Eigen::Vector3d displacement_feature(const Eigen::Vector3d& p_warped,
                                     const Eigen::Vector3d& p_native, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  const Eigen::Vector3d d = p_warped - p_native;
  // Rotation about z by -theta: the native ray maps onto +x.
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()};
}

namespace {

std::vector<ChannelInfo> hand_layout(int sweep_index) {
  const std::string k = "k=" + std::to_string(sweep_index);
  return {
      {ChannelRole::RangeNative, sweep_index, k + " range_native"},
      {ChannelRole::AzimuthNative, sweep_index, k + " azimuth_native"},
      {ChannelRole::Intensity, sweep_index, k + " intensity"},
      {ChannelRole::RangeCurrent, sweep_index, k + " range_current"},
      {ChannelRole::AzimuthCurrent, sweep_index, k + " azimuth_current"},
      {ChannelRole::Occupancy, sweep_index, k + " occupancy"},
  };
}

std::vector<ChannelInfo> displacement_layout(int older_index, int base_index) {
  std::vector<ChannelInfo> out;
  const std::string tag =
      "h(k=" + std::to_string(older_index) + " vs k=" + std::to_string(base_index) + ") ";
  for (const char* axis : {"dx", "dy", "dz"}) {
    out.push_back({ChannelRole::Displacement, older_index, tag + axis});
  }
  return out;
}

Grid hand_grid(const RangeImage& img) {
  Grid g;
  g.rows = img.geometry.n_rows;
  g.cols = img.geometry.n_cols;
  g.channels = kHandChannels;
  g.data = img.feature_grid();
  return g;
}

std::vector<CellAnchor> anchors_from_image(const RangeImage& img, const Sweep& s_in_view,
                                           int slot) {
  std::vector<CellAnchor> anchors(img.geometry.cells());
  for (int cell = 0; cell < img.geometry.cells(); ++cell) {
    const int idx = img.point_index[cell];
    if (idx < 0) continue;
    anchors[cell] = CellAnchor{slot, idx, s_in_view.points[idx].xyz, img.range[cell]};
  }
  return anchors;
}

std::vector<uint32_t> mask_from_anchors(const std::vector<CellAnchor>& anchors) {
  std::vector<uint32_t> mask(anchors.size(), 0);
  for (std::size_t c = 0; c < anchors.size(); ++c) {
    if (anchors[c].slot >= 0) mask[c] = 1u << anchors[c].slot;
  }
  return mask;
}

struct WarpedAnchors {
  WarpMap map;
  std::vector<CellAnchor> anchors;  // per destination cell, slot < 0 when empty
};

// Re-project the occupied cells of an image from `src_pose` into
// `dst_pose`. Collisions keep the smaller re-projected range; exact ties
// keep the lower source cell (the ascending scan handles both).
WarpedAnchors warp_anchors(const std::vector<CellAnchor>& anchors, const Pose& src_pose,
                           const Pose& dst_pose, const RvGeometry& g) {
  WarpedAnchors out;
  out.map.src_cell.assign(g.cells(), -1);
  out.anchors.assign(g.cells(), CellAnchor{});

  const bool identity = src_pose.same_frame(dst_pose);
  const Eigen::Matrix3d r_rel =
      identity ? Eigen::Matrix3d::Identity()
               : Eigen::Matrix3d(dst_pose.rotation.transpose() * src_pose.rotation);
  const Eigen::Vector3d t_rel =
      identity ? Eigen::Vector3d::Zero()
               : Eigen::Vector3d(dst_pose.rotation.transpose() *
                                 (src_pose.translation - dst_pose.translation));

  for (int cell = 0; cell < g.cells(); ++cell) {
    if (anchors[cell].slot < 0) continue;
    ++out.map.source_count;
    const Eigen::Vector3d p =
        identity ? anchors[cell].xyz : Eigen::Vector3d(r_rel * anchors[cell].xyz + t_rel);
    const Projection pr = project_point(p, g);
    if (!pr.in_view) {
      ++out.map.drops.out_of_view;
      continue;
    }
    const int dst = g.cell(pr.row, pr.col);
    const double range = p.norm();
    if (out.map.src_cell[dst] >= 0) {
      if (out.anchors[dst].range <= range) {
        ++out.map.drops.collision;
        continue;
      }
      ++out.map.drops.collision;  // the previous winner is evicted
    }
    out.map.src_cell[dst] = cell;
    CellAnchor a = anchors[cell];
    a.xyz = p;
    a.range = range;
    out.anchors[dst] = a;
  }
  out.map.drops.total = out.map.drops.collision + out.map.drops.out_of_view;
  return out;
}

// h for every cell occupied on both sides: displacement of the warped
// point against the natively observed point, in the native ray frame.
Grid displacement_grid(const std::vector<CellAnchor>& base, const std::vector<CellAnchor>& warped,
                       const RvGeometry& g) {
  Grid h = Grid::zeros(g.n_rows, g.n_cols, 3);
  for (int cell = 0; cell < g.cells(); ++cell) {
    if (base[cell].slot < 0 || warped[cell].slot < 0) continue;
    const Eigen::Vector3d& pn = base[cell].xyz;
    const double theta = (pn.x() == 0.0 && pn.y() == 0.0) ? 0.0 : std::atan2(pn.y(), pn.x());
    const Eigen::Vector3d d = displacement_feature(warped[cell].xyz, pn, theta);
    h.at(cell, 0) = d.x();
    h.at(cell, 1) = d.y();
    h.at(cell, 2) = d.z();
  }
  return h;
}

Grid occupancy_grid(const std::vector<CellAnchor>& anchors, const RvGeometry& g) {
  Grid occ = Grid::zeros(g.n_rows, g.n_cols, 1);
  for (int cell = 0; cell < g.cells(); ++cell) {
    if (anchors[cell].slot >= 0) occ.at(cell, 0) = 1.0;
  }
  return occ;
}

void concat_grid(Grid* dst, std::vector<ChannelInfo>* dst_layout, const Grid& src,
                 const std::vector<ChannelInfo>& src_layout) {
  if (dst->channels == 0) {
    *dst = src;
    *dst_layout = src_layout;
    return;
  }
  Grid out = Grid::zeros(dst->rows, dst->cols, dst->channels + src.channels);
  for (int cell = 0; cell < out.cells(); ++cell) {
    for (int ch = 0; ch < dst->channels; ++ch) out.at(cell, ch) = dst->at(cell, ch);
    for (int ch = 0; ch < src.channels; ++ch) out.at(cell, dst->channels + ch) = src.at(cell, ch);
  }
  *dst = std::move(out);
  dst_layout->insert(dst_layout->end(), src_layout.begin(), src_layout.end());
}

FusedImage finish_image(const FusionPlan& plan, Grid channels, std::vector<ChannelInfo> layout) {
  FusedImage img;
  img.geometry = plan.geometry;
  img.viewpoint = plan.viewpoint;
  img.viewpoint_index = 0;
  img.channels = std::move(channels);
  img.layout = std::move(layout);
  img.anchors = plan.final_anchors;
  img.provenance_mask = plan.final_provenance;
  img.slot_to_index = plan.slot_to_index;
  return img;
}

Grid run_extractor(const GridExtractor& extractor, const Grid& grid,
                   const std::vector<ChannelInfo>& layout, std::vector<ChannelInfo>* out_layout) {
  if (!extractor) {
    *out_layout = layout;
    return grid;
  }
  Grid out = extractor(grid, layout);
  out_layout->assign(static_cast<std::size_t>(out.channels),
                     ChannelInfo{ChannelRole::Learned, 0, "learned"});
  return out;
}

}  // namespace

FusionPlan build_plan(FusionKind kind, const std::vector<Sweep>& sweeps, const RvGeometry& g,
                      bool displacement_enabled) {
  const int K = static_cast<int>(sweeps.size());
  if (K == 0) throw ConfigError("fusion needs at least one sweep");
  if (K > 32) throw ConfigError("fusion supports at most 32 sweeps");
  for (int s = 1; s < K; ++s) {
    if (!(sweeps[s - 1].pose.timestamp < sweeps[s].pose.timestamp)) {
      throw ConfigError("sweeps must be ordered oldest to newest with distinct timestamps");
    }
  }

  FusionPlan plan;
  plan.kind = kind;
  plan.geometry = g;
  plan.num_sweeps = K;
  plan.displacement_enabled = displacement_enabled;
  const Pose pose0 = sweeps.back().pose;
  plan.viewpoint = pose0;

  // Local copies with sweep indices relative to the newest sweep and
  // features computed against the current (newest) frame.
  std::vector<Sweep> local(sweeps.begin(), sweeps.end());
  for (int s = 0; s < K; ++s) {
    local[s].index = s - (K - 1);
    local[s].features = compute_point_features(local[s], pose0);
    plan.slot_to_index.push_back(local[s].index);
  }

  // Sweep-0 point bookkeeping for the prediction heads.
  const Sweep& current = local.back();
  plan.point_cells.reserve(current.size());
  plan.point_azimuth.reserve(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    const Projection pr = project_point(current.points[i].xyz, g);
    plan.point_cells.push_back(pr.in_view ? g.cell(pr.row, pr.col) : -1);
    plan.point_azimuth.push_back(current.features[i].azimuth_native);
  }

  // One-shot diagnostic: oldest sweep straight into viewpoint 0.
  {
    const RangeImage oldest_native = rasterize(local.front(), g);
    const auto oldest_anchors = anchors_from_image(oldest_native, local.front(), 0);
    plan.oneshot_oldest = warp_anchors(oldest_anchors, local.front().pose, pose0, g).map;
  }

  const int cells = g.cells();
  if (kind == FusionKind::Early) {
    std::vector<std::vector<CellAnchor>> slot_anchors(K);
    for (int s = 0; s < K; ++s) {
      const Sweep warped = warp_sweep(local[s], pose0);
      const RangeImage img = rasterize(warped, g);
      plan.sweep_grids.push_back(hand_grid(img));
      slot_anchors[s] = anchors_from_image(img, warped, s);
    }
    for (int s = 0; s < K - 1; ++s) {
      plan.pair_displacement.push_back(displacement_grid(slot_anchors[K - 1], slot_anchors[s], g));
    }
    plan.final_anchors.assign(cells, CellAnchor{});
    plan.final_provenance.assign(cells, 0);
    plan.union_occupancy = Grid::zeros(g.n_rows, g.n_cols, 1);
    for (int cell = 0; cell < cells; ++cell) {
      for (int s = K - 1; s >= 0; --s) {
        if (slot_anchors[s][cell].slot < 0) continue;
        plan.final_provenance[cell] |= 1u << s;
        if (plan.final_anchors[cell].slot < 0) plan.final_anchors[cell] = slot_anchors[s][cell];
      }
      plan.union_occupancy.at(cell, 0) = plan.final_anchors[cell].slot >= 0 ? 1.0 : 0.0;
    }
    return plan;
  }

  // Native rasterizations for Late and Incremental.
  std::vector<RangeImage> native(K);
  std::vector<std::vector<CellAnchor>> native_anchors(K);
  for (int s = 0; s < K; ++s) {
    native[s] = rasterize(local[s], g);
    plan.sweep_grids.push_back(hand_grid(native[s]));
    native_anchors[s] = anchors_from_image(native[s], local[s], s);
  }

  if (kind == FusionKind::Late) {
    plan.final_anchors = native_anchors[K - 1];
    plan.final_provenance = mask_from_anchors(native_anchors[K - 1]);
    for (int s = 0; s < K - 1; ++s) {
      WarpedAnchors wa = warp_anchors(native_anchors[s], local[s].pose, pose0, g);
      plan.pair_displacement.push_back(displacement_grid(native_anchors[K - 1], wa.anchors, g));
      plan.warp_diagnostics.push_back(wa.map);
      for (int cell = 0; cell < cells; ++cell) {
        if (wa.anchors[cell].slot < 0) continue;
        plan.final_provenance[cell] |= 1u << s;
        if (plan.final_anchors[cell].slot < 0) plan.final_anchors[cell] = wa.anchors[cell];
      }
      plan.late_warps.push_back(std::move(wa.map));
    }
    return plan;
  }

  // Incremental: fold the chain from the oldest sweep forward.
  std::vector<CellAnchor> state = native_anchors[0];
  std::vector<uint32_t> state_prov = mask_from_anchors(state);
  Pose state_pose = local[0].pose;
  for (int s = 1; s < K; ++s) {
    FusionStep step;
    step.next_slot = s;
    step.next_hand = plan.sweep_grids[s];
    WarpedAnchors wa = warp_anchors(state, state_pose, local[s].pose, g);
    step.displacement = displacement_grid(native_anchors[s], wa.anchors, g);
    step.warp = wa.map;
    plan.warp_diagnostics.push_back(wa.map);

    std::vector<CellAnchor> fused(cells);
    std::vector<uint32_t> fused_prov(cells, 0);
    for (int cell = 0; cell < cells; ++cell) {
      if (native_anchors[s][cell].slot >= 0) {
        fused[cell] = native_anchors[s][cell];
        fused_prov[cell] |= 1u << s;
      } else if (wa.anchors[cell].slot >= 0) {
        fused[cell] = wa.anchors[cell];
      }
      const int src = wa.map.src_cell[cell];
      if (src >= 0) fused_prov[cell] |= state_prov[src];
    }
    step.occupancy = occupancy_grid(fused, g);
    plan.steps.push_back(std::move(step));
    state = std::move(fused);
    state_prov = std::move(fused_prov);
    state_pose = local[s].pose;
  }
  plan.final_anchors = std::move(state);
  plan.final_provenance = std::move(state_prov);
  return plan;
}

FusedImage materialize(const FusionPlan& plan) {
  const int K = plan.num_sweeps;
  Grid out;
  std::vector<ChannelInfo> layout;
  switch (plan.kind) {
    case FusionKind::Early: {
      for (int s = 0; s < K; ++s) {
        concat_grid(&out, &layout, plan.sweep_grids[s], hand_layout(plan.slot_to_index[s]));
      }
      if (plan.displacement_enabled) {
        for (int s = 0; s < K - 1; ++s) {
          concat_grid(&out, &layout, plan.pair_displacement[s],
                      displacement_layout(plan.slot_to_index[s], 0));
        }
      }
      break;
    }
    case FusionKind::Late: {
      concat_grid(&out, &layout, plan.sweep_grids[K - 1], hand_layout(0));
      for (int s = K - 2; s >= 0; --s) {
        concat_grid(&out, &layout, apply_warp(plan.sweep_grids[s], plan.late_warps[s]),
                    hand_layout(plan.slot_to_index[s]));
        if (plan.displacement_enabled) {
          concat_grid(&out, &layout, plan.pair_displacement[s],
                      displacement_layout(plan.slot_to_index[s], 0));
        }
      }
      break;
    }
    case FusionKind::Incremental: {
      out = plan.sweep_grids[0];
      layout = hand_layout(plan.slot_to_index[0]);
      for (const FusionStep& step : plan.steps) {
        Grid fused;
        std::vector<ChannelInfo> fused_layout;
        concat_grid(&fused, &fused_layout, step.next_hand,
                    hand_layout(plan.slot_to_index[step.next_slot]));
        concat_grid(&fused, &fused_layout, apply_warp(out, step.warp), layout);
        if (plan.displacement_enabled) {
          concat_grid(&fused, &fused_layout, step.displacement,
                      displacement_layout(plan.slot_to_index[step.next_slot - 1],
                                          plan.slot_to_index[step.next_slot]));
        }
        out = std::move(fused);
        layout = std::move(fused_layout);
      }
      break;
    }
  }
  return finish_image(plan, std::move(out), std::move(layout));
}

FusedImage build_early(const std::vector<Sweep>& sweeps, const RvGeometry& g,
                       const GridExtractor& extractor) {
  FusionPlan plan = build_plan(FusionKind::Early, sweeps, g);
  FusedImage img = materialize(plan);
  if (extractor) {
    std::vector<ChannelInfo> layout;
    img.channels = run_extractor(extractor, img.channels, img.layout, &layout);
    img.layout = std::move(layout);
  }
  return img;
}

FusedImage build_late(const std::vector<Sweep>& sweeps, const RvGeometry& g,
                      const GridExtractor& extractor) {
  FusionPlan plan = build_plan(FusionKind::Late, sweeps, g);
  if (!extractor) return materialize(plan);
  const int K = plan.num_sweeps;
  Grid out;
  std::vector<ChannelInfo> layout;
  std::vector<ChannelInfo> ex_layout;
  const Grid newest = run_extractor(extractor, plan.sweep_grids[K - 1], hand_layout(0), &ex_layout);
  concat_grid(&out, &layout, newest, ex_layout);
  for (int s = K - 2; s >= 0; --s) {
    const Grid e = run_extractor(extractor, plan.sweep_grids[s],
                                 hand_layout(plan.slot_to_index[s]), &ex_layout);
    concat_grid(&out, &layout, apply_warp(e, plan.late_warps[s]), ex_layout);
    if (plan.displacement_enabled) {
      concat_grid(&out, &layout, plan.pair_displacement[s],
                  displacement_layout(plan.slot_to_index[s], 0));
    }
  }
  return finish_image(plan, std::move(out), std::move(layout));
}

FusedImage build_incremental(const std::vector<Sweep>& sweeps, const RvGeometry& g,
                             const GridExtractor& extractor) {
  FusionPlan plan = build_plan(FusionKind::Incremental, sweeps, g);
  if (!extractor) return materialize(plan);
  Grid state = plan.sweep_grids[0];
  std::vector<ChannelInfo> layout = hand_layout(plan.slot_to_index[0]);
  for (const FusionStep& step : plan.steps) {
    Grid fused;
    std::vector<ChannelInfo> fused_layout;
    concat_grid(&fused, &fused_layout, step.next_hand,
                hand_layout(plan.slot_to_index[step.next_slot]));
    concat_grid(&fused, &fused_layout, apply_warp(state, step.warp), layout);
    if (plan.displacement_enabled) {
      concat_grid(&fused, &fused_layout, step.displacement,
                  displacement_layout(plan.slot_to_index[step.next_slot - 1],
                                      plan.slot_to_index[step.next_slot]));
    }
    state = run_extractor(extractor, fused, fused_layout, &layout);
  }
  return finish_image(plan, std::move(state), std::move(layout));
}

FusedImage from_range_image(const RangeImage& img, const Sweep& s, int sweep_index) {
  FusedImage out;
  out.geometry = img.geometry;
  out.viewpoint = s.pose;
  out.viewpoint_index = sweep_index;
  out.channels = hand_grid(img);
  out.layout = hand_layout(sweep_index);
  out.anchors = anchors_from_image(img, s, 0);
  out.provenance_mask = mask_from_anchors(out.anchors);
  out.slot_to_index = {sweep_index};
  return out;
}

FusedImage fuse_pair(const FusedImage& prev, const Sweep& next, const RvGeometry& g,
                     bool displacement_enabled) {
  if (!(g == prev.geometry)) throw ConfigError("fuse_pair: range view geometry mismatch");
  if (!(prev.viewpoint.timestamp < next.pose.timestamp)) {
    throw ConfigError("fuse_pair: previous viewpoint must be strictly earlier");
  }
  if (prev.slot_to_index.size() >= 32) throw ConfigError("fuse_pair: too many sweeps");

  Sweep local = next;
  if (local.features.empty()) local.features = compute_point_features(local, local.pose);
  const int slot = static_cast<int>(prev.slot_to_index.size());
  const RangeImage img = rasterize(local, g);
  const auto next_anchors = anchors_from_image(img, local, slot);
  const auto next_mask = mask_from_anchors(next_anchors);
  WarpedAnchors wa = warp_anchors(prev.anchors, prev.viewpoint, next.pose, g);

  FusedImage out;
  out.geometry = g;
  out.viewpoint = next.pose;
  out.viewpoint_index = next.index;
  out.slot_to_index = prev.slot_to_index;
  out.slot_to_index.push_back(next.index);

  Grid channels;
  std::vector<ChannelInfo> layout;
  concat_grid(&channels, &layout, hand_grid(img), hand_layout(next.index));
  concat_grid(&channels, &layout, apply_warp(prev.channels, wa.map), prev.layout);
  if (displacement_enabled) {
    concat_grid(&channels, &layout, displacement_grid(next_anchors, wa.anchors, g),
                displacement_layout(prev.viewpoint_index, next.index));
  }
  out.channels = std::move(channels);
  out.layout = std::move(layout);

  const int cells = g.cells();
  out.anchors.assign(cells, CellAnchor{});
  out.provenance_mask.assign(cells, 0);
  for (int cell = 0; cell < cells; ++cell) {
    if (next_anchors[cell].slot >= 0) {
      out.anchors[cell] = next_anchors[cell];
      out.provenance_mask[cell] |= next_mask[cell];
    } else if (wa.anchors[cell].slot >= 0) {
      out.anchors[cell] = wa.anchors[cell];
    }
    const int src = wa.map.src_cell[cell];
    if (src >= 0) out.provenance_mask[cell] |= prev.provenance_mask[src];
  }
  return out;
}

std::string channel_manifest(const std::vector<ChannelInfo>& layout) {
  std::ostringstream out;
  out << "# channel, role, sweep, label\n";
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const char* role = "?";
    switch (layout[i].role) {
      case ChannelRole::RangeNative: role = "range_native"; break;
      case ChannelRole::AzimuthNative: role = "azimuth_native"; break;
      case ChannelRole::Intensity: role = "intensity"; break;
      case ChannelRole::RangeCurrent: role = "range_current"; break;
      case ChannelRole::AzimuthCurrent: role = "azimuth_current"; break;
      case ChannelRole::Occupancy: role = "occupancy"; break;
      case ChannelRole::Displacement: role = "displacement"; break;
      case ChannelRole::Learned: role = "learned"; break;
    }
    out << i << ", " << role << ", " << layout[i].sweep_index << ", " << layout[i].label << "\n";
  }
  return out.str();
}

}  // namespace rangefuse
