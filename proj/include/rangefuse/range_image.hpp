#pragma once

#include <string>
#include <vector>

#include "rangefuse/geometry.hpp"

namespace rangefuse {

/// Angular layout of a range view image: rows discretize elevation over
/// [phi_min, phi_max), columns discretize azimuth over the full circle.
struct RvGeometry {
  int n_rows = 0;
  int n_cols = 0;
  double phi_min = 0.0;
  double phi_max = 0.0;

  static RvGeometry make(int n_rows, int n_cols, double phi_min, double phi_max);

  double d_phi() const { return (phi_max - phi_min) / n_rows; }
  double d_theta() const { return kTwoPi / n_cols; }
  int cells() const { return n_rows * n_cols; }
  int cell(int row, int col) const { return row * n_cols + col; }
  bool operator==(const RvGeometry& o) const = default;
};

struct Projection {
  int row = -1;
  int col = -1;
  bool in_view = false;
};

/// Discretize a point (already expressed in the image viewpoint) into a
/// (row, col) bin. Elevation is offset by phi_min before the floor; the
/// column wraps modulo n_cols. Out-of-view covers elevations outside
/// [phi_min, phi_max) and zero-range points.
Projection project_point(const Eigen::Vector3d& p, const RvGeometry& g);

// Feature channels stored per occupied cell (hand-crafted block):
//   range_native, azimuth_native, intensity, range_current,
//   azimuth_current, occupancy.
inline constexpr int kHandChannels = 6;

/// Range view image: per cell the index of the winning point (minimum
/// range in the view frame, ties to the smaller point index) and its
/// feature vector.
struct RangeImage {
  RvGeometry geometry;
  std::vector<int> point_index;        // -1 when empty
  std::vector<double> range;           // view-frame range of the winner
  std::vector<PointFeatures> features;  // winner features (undefined when empty)

  bool occupied(int cell) const { return point_index[cell] >= 0; }
  int occupied_count() const;

  /// Dense n_rows*n_cols*kHandChannels grid (row-major, channels last).
  /// Empty cells are all zero with occupancy 0.
  std::vector<double> feature_grid() const;
};

/// Project every point of a sweep (already warped into the image
/// viewpoint) and keep the smallest-range point per cell. The sweep's
/// `features` must be parallel to `points` or empty (zeros then).
RangeImage rasterize(const Sweep& s, const RvGeometry& g);

struct DropStats {
  int total = 0;
  int collision = 0;
  int out_of_view = 0;
};

/// How many points of `s` fail to survive rasterization from `view`,
/// partitioned exactly into collision and out-of-view losses.
DropStats count_dropped(const Sweep& s, const Pose& view, const RvGeometry& g);

/// Debug dump: 24-byte header {magic "RVIM", rows u32, cols u32,
/// channels u32, reserved u64} followed by f32 channel planes, each plane
/// row-major. `grid` is channels-last as produced by feature_grid().
void write_rvim(const std::string& path, int rows, int cols, int channels,
                const std::vector<double>& grid);
std::vector<float> read_rvim(const std::string& path, int* rows, int* cols, int* channels);

}  // namespace rangefuse
