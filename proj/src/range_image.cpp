#include "rangefuse/range_image.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "rangefuse/config.hpp"

namespace rangefuse {

RvGeometry RvGeometry::make(int n_rows, int n_cols, double phi_min, double phi_max) {
  if (n_rows <= 0 || n_cols <= 0) throw ConfigError("range view needs positive row/col counts");
  if (!(phi_max > phi_min)) throw ConfigError("range view needs phi_max > phi_min");
  return RvGeometry{n_rows, n_cols, phi_min, phi_max};
}

Projection project_point(const Eigen::Vector3d& p, const RvGeometry& g) {
  Projection out;
  const double r = p.norm();
  if (r == 0.0) return out;  // elevation undefined
  const double phi = std::asin(p.z() / r);
  if (phi < g.phi_min || phi >= g.phi_max) return out;
  const double theta = wrap_two_pi(std::atan2(p.y(), p.x()));
  int row = static_cast<int>(std::floor((phi - g.phi_min) / g.d_phi()));
  int col = static_cast<int>(std::floor(theta / g.d_theta()));
  if (row >= g.n_rows) row = g.n_rows - 1;  // phi just under phi_max can round up
  col %= g.n_cols;
  out.row = row;
  out.col = col;
  out.in_view = true;
  return out;
}

int RangeImage::occupied_count() const {
  int n = 0;
  for (int idx : point_index) n += (idx >= 0);
  return n;
}

std::vector<double> RangeImage::feature_grid() const {
  std::vector<double> grid(static_cast<std::size_t>(geometry.cells()) * kHandChannels, 0.0);
  for (int c = 0; c < geometry.cells(); ++c) {
    if (!occupied(c)) continue;
    const PointFeatures& f = features[c];
    double* ch = &grid[static_cast<std::size_t>(c) * kHandChannels];
    ch[0] = f.range_native;
    ch[1] = f.azimuth_native;
    ch[2] = f.intensity;
    ch[3] = f.range_current;
    ch[4] = f.azimuth_current;
    ch[5] = 1.0;
  }
  return grid;
}

RangeImage rasterize(const Sweep& s, const RvGeometry& g) {
  if (!s.features.empty() && s.features.size() != s.points.size()) {
    throw DataError("sweep features not parallel to points");
  }
  RangeImage img;
  img.geometry = g;
  img.point_index.assign(g.cells(), -1);
  img.range.assign(g.cells(), 0.0);
  img.features.assign(g.cells(), PointFeatures{});
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const Projection pr = project_point(s.points[i].xyz, g);
    if (!pr.in_view) continue;
    const int cell = g.cell(pr.row, pr.col);
    const double r = s.points[i].xyz.norm();
    // Minimum range wins; ties go to the smaller point index, which the
    // ascending scan order already guarantees.
    if (img.point_index[cell] >= 0 && img.range[cell] <= r) continue;
    img.point_index[cell] = static_cast<int>(i);
    img.range[cell] = r;
    if (!s.features.empty()) img.features[cell] = s.features[i];
  }
  return img;
}

DropStats count_dropped(const Sweep& s, const Pose& view, const RvGeometry& g) {
  const Sweep warped = warp_sweep(s, view);
  DropStats stats;
  for (const Point& p : warped.points) {
    if (!project_point(p.xyz, g).in_view) ++stats.out_of_view;
  }
  const RangeImage img = rasterize(warped, g);
  const int survivors = img.occupied_count();
  stats.total = static_cast<int>(s.points.size()) - survivors;
  stats.collision = stats.total - stats.out_of_view;
  return stats;
}

namespace {
constexpr char kRvimMagic[4] = {'R', 'V', 'I', 'M'};
}

void write_rvim(const std::string& path, int rows, int cols, int channels,
                const std::vector<double>& grid) {
  if (grid.size() != static_cast<std::size_t>(rows) * cols * channels) {
    throw DataError("rvim grid size does not match header");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(kRvimMagic, 4);
  const uint32_t dims[3] = {static_cast<uint32_t>(rows), static_cast<uint32_t>(cols),
                            static_cast<uint32_t>(channels)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  const uint64_t reserved = 0;
  out.write(reinterpret_cast<const char*>(&reserved), sizeof(reserved));
  // Channel planes, each row-major.
  std::vector<float> plane(static_cast<std::size_t>(rows) * cols);
  for (int ch = 0; ch < channels; ++ch) {
    for (int rc = 0; rc < rows * cols; ++rc) {
      plane[rc] = static_cast<float>(grid[static_cast<std::size_t>(rc) * channels + ch]);
    }
    out.write(reinterpret_cast<const char*>(plane.data()),
              static_cast<std::streamsize>(plane.size() * sizeof(float)));
  }
  if (!out) throw DataError("short write: " + path);
}

std::vector<float> read_rvim(const std::string& path, int* rows, int* cols, int* channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kRvimMagic, 4) != 0) throw DataError("bad rvim magic: " + path);
  uint32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  uint64_t reserved;
  in.read(reinterpret_cast<char*>(&reserved), sizeof(reserved));
  if (!in) throw DataError("truncated rvim header: " + path);
  *rows = static_cast<int>(dims[0]);
  *cols = static_cast<int>(dims[1]);
  *channels = static_cast<int>(dims[2]);
  std::vector<float> data(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) throw DataError("truncated rvim payload: " + path);
  return data;
}

}  // namespace rangefuse
