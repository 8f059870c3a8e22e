#include "evgraph/representations.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <unordered_map>

#include "evgraph/error.hpp"

namespace evg::repr {

namespace {

struct VoxelKey {
  std::uint64_t tb;
  std::uint32_t yb;
  std::uint32_t xb;

  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = k.tb * 0x9e3779b97f4a7c15ULL;
    h ^= (std::uint64_t(k.yb) << 32 | k.xb) + 0x517cc1b727220a95ULL + (h << 6) + (h >> 2);
    return static_cast<size_t>(h);
  }
};

}  // namespace

VoxelGraph voxelize(const events::EventStream& stream, const VoxelConfig& cfg) {
  if (stream.events.empty())
    raise(ErrorCode::DegenerateInput, "voxelize: empty event stream");
  if (cfg.v_x < 1 || cfg.v_y < 1 || cfg.v_t_ms <= 0 || cfg.n_vertices < 1)
    raise(ErrorCode::InvalidArgument, "voxelize: invalid voxel config");

  const auto v_t_us = static_cast<std::uint64_t>(std::llround(cfg.v_t_ms * 1000.0));
  if (v_t_us == 0) raise(ErrorCode::InvalidArgument, "voxelize: v_t below 1 us");

  const int d_inp = cfg.input_width();
  std::unordered_map<VoxelKey, std::pair<int, std::vector<double>>, VoxelKeyHash> buckets;
  for (const auto& e : stream.events) {
    VoxelKey key{e.t / v_t_us, std::uint32_t(e.y / cfg.v_y), std::uint32_t(e.x / cfg.v_x)};
    auto& cell = buckets[key];
    if (cell.second.empty()) cell.second.assign(d_inp, 0.0);
    cell.first += 1;
    const int local = int(e.y - key.yb * cfg.v_y) * cfg.v_x + int(e.x - key.xb * cfg.v_x);
    cell.second[local] += static_cast<double>(e.p);
  }

  // Rank by event count, descending; ties by ascending (t, y, x) origin.
  std::vector<std::pair<VoxelKey, std::pair<int, std::vector<double>>*>> ranked;
  ranked.reserve(buckets.size());
  for (auto& kv : buckets) ranked.emplace_back(kv.first, &kv.second);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second->first != b.second->first) return a.second->first > b.second->first;
    return std::tie(a.first.tb, a.first.yb, a.first.xb) <
           std::tie(b.first.tb, b.first.yb, b.first.xb);
  });
  const size_t kept = std::min<size_t>(cfg.n_vertices, ranked.size());
  ranked.resize(kept);
  // Canonical vertex order.
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first.tb, a.first.yb, a.first.xb) <
           std::tie(b.first.tb, b.first.yb, b.first.xb);
  });

  VoxelGraph g;
  g.coords = Mat<double>(static_cast<int>(kept), 3);
  g.semantics = Mat<double>(static_cast<int>(kept), d_inp);
  for (size_t i = 0; i < kept; ++i) {
    const VoxelKey& k = ranked[i].first;
    double* u = g.coords.row(static_cast<int>(i));
    u[0] = static_cast<double>(k.xb) * cfg.v_x;
    u[1] = static_cast<double>(k.yb) * cfg.v_y;
    u[2] = static_cast<double>(k.tb) * cfg.v_t_ms;
    std::copy(ranked[i].second->second.begin(), ranked[i].second->second.end(),
              g.semantics.row(static_cast<int>(i)));
  }
  return cfg.normalize ? normalize_coordinates(g) : g;
}

VoxelGraph normalize_coordinates(const VoxelGraph& graph) {
  VoxelGraph out = graph;
  const int n = graph.coords.rows;
  for (int c = 0; c < graph.coords.cols; ++c) {
    double lo = graph.coords.at(0, c), hi = lo;
    for (int i = 1; i < n; ++i) {
      lo = std::min(lo, graph.coords.at(i, c));
      hi = std::max(hi, graph.coords.at(i, c));
    }
    const double span = hi - lo;
    for (int i = 0; i < n; ++i)
      out.coords.at(i, c) = span > 0 ? (graph.coords.at(i, c) - lo) / span : 0.0;
  }
  out.normalized = true;
  return out;
}

double DenseVoxelGrid::total() const {
  double s = 0;
  for (double v : values) s += v;
  return s;
}

DenseVoxelGrid build_voxel_grid(const events::EventStream& stream, int bins, int height,
                                int width) {
  if (stream.events.empty())
    raise(ErrorCode::DegenerateInput, "build_voxel_grid: empty event stream");
  if (bins < 1 || height < 1 || width < 1)
    raise(ErrorCode::InvalidArgument, "build_voxel_grid: bins and sizes must be >= 1");

  DenseVoxelGrid grid;
  grid.bins = bins;
  grid.height = height;
  grid.width = width;
  grid.values.assign(static_cast<size_t>(bins) * height * width, 0.0);
  grid.t_min = stream.events.front().t;
  grid.t_max = stream.events.back().t;
  const std::uint64_t span = grid.t_max - grid.t_min + 1;
  for (const auto& e : stream.events) {
    const int b = static_cast<int>((e.t - grid.t_min) * static_cast<std::uint64_t>(bins) / span);
    const int gy = static_cast<int>(std::uint64_t(e.y) * height / stream.sensor_height);
    const int gx = static_cast<int>(std::uint64_t(e.x) * width / stream.sensor_width);
    grid.at(b, gy, gx) += static_cast<double>(e.p);
  }
  return grid;
}

}  // namespace evg::repr
