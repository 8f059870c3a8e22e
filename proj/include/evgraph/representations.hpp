#pragma once

#include <cstdint>

#include "evgraph/events.hpp"
#include "evgraph/tensor.hpp"

namespace evg::repr {

struct VoxelConfig {
  int v_x = 5;           // voxel spatial extent, pixels
  int v_y = 5;
  double v_t_ms = 25.0;  // voxel temporal extent, ms
  int n_vertices = 512;  // retained vertex budget (N_v)
  bool normalize = true;

  int input_width() const { return v_x * v_y; }  // D_inp
};

// Vertex set of the event graph. U rows are voxel origins (x px, y px, t ms),
// or per-axis [0,1] after normalization; F rows are the per-pixel-cell signed
// polarity sums of the voxel, flattened row-major to v_x*v_y entries.
struct VoxelGraph {
  Mat<double> coords;     // N x 3
  Mat<double> semantics;  // N x D_inp
  bool normalized = false;

  int num_vertices() const { return coords.rows; }
};

// Buckets events by floor division of (x, y, t) by (v_x, v_y, v_t), keeps the
// n_vertices fullest voxels (ties: ascending t, y, x origin), and orders the
// surviving vertices by ascending (t, y, x) origin. Applies coordinate
// normalization when the config asks for it.
VoxelGraph voxelize(const events::EventStream& stream, const VoxelConfig& cfg);

// Affinely maps every coordinate column onto [0,1]; constant columns map to 0.
VoxelGraph normalize_coordinates(const VoxelGraph& graph);

struct DenseVoxelGrid {
  int bins = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;  // bins x height x width, bin-major
  std::uint64_t t_min = 0;
  std::uint64_t t_max = 0;

  double at(int b, int y, int x) const {
    return values[(static_cast<size_t>(b) * height + y) * width + x];
  }
  double& at(int b, int y, int x) {
    return values[(static_cast<size_t>(b) * height + y) * width + x];
  }
  double total() const;
};

// Splits [t_min, t_max] into `bins` equal intervals and adds each event's
// polarity to its containing (bin, y, x) cell. Spatial cells are scaled from
// sensor resolution to height x width by integer flooring, so the grid total
// always equals the stream's signed polarity sum.
DenseVoxelGrid build_voxel_grid(const events::EventStream& stream, int bins, int height,
                                int width);

}  // namespace evg::repr
