#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evgraph/representations.hpp"

namespace evg {

// One row of the metrics CSV: epoch, split, loss_total, loss_task, loss_inf,
// loss_feat_1..N_t, accuracy, lr, seed.
struct MetricsRow {
  int epoch = 0;
  std::string split;
  double loss_total = 0;
  double loss_task = 0;
  double loss_inf = 0;
  std::vector<double> loss_feat;
  double accuracy = 0;
  double lr = 0;
  std::uint64_t seed = 0;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       int n_feat);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

struct GridSample {
  const repr::DenseVoxelGrid* grid = nullptr;
  int label = 0;
};

struct GraphSample {
  const repr::VoxelGraph* graph = nullptr;
  const repr::DenseVoxelGrid* grid = nullptr;  // teacher view; null when unused
  int label = 0;
};

struct SgdSettings {
  double lr_max = 1e-1;
  double lr_min = 1e-4;
};

struct AdamSettings {
  double lr = 1e-4;
  int halve_every = 20;
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  int best_epoch = 0;
  double best_accuracy = 0;
  double final_accuracy = 0;
};

}  // namespace evg
