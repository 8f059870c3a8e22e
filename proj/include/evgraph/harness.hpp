#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evgraph/distill.hpp"
#include "evgraph/edgcn.hpp"
#include "evgraph/events.hpp"
#include "evgraph/teacher.hpp"

namespace evg::harness {

enum class Precision { F32, F64 };

struct ClassSpec {
  std::string name;
  events::PatternKind kind = events::PatternKind::MovingBar;
  double velocity_x = 0.0;
  double velocity_y = 0.0;
  std::optional<double> event_rate;  // overrides the dataset-level rate
  std::optional<double> noise_rate;
  double stall_begin = 0.4;
  double stall_end = 0.6;
};

struct DatasetSection {
  std::string root = "data/default";
  int sensor_width = 32;
  int sensor_height = 32;
  int samples_per_class = 50;
  double train_fraction = 0.8;
  double duration_ms = 80.0;
  double event_rate = 30.0;
  double noise_rate = 2.0;
  double speed_jitter = 0.15;  // relative per-sample velocity scatter
  std::vector<ClassSpec> classes;
  std::uint64_t seed = 7;
};

struct RunSection {
  std::uint64_t seed = 1;
  int num_seeds = 1;
  int jobs = 0;  // 0: one worker per hardware thread, capped by num_seeds
  Precision precision = Precision::F32;
  std::string out_root = "runs";
  std::string name;  // optional run-directory stem
};

struct RunConfig {
  DatasetSection dataset;
  repr::VoxelConfig voxel;
  int grid_bins = 8;
  int grid_height = 24;
  int grid_width = 24;
  edgcn::EdgcnConfig student;
  teacher::TeacherConfig teacher;
  std::string teacher_weights;       // run dir of the frozen teacher (student phase)
  std::string teacher_init_weights;  // optional external initialization hook
  distill::DistillConfig distill;
  int epochs = 30;
  int batch_size = 32;
  SgdSettings sgd;
  AdamSettings adam;
  RunSection run;
  nlohmann::json resolved;  // defaults + file + overrides, the snapshot source
};

nlohmann::json default_config_json();
// "a.b.c=value"; the value is parsed as JSON when possible, else as a string.
void apply_override(nlohmann::json& config, const std::string& dotted_assignment);
RunConfig config_from_json(const nlohmann::json& user);
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
std::string config_hash(const nlohmann::json& resolved);

struct EvalReport {
  double accuracy = 0;
  std::vector<double> per_class;
  double loss_task_mean = 0;
  size_t parameter_count = 0;
  double latency_ms = 0;  // median single-sample forward incl. voxelization
  std::vector<std::pair<double, double>> time_span_accuracy;  // (fraction, accuracy)
};

// Commands behind the CLI. Each returns the directory (or file) it produced.
// $EVG_RUN_ROOT overrides run.out_root when set.
std::string cmd_gen_data(const RunConfig& cfg);
std::string cmd_train_teacher(const RunConfig& cfg);
std::string cmd_train_student(const RunConfig& cfg);
EvalReport cmd_evaluate(const RunConfig& cfg, const std::string& weights_dir,
                        const std::string& manifest_path, std::vector<double> time_spans,
                        const std::string& report_path);
std::string cmd_export_embeddings(const RunConfig& cfg, const std::string& weights_dir,
                                  const std::string& manifest_path, const std::string& out_csv);
std::string cmd_ablation_grid(const RunConfig& cfg, const std::string& axis);
EvalReport cmd_benchmark(const RunConfig& cfg, const std::string& weights_dir,
                         const std::string& manifest_path, const std::string& report_path);

// Aggregate of a multi-seed run, also written to aggregate.csv.
struct SeedAggregate {
  std::vector<std::uint64_t> seeds;
  std::vector<double> best_accuracy;
  std::vector<double> final_accuracy;
  double mean_best = 0;
  double std_best = 0;
};

SeedAggregate read_aggregate(const std::string& run_dir);

}  // namespace evg::harness
