// Command-line front end. Talks to the library exclusively through the C API
// in evgraph/evgraph.h.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evgraph/evgraph.h"

namespace {

struct ConfigDeleter {
  void operator()(evg_config* c) const { evg_config_free(c); }
};
using ConfigPtr = std::unique_ptr<evg_config, ConfigDeleter>;

struct StringDeleter {
  void operator()(char* s) const { evg_string_free(s); }
};
using StringPtr = std::unique_ptr<char, StringDeleter>;

int fail(evg_status status) {
  std::fprintf(stderr, "error (%s): %s\n", evg_status_name(status), evg_last_error());
  return static_cast<int>(status);
}

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  int seeds = 0;
  long long seed = -1;
  std::string out_root;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "run configuration (JSON)");
  cmd->add_option("-s,--set", opts.sets, "dotted-key override, e.g. optimizer.epochs=10");
  cmd->add_option("--seeds", opts.seeds, "number of seeds (run.num_seeds)");
  cmd->add_option("--seed", opts.seed, "base seed (run.seed)");
  cmd->add_option("--out", opts.out_root, "output root (run.out_root)");
}

evg_status make_config(const CommonOpts& opts, ConfigPtr& out) {
  evg_config* raw = nullptr;
  evg_status s = opts.config_path.empty() ? evg_config_create(&raw)
                                          : evg_config_load(opts.config_path.c_str(), &raw);
  if (s != EVG_OK) return s;
  out.reset(raw);
  for (const auto& assignment : opts.sets)
    if ((s = evg_config_set(out.get(), assignment.c_str())) != EVG_OK) return s;
  if (opts.seeds > 0) {
    const std::string a = "run.num_seeds=" + std::to_string(opts.seeds);
    if ((s = evg_config_set(out.get(), a.c_str())) != EVG_OK) return s;
  }
  if (opts.seed >= 0) {
    const std::string a = "run.seed=" + std::to_string(opts.seed);
    if ((s = evg_config_set(out.get(), a.c_str())) != EVG_OK) return s;
  }
  if (!opts.out_root.empty()) {
    const std::string a = "run.out_root=" + opts.out_root;
    if ((s = evg_config_set(out.get(), a.c_str())) != EVG_OK) return s;
  }
  return EVG_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-graph learning toolkit"};
  app.require_subcommand(1);

  CommonOpts gen_opts, teacher_opts, student_opts, eval_opts, export_opts, grid_opts,
      bench_opts;

  auto* gen = app.add_subcommand("gen-data", "synthesize the labeled event dataset");
  add_common(gen, gen_opts);

  auto* train_teacher = app.add_subcommand("train-teacher", "train the frame-based teacher");
  add_common(train_teacher, teacher_opts);

  auto* train_student =
      app.add_subcommand("train-student", "train the event-graph student (optionally with CRD)");
  add_common(train_student, student_opts);

  std::string weights_dir, manifest_path, report_path, out_csv, axis = "edal";
  std::vector<double> time_spans;

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a trained student");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--weights", weights_dir, "seed directory with weights + model card")
      ->required();
  evaluate->add_option("--manifest", manifest_path, "manifest to evaluate")->required();
  evaluate->add_option("--time-span", time_spans,
                       "evaluate on the first fraction of each stream (repeatable)");
  evaluate->add_option("--report", report_path, "write the JSON report here");

  auto* exporter = app.add_subcommand("export-embeddings", "dump per-sample head features");
  add_common(exporter, export_opts);
  exporter->add_option("--weights", weights_dir, "seed directory with weights")->required();
  exporter->add_option("--manifest", manifest_path, "manifest to embed")->required();
  exporter->add_option("--out-csv", out_csv, "output CSV path")->required();

  auto* grid = app.add_subcommand("ablation-grid", "run an ablation axis end to end");
  add_common(grid, grid_opts);
  grid->add_option("--axis", axis, "edal | distill")->required();

  auto* bench = app.add_subcommand("benchmark", "median single-sample inference latency");
  add_common(bench, bench_opts);
  bench->add_option("--weights", weights_dir, "seed directory with weights")->required();
  bench->add_option("--manifest", manifest_path, "manifest of samples to time")->required();
  bench->add_option("--report", report_path, "write the JSON report here");

  CLI11_PARSE(app, argc, argv);

  ConfigPtr cfg;
  evg_status s = EVG_OK;
  char* out = nullptr;

  if (gen->parsed()) {
    if ((s = make_config(gen_opts, cfg)) != EVG_OK) return fail(s);
    if ((s = evg_gen_data(cfg.get(), &out)) != EVG_OK) return fail(s);
    StringPtr dir(out);
    std::printf("%s\n", dir.get());
  } else if (train_teacher->parsed()) {
    if ((s = make_config(teacher_opts, cfg)) != EVG_OK) return fail(s);
    if ((s = evg_train_teacher(cfg.get(), &out)) != EVG_OK) return fail(s);
    StringPtr dir(out);
    std::printf("%s\n", dir.get());
  } else if (train_student->parsed()) {
    if ((s = make_config(student_opts, cfg)) != EVG_OK) return fail(s);
    if ((s = evg_train_student(cfg.get(), &out)) != EVG_OK) return fail(s);
    StringPtr dir(out);
    std::printf("%s\n", dir.get());
  } else if (evaluate->parsed()) {
    if ((s = make_config(eval_opts, cfg)) != EVG_OK) return fail(s);
    if ((s = evg_evaluate(cfg.get(), weights_dir.c_str(), manifest_path.c_str(),
                          time_spans.data(), time_spans.size(),
                          report_path.empty() ? nullptr : report_path.c_str(), &out)) != EVG_OK)
      return fail(s);
    StringPtr report(out);
    std::printf("%s\n", report.get());
  } else if (exporter->parsed()) {
    if ((s = make_config(export_opts, cfg)) != EVG_OK) return fail(s);
    if ((s = evg_export_embeddings(cfg.get(), weights_dir.c_str(), manifest_path.c_str(),
                                   out_csv.c_str())) != EVG_OK)
      return fail(s);
    std::printf("%s\n", out_csv.c_str());
  } else if (grid->parsed()) {
    if ((s = make_config(grid_opts, cfg)) != EVG_OK) return fail(s);
    if ((s = evg_ablation_grid(cfg.get(), axis.c_str(), &out)) != EVG_OK) return fail(s);
    StringPtr dir(out);
    std::printf("%s\n", dir.get());
  } else if (bench->parsed()) {
    if ((s = make_config(bench_opts, cfg)) != EVG_OK) return fail(s);
    if ((s = evg_benchmark(cfg.get(), weights_dir.c_str(), manifest_path.c_str(),
                           report_path.empty() ? nullptr : report_path.c_str(), &out)) != EVG_OK)
      return fail(s);
    StringPtr report(out);
    std::printf("%s\n", report.get());
  }
  return 0;
}
