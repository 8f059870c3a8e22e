#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "evgraph/error.hpp"
#include "evgraph/harness.hpp"

namespace evg::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string out_root(const RunConfig& cfg) {
  if (const char* env = std::getenv("EVG_RUN_ROOT"); env && *env) return env;
  return cfg.run.out_root;
}

std::string run_dir_for(const RunConfig& cfg, const std::string& command) {
  const std::string stem = cfg.run.name.empty() ? command : cfg.run.name;
  return (fs::path(out_root(cfg)) / (stem + "-" + config_hash(cfg.resolved))).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) raise(ErrorCode::Io, "cannot open for writing: " + path);
  f << text;
  if (!f) raise(ErrorCode::Io, "write failed: " + path);
}

void write_resolved_config(const RunConfig& cfg, const std::string& dir) {
  write_text((fs::path(dir) / "resolved_config.json").string(), cfg.resolved.dump(2) + "\n");
}

std::string fmt(double x, const char* spec = "%.17g") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, x);
  return buf;
}

// Labeled representations of one manifest, built once and shared read-only
// across seed workers.
struct DataCache {
  std::vector<events::EventStream> streams;
  std::vector<repr::VoxelGraph> graphs;
  std::vector<repr::DenseVoxelGrid> grids;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::vector<GraphSample> graph_samples(bool with_grids) const {
    std::vector<GraphSample> out;
    out.reserve(labels.size());
    for (size_t i = 0; i < labels.size(); ++i)
      out.push_back({&graphs[i], with_grids ? &grids[i] : nullptr, labels[i]});
    return out;
  }
  std::vector<GridSample> grid_samples() const {
    std::vector<GridSample> out;
    out.reserve(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) out.push_back({&grids[i], labels[i]});
    return out;
  }
};

DataCache load_cache(const std::string& manifest_path, const RunConfig& cfg, bool want_graphs,
                     bool want_grids) {
  const auto manifest = events::read_manifest(manifest_path);
  if (manifest.entries.empty())
    raise(ErrorCode::Config, "manifest is empty: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  DataCache cache;
  cache.class_names = manifest.class_names;
  for (const auto& e : manifest.entries) {
    const fs::path p = fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path;
    cache.streams.push_back(events::read_events(p.string()));
    cache.labels.push_back(e.label);
  }
  if (want_graphs)
    for (const auto& s : cache.streams) cache.graphs.push_back(repr::voxelize(s, cfg.voxel));
  if (want_grids)
    for (const auto& s : cache.streams)
      cache.grids.push_back(repr::build_voxel_grid(s, cfg.grid_bins, cfg.grid_height,
                                                   cfg.grid_width));
  return cache;
}

json student_card(const edgcn::EdgcnConfig& c) {
  json layers = json::array();
  for (const auto& l : c.layers)
    layers.push_back({{"d_in_u", l.d_in_u},
                      {"d_in_f", l.d_in_f},
                      {"d_out_f", l.d_out_f},
                      {"n_neighbors", l.n_neighbors}});
  return {{"type", "edgcn"},
          {"layers", layers},
          {"input_width", c.input_width},
          {"num_classes", c.num_classes},
          {"head_width", c.head_width},
          {"hidden_mult", c.hidden_mult},
          {"variant", edgcn::variant_name(c.variant)},
          {"rel_relative", c.rel_relative},
          {"seed", c.seed}};
}

json teacher_card(const teacher::TeacherConfig& c) {
  return {{"type", "teacher"},     {"channels", c.channels},
          {"blocks_per_stage", c.blocks_per_stage}, {"taps", c.taps},
          {"num_classes", c.num_classes},           {"bins", c.bins},
          {"seed", c.seed}};
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::Io, "cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& ex) {
    raise(ErrorCode::Format, path + ": " + ex.what());
  }
  return j;
}

edgcn::EdgcnConfig student_config_from_card(const json& card) {
  if (card.value("type", "") != "edgcn")
    raise(ErrorCode::Config, "model card is not an edgcn card");
  edgcn::EdgcnConfig c;
  c.layers.clear();
  for (const auto& l : card.at("layers"))
    c.layers.push_back({l.at("d_in_u").get<int>(), l.at("d_in_f").get<int>(),
                        l.at("d_out_f").get<int>(), l.at("n_neighbors").get<int>()});
  c.input_width = card.at("input_width").get<int>();
  c.num_classes = card.at("num_classes").get<int>();
  c.head_width = card.at("head_width").get<int>();
  c.hidden_mult = card.at("hidden_mult").get<int>();
  c.variant = edgcn::variant_from_string(card.at("variant").get<std::string>());
  c.rel_relative = card.at("rel_relative").get<bool>();
  c.seed = card.at("seed").get<std::uint64_t>();
  return c;
}

teacher::TeacherConfig teacher_config_from_card(const json& card) {
  if (card.value("type", "") != "teacher")
    raise(ErrorCode::Config, "model card is not a teacher card");
  teacher::TeacherConfig c;
  c.channels = card.at("channels").get<std::vector<int>>();
  c.blocks_per_stage = card.at("blocks_per_stage").get<int>();
  c.taps = card.at("taps").get<int>();
  c.num_classes = card.at("num_classes").get<int>();
  c.bins = card.at("bins").get<int>();
  c.seed = card.at("seed").get<std::uint64_t>();
  return c;
}

template <typename T>
edgcn::Edgcn<T> load_student(const std::string& dir) {
  const auto card = read_json_file((fs::path(dir) / "model_card.json").string());
  edgcn::Edgcn<T> model(student_config_from_card(card));
  diff::load_weights(model.params(), (fs::path(dir) / "weights.bin").string(),
                     (fs::path(dir) / "weights.json").string());
  return model;
}

template <typename T>
teacher::Teacher<T> load_teacher(const std::string& dir) {
  const auto card = read_json_file((fs::path(dir) / "model_card.json").string());
  teacher::Teacher<T> model(teacher_config_from_card(card));
  diff::load_weights(model.params(), (fs::path(dir) / "weights.bin").string(),
                     (fs::path(dir) / "weights.json").string());
  return model;
}

template <typename T>
void save_model(const diff::ParamStore<T>& params, const json& card, const std::string& dir) {
  fs::create_directories(dir);
  diff::save_weights(params, (fs::path(dir) / "weights.bin").string(),
                     (fs::path(dir) / "weights.json").string());
  write_text((fs::path(dir) / "model_card.json").string(), card.dump(2) + "\n");
}

void write_aggregate(const std::string& run_dir, const std::vector<std::uint64_t>& seeds,
                     const std::vector<TrainResult>& results) {
  std::string csv = "seed,best_accuracy,final_accuracy,best_epoch\n";
  double mean_best = 0, mean_final = 0;
  for (size_t i = 0; i < seeds.size(); ++i) {
    csv += std::to_string(seeds[i]) + "," + fmt(results[i].best_accuracy) + "," +
           fmt(results[i].final_accuracy) + "," + std::to_string(results[i].best_epoch) + "\n";
    mean_best += results[i].best_accuracy;
    mean_final += results[i].final_accuracy;
  }
  const auto n = static_cast<double>(seeds.size());
  mean_best /= n;
  mean_final /= n;
  double var = 0;
  for (const auto& r : results) var += (r.best_accuracy - mean_best) * (r.best_accuracy - mean_best);
  const double std_best = seeds.size() > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  csv += "mean," + fmt(mean_best) + "," + fmt(mean_final) + ",\n";
  csv += "std," + fmt(std_best) + ",,\n";
  write_text((fs::path(run_dir) / "aggregate.csv").string(), csv);
}

// Runs fn(seed_index) on a small worker pool; deterministic per index.
void parallel_seeds(int num_seeds, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min(jobs, num_seeds));
  if (jobs == 1) {
    for (int i = 0; i < num_seeds; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < num_seeds; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::string cmd_gen_data(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.classes.empty()) raise(ErrorCode::Config, "gen-data: dataset.classes is empty");
  if (d.samples_per_class < 2)
    raise(ErrorCode::Config, "gen-data: samples_per_class must be >= 2");
  fs::create_directories(d.root);

  events::DatasetManifest all;
  all.split = "all";
  for (const auto& c : d.classes) all.class_names.push_back(c.name);

  for (size_t ci = 0; ci < d.classes.size(); ++ci) {
    const ClassSpec& c = d.classes[ci];
    for (int i = 0; i < d.samples_per_class; ++i) {
      const std::uint64_t sample_seed = mix_seed(d.seed, ci * 100003ULL + i);
      Rng jitter(mix_seed(sample_seed, 0x6a697474ULL));
      events::PatternSpec spec;
      spec.kind = c.kind;
      const double scale = 1.0 + d.speed_jitter * (2.0 * jitter.uniform() - 1.0);
      spec.velocity_x = c.velocity_x * scale;
      spec.velocity_y = c.velocity_y * scale;
      spec.duration_ms = d.duration_ms;
      spec.event_rate = c.event_rate.value_or(d.event_rate);
      spec.noise_rate = c.noise_rate.value_or(d.noise_rate);
      spec.stall_begin = c.stall_begin;
      spec.stall_end = c.stall_end;
      spec.start_fraction = jitter.uniform(0.1, 0.9);
      spec.seed = sample_seed;
      const auto stream = events::generate_pattern(spec, d.sensor_width, d.sensor_height);
      char name[128];
      std::snprintf(name, sizeof(name), "%s_%04d.evg", c.name.c_str(), i);
      events::write_events(stream, (fs::path(d.root) / name).string());
      all.entries.push_back({name, static_cast<int>(ci)});
    }
  }

  events::write_manifest(all, (fs::path(d.root) / "manifest_all.jsonl").string());
  auto [train, test] = events::split_manifest(all, d.train_fraction, d.seed);
  events::write_manifest(train, (fs::path(d.root) / "manifest_train.jsonl").string());
  events::write_manifest(test, (fs::path(d.root) / "manifest_test.jsonl").string());
  return d.root;
}

namespace {

template <typename T>
void train_teacher_all_seeds(const RunConfig& cfg, const std::string& dir,
                             const DataCache& train_cache, const DataCache& test_cache) {
  const auto train = train_cache.grid_samples();
  const auto test = test_cache.grid_samples();
  const int num_seeds = cfg.run.num_seeds;
  std::vector<std::uint64_t> seeds(num_seeds);
  std::vector<TrainResult> results(num_seeds);

  parallel_seeds(num_seeds, cfg.run.jobs, [&](int i) {
    const std::uint64_t seed = cfg.run.seed + i;
    seeds[i] = seed;
    teacher::TeacherConfig tc = cfg.teacher;
    tc.num_classes = static_cast<int>(train_cache.class_names.size());
    tc.seed = seed;
    teacher::Teacher<T> model(tc);
    if (!cfg.teacher_init_weights.empty())
      diff::load_weights(model.params(),
                         (fs::path(cfg.teacher_init_weights) / "weights.bin").string(),
                         (fs::path(cfg.teacher_init_weights) / "weights.json").string());
    teacher::TeacherTrainSettings settings{cfg.epochs, cfg.batch_size, cfg.adam, seed};
    results[i] = teacher::train_teacher(model, train, test, settings);

    const std::string seed_dir = (fs::path(dir) / ("seed_" + std::to_string(seed))).string();
    save_model(model.params(), teacher_card(tc), seed_dir);
    write_metrics_csv((fs::path(seed_dir) / "metrics.csv").string(), results[i].metrics,
                      tc.taps);
    json summary{{"best_accuracy", results[i].best_accuracy},
                 {"final_accuracy", results[i].final_accuracy},
                 {"best_epoch", results[i].best_epoch},
                 {"seed", seed}};
    write_text((fs::path(seed_dir) / "summary.json").string(), summary.dump(2) + "\n");
  });
  write_aggregate(dir, seeds, results);
}

template <typename T>
void train_student_all_seeds(const RunConfig& cfg, const std::string& dir,
                             const DataCache& train_cache, const DataCache& test_cache) {
  const bool distill_on = cfg.distill.enabled;
  std::optional<teacher::Teacher<T>> frozen;
  if (distill_on) {
    if (cfg.teacher_weights.empty())
      raise(ErrorCode::Config,
            "train-student: distillation enabled but teacher.weights is not set");
    frozen.emplace(load_teacher<T>(cfg.teacher_weights));
    if (frozen->config().bins != cfg.grid_bins)
      raise(ErrorCode::Config, "train-student: teacher bins disagree with representation.grid");
    if (frozen->config().num_classes != static_cast<int>(train_cache.class_names.size()))
      raise(ErrorCode::Config, "train-student: teacher/student class counts differ");
  }
  const auto train = train_cache.graph_samples(distill_on);
  const auto test = test_cache.graph_samples(distill_on);

  const int num_seeds = cfg.run.num_seeds;
  std::vector<std::uint64_t> seeds(num_seeds);
  std::vector<TrainResult> results(num_seeds);
  const auto teacher_snapshot =
      distill_on ? diff::snapshot_params(frozen->params()) : std::vector<Mat<T>>{};

  parallel_seeds(num_seeds, cfg.run.jobs, [&](int i) {
    const std::uint64_t seed = cfg.run.seed + i;
    seeds[i] = seed;
    edgcn::EdgcnConfig sc = cfg.student;
    sc.num_classes = static_cast<int>(train_cache.class_names.size());
    sc.seed = seed;
    edgcn::Edgcn<T> model(sc);
    distill::StudentTrainSettings settings{cfg.epochs, cfg.batch_size, cfg.sgd, seed};
    results[i] =
        distill::train_student(model, distill_on ? &*frozen : nullptr, train, test,
                               cfg.distill, settings);

    const std::string seed_dir = (fs::path(dir) / ("seed_" + std::to_string(seed))).string();
    save_model(model.params(), student_card(sc), seed_dir);
    write_metrics_csv((fs::path(seed_dir) / "metrics.csv").string(), results[i].metrics,
                      distill_on ? std::min({cfg.distill.taps,
                                             static_cast<int>(sc.layers.size()),
                                             frozen->config().taps})
                                 : 0);
    json summary{{"best_accuracy", results[i].best_accuracy},
                 {"final_accuracy", results[i].final_accuracy},
                 {"best_epoch", results[i].best_epoch},
                 {"seed", seed}};
    write_text((fs::path(seed_dir) / "summary.json").string(), summary.dump(2) + "\n");
  });

  // Freezing contract: the teacher must come out bit-identical.
  if (distill_on) {
    size_t k = 0;
    for (const auto& p : frozen->params())
      if (!(p.value.v == teacher_snapshot[k++].v))
        raise(ErrorCode::Internal, "teacher parameters changed during student training");
  }
  write_aggregate(dir, seeds, results);
}

}  // namespace

std::string cmd_train_teacher(const RunConfig& cfg) {
  const std::string dir = run_dir_for(cfg, "teacher");
  fs::create_directories(dir);
  write_resolved_config(cfg, dir);
  const auto train_cache = load_cache(
      (fs::path(cfg.dataset.root) / "manifest_train.jsonl").string(), cfg, false, true);
  const auto test_cache = load_cache(
      (fs::path(cfg.dataset.root) / "manifest_test.jsonl").string(), cfg, false, true);
  if (cfg.run.precision == Precision::F32)
    train_teacher_all_seeds<float>(cfg, dir, train_cache, test_cache);
  else
    train_teacher_all_seeds<double>(cfg, dir, train_cache, test_cache);
  return dir;
}

namespace {

std::string train_student_to_dir(const RunConfig& cfg, const std::string& dir) {
  // Configuration errors (missing teacher) must fire before any training work.
  if (cfg.distill.enabled && cfg.teacher_weights.empty())
    raise(ErrorCode::Config,
          "train-student: distillation enabled but teacher.weights is not set");
  fs::create_directories(dir);
  write_resolved_config(cfg, dir);
  const bool need_grids = cfg.distill.enabled;
  const auto train_cache = load_cache(
      (fs::path(cfg.dataset.root) / "manifest_train.jsonl").string(), cfg, true, need_grids);
  const auto test_cache = load_cache(
      (fs::path(cfg.dataset.root) / "manifest_test.jsonl").string(), cfg, true, need_grids);
  if (cfg.run.precision == Precision::F32)
    train_student_all_seeds<float>(cfg, dir, train_cache, test_cache);
  else
    train_student_all_seeds<double>(cfg, dir, train_cache, test_cache);
  return dir;
}

}  // namespace

std::string cmd_train_student(const RunConfig& cfg) {
  return train_student_to_dir(cfg, run_dir_for(cfg, "student"));
}

namespace {

template <typename T>
EvalReport evaluate_impl(const RunConfig& cfg, const std::string& weights_dir,
                         const std::string& manifest_path, std::vector<double> time_spans,
                         bool measure_latency) {
  edgcn::Edgcn<T> model = load_student<T>(weights_dir);
  const auto cache = load_cache(manifest_path, cfg, false, false);
  if (model.config().num_classes != static_cast<int>(cache.class_names.size()))
    raise(ErrorCode::Config, "evaluate: model/manifest class counts differ");

  EvalReport report;
  report.parameter_count = model.param_count();

  auto eval_at = [&](double span) {
    int correct = 0;
    std::vector<int> hits(cache.class_names.size(), 0), totals(cache.class_names.size(), 0);
    double task = 0;
    for (size_t i = 0; i < cache.streams.size(); ++i) {
      events::EventStream s = cache.streams[i];
      if (span < 1.0) {
        const auto cutoff =
            static_cast<std::uint64_t>(span * static_cast<double>(s.duration));
        s.events.erase(std::upper_bound(s.events.begin(), s.events.end(), cutoff,
                                        [](std::uint64_t t, const events::Event& e) {
                                          return t < e.t;
                                        }),
                       s.events.end());
        s.duration = s.max_t();
      }
      ++totals[cache.labels[i]];
      if (s.events.empty()) continue;  // an empty clip counts as a miss
      const auto graph = repr::voxelize(s, cfg.voxel);
      if (graph.num_vertices() < 2) continue;
      const auto out = model.forward(graph);
      const auto ce = distill::cross_entropy(out.logits, cache.labels[i]);
      task += ce.value / cache.streams.size();
      const int pred = static_cast<int>(
          std::max_element(out.logits.begin(), out.logits.end()) - out.logits.begin());
      if (pred == cache.labels[i]) {
        ++correct;
        ++hits[cache.labels[i]];
      }
    }
    const double acc = static_cast<double>(correct) / cache.streams.size();
    return std::tuple{acc, hits, totals, task};
  };

  for (double span : time_spans) {
    auto [acc, hits, totals, task] = eval_at(span);
    report.time_span_accuracy.emplace_back(span, acc);
    if (span == 1.0) {
      report.accuracy = acc;
      report.loss_task_mean = task;
      for (size_t c = 0; c < hits.size(); ++c)
        report.per_class.push_back(totals[c] > 0 ? double(hits[c]) / totals[c] : 0.0);
    }
  }

  if (measure_latency) {
    std::vector<double> times;
    const int reps = std::max<int>(100, static_cast<int>(cache.streams.size()));
    for (int r = 0; r < reps; ++r) {
      const auto& s = cache.streams[r % cache.streams.size()];
      const auto t0 = std::chrono::steady_clock::now();
      const auto graph = repr::voxelize(s, cfg.voxel);
      volatile T sink = model.forward(graph).logits[0];
      (void)sink;
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    report.latency_ms = times[times.size() / 2];
  }
  return report;
}

json report_to_json(const EvalReport& r) {
  json spans = json::array();
  for (const auto& [f, a] : r.time_span_accuracy)
    spans.push_back({{"time_span", f}, {"accuracy", a}});
  return {{"accuracy", r.accuracy},
          {"per_class_accuracy", r.per_class},
          {"loss_task_mean", r.loss_task_mean},
          {"parameter_count", r.parameter_count},
          {"latency_ms_median", r.latency_ms},
          {"time_spans", spans}};
}

}  // namespace

EvalReport cmd_evaluate(const RunConfig& cfg, const std::string& weights_dir,
                        const std::string& manifest_path, std::vector<double> time_spans,
                        const std::string& report_path) {
  for (double f : time_spans)
    if (!(f > 0.0 && f <= 1.0))
      raise(ErrorCode::InvalidArgument, "evaluate: time spans must lie in (0, 1]");
  if (time_spans.empty()) time_spans = {1.0};
  if (std::find(time_spans.begin(), time_spans.end(), 1.0) == time_spans.end())
    time_spans.push_back(1.0);
  std::sort(time_spans.begin(), time_spans.end());

  EvalReport report =
      cfg.run.precision == Precision::F32
          ? evaluate_impl<float>(cfg, weights_dir, manifest_path, time_spans, true)
          : evaluate_impl<double>(cfg, weights_dir, manifest_path, time_spans, true);
  if (!report_path.empty()) write_text(report_path, report_to_json(report).dump(2) + "\n");
  return report;
}

namespace {

template <typename T>
void export_embeddings_impl(const RunConfig& cfg, const std::string& weights_dir,
                            const std::string& manifest_path, const std::string& out_csv) {
  edgcn::Edgcn<T> model = load_student<T>(weights_dir);
  const auto cache = load_cache(manifest_path, cfg, true, false);
  std::string csv = "label";
  for (int i = 0; i < model.config().head_width; ++i) csv += ",f_" + std::to_string(i);
  csv += "\n";
  for (size_t i = 0; i < cache.graphs.size(); ++i) {
    const auto out = model.forward(cache.graphs[i]);
    csv += std::to_string(cache.labels[i]);
    for (const T x : out.head_feature) csv += "," + fmt(static_cast<double>(x), "%.9g");
    csv += "\n";
  }
  write_text(out_csv, csv);
}

}  // namespace

std::string cmd_export_embeddings(const RunConfig& cfg, const std::string& weights_dir,
                                  const std::string& manifest_path, const std::string& out_csv) {
  if (cfg.run.precision == Precision::F32)
    export_embeddings_impl<float>(cfg, weights_dir, manifest_path, out_csv);
  else
    export_embeddings_impl<double>(cfg, weights_dir, manifest_path, out_csv);
  return out_csv;
}

EvalReport cmd_benchmark(const RunConfig& cfg, const std::string& weights_dir,
                         const std::string& manifest_path, const std::string& report_path) {
  EvalReport report = cfg.run.precision == Precision::F32
                          ? evaluate_impl<float>(cfg, weights_dir, manifest_path, {1.0}, true)
                          : evaluate_impl<double>(cfg, weights_dir, manifest_path, {1.0}, true);
  if (!report_path.empty()) write_text(report_path, report_to_json(report).dump(2) + "\n");
  return report;
}

std::string cmd_ablation_grid(const RunConfig& cfg, const std::string& axis) {
  if (axis != "edal" && axis != "distill")
    raise(ErrorCode::InvalidArgument, "ablation axis must be 'edal' or 'distill'");
  const std::string dir = run_dir_for(cfg, "grid-" + axis);
  fs::create_directories(dir);
  write_resolved_config(cfg, dir);

  struct Cell {
    std::string label;
    RunConfig cfg;
  };
  std::vector<Cell> cells;
  if (axis == "edal") {
    for (const char* v : {"A", "B", "C", "D", "E"}) {
      RunConfig c = cfg;
      c.distill.enabled = false;
      c.student.variant = edgcn::variant_from_string(v);
      c.resolved["student"]["variant"] = v;
      c.resolved["distill"]["enabled"] = false;
      cells.push_back({std::string("edal_") + v, std::move(c)});
    }
  } else {
    {
      RunConfig c = cfg;
      c.distill.enabled = false;
      c.resolved["distill"]["enabled"] = false;
      cells.push_back({"none", std::move(c)});
    }
    {
      RunConfig c = cfg;
      c.distill.enabled = true;
      c.distill.taps = 0;
      c.resolved["distill"]["enabled"] = true;
      c.resolved["distill"]["taps"] = 0;
      cells.push_back({"inf_only", std::move(c)});
    }
    for (const char* v : {"A", "B", "C", "D"}) {
      RunConfig c = cfg;
      c.distill.enabled = true;
      c.distill.variant = distill::distill_variant_from_string(v);
      c.resolved["distill"]["enabled"] = true;
      c.resolved["distill"]["variant"] = v;
      cells.push_back({std::string("feat_") + v, std::move(c)});
    }
  }

  std::string csv = "cell,mean_best_accuracy,std_best_accuracy,seeds\n";
  std::string md = "| cell | best accuracy (mean +/- std over seeds) |\n|---|---|\n";
  for (auto& cell : cells) {
    const std::string cell_dir = (fs::path(dir) / cell.label).string();
    train_student_to_dir(cell.cfg, cell_dir);
    const SeedAggregate agg = read_aggregate(cell_dir);
    csv += cell.label + "," + fmt(agg.mean_best) + "," + fmt(agg.std_best) + "," +
           std::to_string(agg.seeds.size()) + "\n";
    md += "| " + cell.label + " | " + fmt(agg.mean_best, "%.4f") + " +/- " +
          fmt(agg.std_best, "%.4f") + " |\n";
  }
  write_text((fs::path(dir) / "grid.csv").string(), csv);
  write_text((fs::path(dir) / "grid.md").string(), md);
  return dir;
}

SeedAggregate read_aggregate(const std::string& run_dir) {
  std::ifstream f((fs::path(run_dir) / "aggregate.csv").string());
  if (!f) raise(ErrorCode::Io, "cannot open aggregate.csv under " + run_dir);
  SeedAggregate agg;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string col;
    std::getline(ss, col, ',');
    if (col == "mean") {
      std::getline(ss, col, ',');
      agg.mean_best = std::stod(col);
    } else if (col == "std") {
      std::getline(ss, col, ',');
      agg.std_best = std::stod(col);
    } else {
      agg.seeds.push_back(std::stoull(col));
      std::getline(ss, col, ',');
      agg.best_accuracy.push_back(std::stod(col));
      std::getline(ss, col, ',');
      agg.final_accuracy.push_back(std::stod(col));
    }
  }
  return agg;
}

}  // namespace evg::harness
