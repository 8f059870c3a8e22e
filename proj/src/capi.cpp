#include "evgraph/evgraph.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include "evgraph/error.hpp"
#include "evgraph/harness.hpp"

using evg::ErrorCode;
using nlohmann::json;

struct evg_config {
  json user;  // pre-merge view; defaults are applied at command time
};

namespace {

thread_local std::string g_last_error;

evg_status status_from_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return EVG_ERR_INVALID_ARGUMENT;
    case ErrorCode::Format: return EVG_ERR_FORMAT;
    case ErrorCode::Io: return EVG_ERR_IO;
    case ErrorCode::Shape: return EVG_ERR_SHAPE;
    case ErrorCode::Config: return EVG_ERR_CONFIG;
    case ErrorCode::Numeric: return EVG_ERR_NUMERIC;
    case ErrorCode::DegenerateInput: return EVG_ERR_DEGENERATE_INPUT;
    case ErrorCode::Determinism: return EVG_ERR_DETERMINISM;
    case ErrorCode::Internal: return EVG_ERR_INTERNAL;
  }
  return EVG_ERR_INTERNAL;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
evg_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return EVG_OK;
  } catch (const evg::Error& e) {
    g_last_error = e.what();
    return status_from_code(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EVG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return EVG_ERR_INTERNAL;
  }
}

evg_status require(bool cond, const char* what) {
  if (cond) return EVG_OK;
  g_last_error = what;
  return EVG_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* evg_last_error(void) { return g_last_error.c_str(); }

const char* evg_status_name(evg_status status) {
  switch (status) {
    case EVG_OK: return "ok";
    case EVG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case EVG_ERR_FORMAT: return "format";
    case EVG_ERR_IO: return "io";
    case EVG_ERR_SHAPE: return "shape";
    case EVG_ERR_CONFIG: return "config";
    case EVG_ERR_NUMERIC: return "numeric";
    case EVG_ERR_DEGENERATE_INPUT: return "degenerate_input";
    case EVG_ERR_DETERMINISM: return "determinism";
    case EVG_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

evg_status evg_config_create(evg_config** out) {
  if (auto s = require(out != nullptr, "out must not be NULL")) return s;
  return guarded([&] { *out = new evg_config{json::object()}; });
}

evg_status evg_config_load(const char* path, evg_config** out) {
  if (auto s = require(path && out, "path and out must not be NULL")) return s;
  return guarded([&] {
    // Parse eagerly so malformed files fail here, not at command time.
    evg::harness::load_config(path);
    std::ifstream f(path);
    json user;
    f >> user;
    *out = new evg_config{std::move(user)};
  });
}

evg_status evg_config_from_json(const char* json_text, evg_config** out) {
  if (auto s = require(json_text && out, "json_text and out must not be NULL")) return s;
  return guarded([&] {
    json user;
    try {
      user = json::parse(json_text);
    } catch (const json::exception& e) {
      evg::raise(ErrorCode::Format, std::string("config json: ") + e.what());
    }
    evg::harness::config_from_json(user);  // validate
    *out = new evg_config{std::move(user)};
  });
}

evg_status evg_config_set(evg_config* cfg, const char* dotted_assignment) {
  if (auto s = require(cfg && dotted_assignment, "cfg and assignment must not be NULL"))
    return s;
  return guarded([&] {
    json trial = cfg->user;
    evg::harness::apply_override(trial, dotted_assignment);
    evg::harness::config_from_json(trial);  // reject bad values atomically
    cfg->user = std::move(trial);
  });
}

evg_status evg_config_dump(const evg_config* cfg, char** json_out) {
  if (auto s = require(cfg && json_out, "cfg and json_out must not be NULL")) return s;
  return guarded([&] {
    const auto parsed = evg::harness::config_from_json(cfg->user);
    *json_out = copy_string(parsed.resolved.dump(2));
  });
}

void evg_config_free(evg_config* cfg) { delete cfg; }

void evg_string_free(char* s) { std::free(s); }

evg_status evg_gen_data(const evg_config* cfg, char** dataset_dir_out) {
  if (auto s = require(cfg != nullptr, "cfg must not be NULL")) return s;
  return guarded([&] {
    const auto dir = evg::harness::cmd_gen_data(evg::harness::config_from_json(cfg->user));
    if (dataset_dir_out) *dataset_dir_out = copy_string(dir);
  });
}

evg_status evg_train_teacher(const evg_config* cfg, char** run_dir_out) {
  if (auto s = require(cfg != nullptr, "cfg must not be NULL")) return s;
  return guarded([&] {
    const auto dir = evg::harness::cmd_train_teacher(evg::harness::config_from_json(cfg->user));
    if (run_dir_out) *run_dir_out = copy_string(dir);
  });
}

evg_status evg_train_student(const evg_config* cfg, char** run_dir_out) {
  if (auto s = require(cfg != nullptr, "cfg must not be NULL")) return s;
  return guarded([&] {
    const auto dir = evg::harness::cmd_train_student(evg::harness::config_from_json(cfg->user));
    if (run_dir_out) *run_dir_out = copy_string(dir);
  });
}

evg_status evg_evaluate(const evg_config* cfg, const char* weights_dir, const char* manifest,
                        const double* time_spans, size_t n_time_spans, const char* report_path,
                        char** report_json_out) {
  if (auto s = require(cfg && weights_dir && manifest,
                       "cfg, weights_dir and manifest must not be NULL"))
    return s;
  return guarded([&] {
    std::vector<double> spans(time_spans, time_spans + n_time_spans);
    const auto report = evg::harness::cmd_evaluate(
        evg::harness::config_from_json(cfg->user), weights_dir, manifest, spans,
        report_path ? report_path : "");
    if (report_json_out) {
      json spans_json = json::array();
      for (const auto& [f, a] : report.time_span_accuracy)
        spans_json.push_back({{"time_span", f}, {"accuracy", a}});
      const json j{{"accuracy", report.accuracy},
                   {"per_class_accuracy", report.per_class},
                   {"loss_task_mean", report.loss_task_mean},
                   {"parameter_count", report.parameter_count},
                   {"latency_ms_median", report.latency_ms},
                   {"time_spans", spans_json}};
      *report_json_out = copy_string(j.dump(2));
    }
  });
}

evg_status evg_export_embeddings(const evg_config* cfg, const char* weights_dir,
                                 const char* manifest, const char* out_csv) {
  if (auto s = require(cfg && weights_dir && manifest && out_csv,
                       "cfg, weights_dir, manifest and out_csv must not be NULL"))
    return s;
  return guarded([&] {
    evg::harness::cmd_export_embeddings(evg::harness::config_from_json(cfg->user), weights_dir,
                                        manifest, out_csv);
  });
}

evg_status evg_ablation_grid(const evg_config* cfg, const char* axis, char** grid_dir_out) {
  if (auto s = require(cfg && axis, "cfg and axis must not be NULL")) return s;
  return guarded([&] {
    const auto dir =
        evg::harness::cmd_ablation_grid(evg::harness::config_from_json(cfg->user), axis);
    if (grid_dir_out) *grid_dir_out = copy_string(dir);
  });
}

evg_status evg_benchmark(const evg_config* cfg, const char* weights_dir, const char* manifest,
                         const char* report_path, char** report_json_out) {
  if (auto s = require(cfg && weights_dir && manifest,
                       "cfg, weights_dir and manifest must not be NULL"))
    return s;
  return guarded([&] {
    const auto report =
        evg::harness::cmd_benchmark(evg::harness::config_from_json(cfg->user), weights_dir,
                                    manifest, report_path ? report_path : "");
    if (report_json_out) {
      const json j{{"accuracy", report.accuracy},
                   {"parameter_count", report.parameter_count},
                   {"latency_ms_median", report.latency_ms}};
      *report_json_out = copy_string(j.dump(2));
    }
  });
}

}  // extern "C"
