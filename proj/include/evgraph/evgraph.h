/* C interface to the event-graph learning library. All functions return an
 * evg_status; on failure evg_last_error() carries a thread-local message.
 * Strings returned through out-parameters are heap copies owned by the
 * caller; release them with evg_string_free. */
#ifndef EVGRAPH_H
#define EVGRAPH_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum evg_status {
  EVG_OK = 0,
  EVG_ERR_INVALID_ARGUMENT = 1,
  EVG_ERR_FORMAT = 2,
  EVG_ERR_IO = 3,
  EVG_ERR_SHAPE = 4,
  EVG_ERR_CONFIG = 5,
  EVG_ERR_NUMERIC = 6,
  EVG_ERR_DEGENERATE_INPUT = 7,
  EVG_ERR_DETERMINISM = 8,
  EVG_ERR_INTERNAL = 9
} evg_status;

/* Opaque run configuration (JSON-backed; see README for the schema). */
typedef struct evg_config evg_config;

const char* evg_last_error(void);
const char* evg_status_name(evg_status status);

/* Built-in defaults. */
evg_status evg_config_create(evg_config** out);
evg_status evg_config_load(const char* path, evg_config** out);
evg_status evg_config_from_json(const char* json_text, evg_config** out);
/* Dotted-key override, e.g. "optimizer.epochs=10" or "run.precision=f64". */
evg_status evg_config_set(evg_config* cfg, const char* dotted_assignment);
/* Resolved configuration (defaults merged with file and overrides) as JSON. */
evg_status evg_config_dump(const evg_config* cfg, char** json_out);
void evg_config_free(evg_config* cfg);
void evg_string_free(char* s);

/* Synthesizes the labeled event dataset described by the config and writes
 * event files plus train/test manifests under dataset.root. */
evg_status evg_gen_data(const evg_config* cfg, char** dataset_dir_out);

/* Trains the frame-based teacher (run.num_seeds independent runs); returns
 * the run directory containing seed_<s>/ subdirectories and aggregate.csv. */
evg_status evg_train_teacher(const evg_config* cfg, char** run_dir_out);

/* Trains the event-graph student, optionally under cross-representation
 * distillation (distill.enabled with teacher.weights pointing at a trained
 * teacher seed directory). */
evg_status evg_train_student(const evg_config* cfg, char** run_dir_out);

/* Evaluates a trained student on a manifest. time_spans entries in (0, 1]
 * clip each stream to its first fraction before evaluation; 1.0 is always
 * included. Writes the JSON report to report_path when non-NULL and returns
 * it through report_json_out when non-NULL. */
evg_status evg_evaluate(const evg_config* cfg, const char* weights_dir, const char* manifest,
                        const double* time_spans, size_t n_time_spans, const char* report_path,
                        char** report_json_out);

/* Writes one CSV row (label + head feature vector) per manifest sample. */
evg_status evg_export_embeddings(const evg_config* cfg, const char* weights_dir,
                                 const char* manifest, const char* out_csv);

/* axis is "edal" (aggregation variants A..E, trained solo) or "distill"
 * (none / inf_only / feature variants A..D). */
evg_status evg_ablation_grid(const evg_config* cfg, const char* axis, char** grid_dir_out);

/* Median single-sample inference latency (voxelization included). */
evg_status evg_benchmark(const evg_config* cfg, const char* weights_dir, const char* manifest,
                         const char* report_path, char** report_json_out);

#ifdef __cplusplus
}
#endif

#endif /* EVGRAPH_H */
