/* NILM toolkit C interface.
 *
 * Every function returns a nilm_status. On failure, nilm_last_error() holds a
 * message for the calling thread until its next call into the library.
 * Handles are opaque and released with their matching _free function.
 */
#ifndef NILM_NILM_H
#define NILM_NILM_H

#include <stddef.h>
#include <stdint.h>

#if defined(NILM_BUILDING_LIBRARY)
#define NILM_API __attribute__((visibility("default")))
#else
#define NILM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nilm_status {
  NILM_OK = 0,
  NILM_ERR_INVALID_INPUT = 1,
  NILM_ERR_PARSE = 2,
  NILM_ERR_FORMAT = 3,
  NILM_ERR_IO = 4,
  NILM_ERR_STATE = 5,
  NILM_ERR_PROTOCOL = 6,
  NILM_ERR_NOT_FOUND = 7,
  NILM_ERR_RUNTIME = 8
} nilm_status;

NILM_API const char* nilm_version(void);
NILM_API const char* nilm_last_error(void);
NILM_API const char* nilm_status_name(nilm_status status);

/* "trace", "debug", "info", "warn", "error", "off" */
NILM_API nilm_status nilm_set_log_level(const char* level);

/* ---- metrics ---- */

typedef struct nilm_confusion {
  uint64_t tp, tn, fp, fn;
} nilm_confusion;

typedef struct nilm_metric_values {
  double accuracy, recall, precision, f1;
} nilm_metric_values;

NILM_API nilm_status nilm_metrics_compute(const uint8_t* pred, const uint8_t* truth, size_t n,
                                          nilm_confusion* counts, nilm_metric_values* values);

/* ---- run manifests and offline commands ---- */

/* details_json may be NULL. */
NILM_API nilm_status nilm_write_manifest(const char* out_dir, const char* command, const char* details_json);

/* seed < 0 keeps the seed from the config. */
NILM_API nilm_status nilm_datagen(const char* config_path, const char* out_csv, int64_t seed, size_t* rows,
                                  size_t* corrupted);

/* model_kind is "gbdt" or "s2p"; config_path may be NULL. The model and the
 * metrics CSV are written under out_dir. average may be NULL. */
NILM_API nilm_status nilm_train(const char* model_kind, const char* data_csv, const char* config_path,
                                const char* out_dir, uint64_t seed, nilm_metric_values* average);

/* out_csv may be NULL. */
NILM_API nilm_status nilm_eval(const char* model_path, const char* data_csv, const char* out_csv,
                               nilm_metric_values* average);

/* ---- models ---- */

typedef struct nilm_gbdt nilm_gbdt;
typedef struct nilm_s2p nilm_s2p;

NILM_API nilm_status nilm_gbdt_load(const char* path, nilm_gbdt** out);
NILM_API size_t nilm_gbdt_window(const nilm_gbdt* model);
NILM_API size_t nilm_gbdt_target_count(const nilm_gbdt* model);
/* window holds window*2 values (active, reactive per step); probs receives
 * target_count values. */
NILM_API nilm_status nilm_gbdt_predict(const nilm_gbdt* model, const double* window, double* probs);
NILM_API void nilm_gbdt_free(nilm_gbdt* model);

NILM_API nilm_status nilm_s2p_load(const char* path, nilm_s2p** out);
NILM_API size_t nilm_s2p_window(const nilm_s2p* model);
NILM_API size_t nilm_s2p_target_count(const nilm_s2p* model);
/* windows holds batch*window*2 values; probs receives batch*target_count. */
NILM_API nilm_status nilm_s2p_predict(const nilm_s2p* model, const double* windows, size_t batch, double* probs);
NILM_API void nilm_s2p_free(nilm_s2p* model);

/* ---- long-running services ---- */

typedef struct nilm_service nilm_service;

/* listen is "host:port"; port 0 picks a free port. capacity 0 = default. */
NILM_API nilm_status nilm_broker_start(const char* listen, size_t default_capacity, nilm_service** out);
/* Config files are JSON documents mirroring the service configuration. */
NILM_API nilm_status nilm_worker_start(const char* config_path, nilm_service** out);
NILM_API nilm_status nilm_balancer_start(const char* config_path, nilm_service** out);
NILM_API uint16_t nilm_service_port(const nilm_service* service);
NILM_API nilm_status nilm_service_stop(nilm_service* service);
NILM_API void nilm_service_free(nilm_service* service);

typedef struct nilm_edge_stats {
  size_t input, rejected, published_samples, envelopes, local_results;
} nilm_edge_stats;

/* Runs until the input is exhausted or *stop_flag becomes nonzero
 * (stop_flag may be NULL). */
NILM_API nilm_status nilm_edge_agent_run(const char* config_path, const volatile int* stop_flag,
                                         nilm_edge_stats* stats);

/* ---- benchmarks and demo ---- */

/* profile_path may be NULL for the default profile; format is "csv" or
 * "markdown". */
NILM_API nilm_status nilm_bench_run(const char* profile_path, const char* target, const char* out_path,
                                    const char* format);
/* profile_path may be NULL; out_path (JSON) may be NULL. */
NILM_API nilm_status nilm_bench_saturate(const char* profile_path, const char* target, size_t start, size_t step,
                                         size_t max, const char* out_path, size_t* threshold);

typedef struct nilm_demo_summary {
  size_t live_samples, expected_windows, cloud_records, edge_records;
  int drained, ordered;
} nilm_demo_summary;

/* config_json may be NULL; executable is the CLI used for child processes. */
NILM_API nilm_status nilm_demo_run(const char* config_json, const char* out_dir, const char* executable,
                                   uint64_t seed, int run_bench, size_t workers, nilm_demo_summary* summary);

#ifdef __cplusplus
}
#endif

#endif
