#ifndef DDM_DDM_H
#define DDM_DDM_H

/* C interface of the ddm library. Every call returns a ddm_status; on failure
 * ddm_last_error() holds a message for the calling thread. Handles are opaque
 * and must be released with the matching *_destroy function. */

#include <stddef.h>
#include <stdint.h>

#if defined(DDM_BUILDING_LIBRARY)
#define DDM_API __attribute__((visibility("default")))
#else
#define DDM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ddm_status {
  DDM_OK = 0,
  DDM_ERR_INVALID_ARGUMENT = 1,
  DDM_ERR_SHAPE = 2,
  DDM_ERR_IO = 3,
  DDM_ERR_FORMAT = 4,
  DDM_ERR_VERSION = 5,
  DDM_ERR_CHECKSUM = 6,
  DDM_ERR_CONFIG = 7,
  DDM_ERR_DIVERGED = 8,
  DDM_ERR_NUMERIC = 9,
  DDM_ERR_INTERNAL = 10
} ddm_status;

typedef struct ddm_config_t* ddm_config;
typedef struct ddm_dataset_t* ddm_dataset;
typedef struct ddm_net_t* ddm_net;
typedef struct ddm_report_t* ddm_report;

DDM_API const char* ddm_version(void);
DDM_API const char* ddm_status_name(ddm_status status);
/* Message of the last failed call on this thread; "" if none. */
DDM_API const char* ddm_last_error(void);
/* Stage name of the last failed stage call on this thread; "" if none. */
DDM_API const char* ddm_last_error_stage(void);

/* ---- configuration ---- */
DDM_API ddm_status ddm_config_create_default(ddm_config* out);
DDM_API ddm_status ddm_config_load(const char* path, ddm_config* out);
DDM_API ddm_status ddm_config_parse(const char* text, ddm_config* out);
/* Sets one key from its textual value, e.g. ("total_steps", "3000"). */
DDM_API ddm_status ddm_config_set(ddm_config cfg, const char* key, const char* value);
DDM_API ddm_status ddm_config_validate(ddm_config cfg);
DDM_API ddm_status ddm_config_hash(ddm_config cfg, uint64_t* out);
/* Output directory of the config (not part of the hash). Valid until the next set. */
DDM_API const char* ddm_config_out_dir(ddm_config cfg);
DDM_API void ddm_config_destroy(ddm_config cfg);

/* ---- datasets ---- */
DDM_API ddm_status ddm_dataset_load(const char* path, ddm_dataset* out);
DDM_API ddm_status ddm_dataset_size(ddm_dataset ds, size_t* out);
/* Writes min(capacity, K) per-cluster counts and stores K in *clusters. */
DDM_API ddm_status ddm_dataset_counts(ddm_dataset ds, int64_t* counts, size_t capacity, size_t* clusters);
/* Copies clip `index` (F*D values, frame-major) into `out`. */
DDM_API ddm_status ddm_dataset_clip(ddm_dataset ds, size_t index, double* out, size_t capacity, int* cluster);
DDM_API void ddm_dataset_destroy(ddm_dataset ds);

/* ---- networks ---- */
DDM_API ddm_status ddm_net_load(const char* path, ddm_net* out);
DDM_API ddm_status ddm_net_param_count(ddm_net net, size_t* out);
DDM_API ddm_status ddm_net_hash(ddm_net net, uint64_t* out);
/* Router softmax over `n` logits restricted to the top_k largest (ties to the lower index). */
DDM_API ddm_status ddm_route_weights(const double* logits, size_t n, int top_k, double* weights_out);
DDM_API void ddm_net_destroy(ddm_net net);

/* ---- stages; each writes its artifacts under the config's out_dir ---- */
DDM_API ddm_status ddm_gen_data(ddm_config cfg);
DDM_API ddm_status ddm_train_expert(ddm_config cfg, int cluster);
DDM_API ddm_status ddm_train_monolithic(ddm_config cfg);
DDM_API ddm_status ddm_train_router(ddm_config cfg);

typedef enum ddm_sample_arm {
  DDM_SAMPLE_ROUTED = 0,
  DDM_SAMPLE_SINGLE = 1,
  DDM_SAMPLE_SCHEDULE = 2,
  DDM_SAMPLE_MONOLITHIC = 3
} ddm_sample_arm;

/* Zero / negative fields fall back to the config values. */
typedef struct ddm_sample_options {
  ddm_sample_arm arm;
  int expert;
  int n_steps;
  double cfg_scale;
  int top_k;
  const int* schedule;
  size_t schedule_len;
} ddm_sample_options;

DDM_API void ddm_sample_options_init(ddm_sample_options* opts);
/* Writes the sample file; its path is copied into path_out (NUL-terminated, truncated to capacity). */
DDM_API ddm_status ddm_sample(ddm_config cfg, const ddm_sample_options* opts, char* path_out, size_t capacity);

DDM_API ddm_status ddm_compare(ddm_config cfg, ddm_report* out);
/* pair may be NULL for the induced high-noise / low-noise pair. */
DDM_API ddm_status ddm_ablate_switching(ddm_config cfg, const int* pair, int* preference, int* n_prompts);
DDM_API ddm_status ddm_probe_specialization(ddm_config cfg, int expert, double* gap, double* gap_se);
DDM_API ddm_status ddm_report_emit(const char* report_json_path, const char* out_dir);

/* ---- reports ---- */
DDM_API ddm_status ddm_report_load(const char* path, ddm_report* out);
/* metric: "frechet", "alignment", "alignment_se", "motion", "motion_se". */
DDM_API ddm_status ddm_report_metric(ddm_report report, const char* arm, const char* metric, double* out);
DDM_API ddm_status ddm_report_provenance_hash(ddm_report report, uint64_t* out);
DDM_API void ddm_report_destroy(ddm_report report);

#ifdef __cplusplus
}
#endif

#endif
