#include "ddm/ddm.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "ddm/binary_io.hpp"
#include "ddm/config.hpp"
#include "ddm/datagen.hpp"
#include "ddm/error.hpp"
#include "ddm/harness.hpp"
#include "ddm/net.hpp"
#include "ddm/router.hpp"

struct ddm_config_t {
  ddm::ExperimentConfig cfg;
};
struct ddm_dataset_t {
  ddm::Dataset ds;
};
struct ddm_net_t {
  ddm::Checkpoint ckpt;
};
struct ddm_report_t {
  ddm::ComparisonReport report;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_stage;

ddm_status to_status(ddm::ErrorCode code) { return static_cast<ddm_status>(static_cast<int>(code)); }

template <class F>
ddm_status try_(F&& body) {
  g_last_error.clear();
  g_last_stage.clear();
  try {
    body();
    return DDM_OK;
  } catch (const ddm::StageError& e) {
    g_last_error = e.what();
    g_last_stage = e.stage();
    return to_status(e.code());
  } catch (const ddm::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DDM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DDM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return DDM_ERR_INTERNAL;
  }
}

void check_handle(const void* h, const char* what) {
  if (h == nullptr) ddm::fail(ddm::ErrorCode::InvalidArgument, std::string("null ") + what);
}

}  // namespace

extern "C" {

const char* ddm_version(void) { return "1.0.0"; }

const char* ddm_status_name(ddm_status status) {
  if (status == DDM_OK) return "ok";
  return ddm::error_code_name(static_cast<ddm::ErrorCode>(status));
}

const char* ddm_last_error(void) { return g_last_error.c_str(); }
const char* ddm_last_error_stage(void) { return g_last_stage.c_str(); }

ddm_status ddm_config_create_default(ddm_config* out) {
  return try_([&] {
    check_handle(out, "output pointer");
    *out = new ddm_config_t{};
  });
}

ddm_status ddm_config_load(const char* path, ddm_config* out) {
  return try_([&] {
    check_handle(path, "path");
    check_handle(out, "output pointer");
    *out = new ddm_config_t{ddm::load_config(path)};
  });
}

ddm_status ddm_config_parse(const char* text, ddm_config* out) {
  return try_([&] {
    check_handle(text, "text");
    check_handle(out, "output pointer");
    *out = new ddm_config_t{ddm::parse_config(text)};
  });
}

ddm_status ddm_config_set(ddm_config cfg, const char* key, const char* value) {
  return try_([&] {
    check_handle(cfg, "config");
    check_handle(key, "key");
    check_handle(value, "value");
    ddm::apply_setting(cfg->cfg, key, value);
  });
}

ddm_status ddm_config_validate(ddm_config cfg) {
  return try_([&] {
    check_handle(cfg, "config");
    cfg->cfg.validate();
  });
}

ddm_status ddm_config_hash(ddm_config cfg, uint64_t* out) {
  return try_([&] {
    check_handle(cfg, "config");
    check_handle(out, "output pointer");
    *out = cfg->cfg.hash();
  });
}

const char* ddm_config_out_dir(ddm_config cfg) { return cfg ? cfg->cfg.out_dir.c_str() : ""; }

void ddm_config_destroy(ddm_config cfg) { delete cfg; }

ddm_status ddm_dataset_load(const char* path, ddm_dataset* out) {
  return try_([&] {
    check_handle(path, "path");
    check_handle(out, "output pointer");
    *out = new ddm_dataset_t{ddm::load_dataset(path)};
  });
}

ddm_status ddm_dataset_size(ddm_dataset ds, size_t* out) {
  return try_([&] {
    check_handle(ds, "dataset");
    check_handle(out, "output pointer");
    *out = ds->ds.size();
  });
}

ddm_status ddm_dataset_counts(ddm_dataset ds, int64_t* counts, size_t capacity, size_t* clusters) {
  return try_([&] {
    check_handle(ds, "dataset");
    const auto& c = ds->ds.cluster_counts;
    if (clusters) *clusters = c.size();
    if (counts)
      for (size_t i = 0; i < c.size() && i < capacity; ++i) counts[i] = c[i];
  });
}

ddm_status ddm_dataset_clip(ddm_dataset ds, size_t index, double* out, size_t capacity, int* cluster) {
  return try_([&] {
    check_handle(ds, "dataset");
    ddm::require(index < ds->ds.size(), ddm::ErrorCode::InvalidArgument, "clip index out of range");
    const auto& item = ds->ds.items[index];
    ddm::require(out != nullptr && capacity >= item.clip.data().size(), ddm::ErrorCode::Shape,
                 "output buffer smaller than F*D");
    std::memcpy(out, item.clip.data().data(), item.clip.data().size() * sizeof(double));
    if (cluster) *cluster = item.cond.cluster;
  });
}

void ddm_dataset_destroy(ddm_dataset ds) { delete ds; }

ddm_status ddm_net_load(const char* path, ddm_net* out) {
  return try_([&] {
    check_handle(path, "path");
    check_handle(out, "output pointer");
    *out = new ddm_net_t{ddm::load_checkpoint(path)};
  });
}

ddm_status ddm_net_param_count(ddm_net net, size_t* out) {
  return try_([&] {
    check_handle(net, "net");
    check_handle(out, "output pointer");
    *out = static_cast<size_t>(net->ckpt.net.param_count());
  });
}

ddm_status ddm_net_hash(ddm_net net, uint64_t* out) {
  return try_([&] {
    check_handle(net, "net");
    check_handle(out, "output pointer");
    *out = ddm::params_hash(net->ckpt.net);
  });
}

ddm_status ddm_route_weights(const double* logits, size_t n, int top_k, double* weights_out) {
  return try_([&] {
    check_handle(logits, "logits");
    check_handle(weights_out, "output buffer");
    const auto w = ddm::route_weights(std::span<const double>(logits, n), top_k);
    std::memcpy(weights_out, w.weights.data(), n * sizeof(double));
  });
}

void ddm_net_destroy(ddm_net net) { delete net; }

ddm_status ddm_gen_data(ddm_config cfg) {
  return try_([&] {
    check_handle(cfg, "config");
    ddm::stage_gen_data(cfg->cfg, cfg->cfg.out_dir);
  });
}

ddm_status ddm_train_expert(ddm_config cfg, int cluster) {
  return try_([&] {
    check_handle(cfg, "config");
    ddm::stage_train_expert(cfg->cfg, cfg->cfg.out_dir, cluster);
  });
}

ddm_status ddm_train_monolithic(ddm_config cfg) {
  return try_([&] {
    check_handle(cfg, "config");
    ddm::stage_train_monolithic(cfg->cfg, cfg->cfg.out_dir);
  });
}

ddm_status ddm_train_router(ddm_config cfg) {
  return try_([&] {
    check_handle(cfg, "config");
    ddm::stage_train_router(cfg->cfg, cfg->cfg.out_dir);
  });
}

void ddm_sample_options_init(ddm_sample_options* opts) {
  if (opts) *opts = ddm_sample_options{DDM_SAMPLE_ROUTED, 0, 0, -1.0, 0, nullptr, 0};
}

ddm_status ddm_sample(ddm_config cfg, const ddm_sample_options* opts, char* path_out, size_t capacity) {
  return try_([&] {
    check_handle(cfg, "config");
    check_handle(opts, "options");
    ddm::SampleRequest req;
    switch (opts->arm) {
      case DDM_SAMPLE_ROUTED: req.arm = ddm::SampleArm::Routed; break;
      case DDM_SAMPLE_SINGLE: req.arm = ddm::SampleArm::Single; break;
      case DDM_SAMPLE_SCHEDULE: req.arm = ddm::SampleArm::Schedule; break;
      case DDM_SAMPLE_MONOLITHIC: req.arm = ddm::SampleArm::Monolithic; break;
      default: ddm::fail(ddm::ErrorCode::InvalidArgument, "unknown sample arm");
    }
    req.expert = opts->expert;
    if (opts->n_steps > 0) req.n_steps = opts->n_steps;
    if (opts->cfg_scale >= 0.0) req.cfg_scale = opts->cfg_scale;
    if (opts->top_k > 0) req.top_k = opts->top_k;
    if (opts->schedule) req.schedule.assign(opts->schedule, opts->schedule + opts->schedule_len);
    const std::string path = ddm::stage_sample(cfg->cfg, cfg->cfg.out_dir, req).string();
    if (path_out && capacity > 0) {
      const size_t n = std::min(capacity - 1, path.size());
      std::memcpy(path_out, path.data(), n);
      path_out[n] = '\0';
    }
  });
}

ddm_status ddm_compare(ddm_config cfg, ddm_report* out) {
  return try_([&] {
    check_handle(cfg, "config");
    auto report = ddm::run_comparison(cfg->cfg, std::filesystem::path(cfg->cfg.out_dir));
    if (out) *out = new ddm_report_t{std::move(report)};
  });
}

ddm_status ddm_ablate_switching(ddm_config cfg, const int* pair, int* preference, int* n_prompts) {
  return try_([&] {
    check_handle(cfg, "config");
    std::optional<std::pair<int, int>> p;
    if (pair) p = std::make_pair(pair[0], pair[1]);
    const auto r = ddm::run_switching_ablation(cfg->cfg, cfg->cfg.out_dir, p);
    if (preference) *preference = r.preference;
    if (n_prompts) *n_prompts = r.n_prompts;
  });
}

ddm_status ddm_probe_specialization(ddm_config cfg, int expert, double* gap, double* gap_se) {
  return try_([&] {
    check_handle(cfg, "config");
    const auto r = ddm::run_specialization_probe(cfg->cfg, cfg->cfg.out_dir, expert);
    if (gap) *gap = r.gap.gap;
    if (gap_se) *gap_se = r.gap.gap_se();
  });
}

ddm_status ddm_report_emit(const char* report_json_path, const char* out_dir) {
  return try_([&] {
    check_handle(report_json_path, "report path");
    check_handle(out_dir, "output directory");
    ddm::stage_report(report_json_path, out_dir);
  });
}

ddm_status ddm_report_load(const char* path, ddm_report* out) {
  return try_([&] {
    check_handle(path, "path");
    check_handle(out, "output pointer");
    *out = new ddm_report_t{ddm::ComparisonReport::from_json(ddm::read_text_file(path))};
  });
}

ddm_status ddm_report_metric(ddm_report report, const char* arm, const char* metric, double* out) {
  return try_([&] {
    check_handle(report, "report");
    check_handle(arm, "arm");
    check_handle(metric, "metric");
    check_handle(out, "output pointer");
    const auto it = report->report.arms.find(arm);
    ddm::require(it != report->report.arms.end(), ddm::ErrorCode::InvalidArgument,
                 std::string("report has no arm '") + arm + "'");
    const auto& m = it->second;
    const std::string name = metric;
    if (name == "frechet") *out = m.frechet;
    else if (name == "alignment") *out = m.alignment_mean;
    else if (name == "alignment_se") *out = m.alignment_se;
    else if (name == "motion") *out = m.motion_mean;
    else if (name == "motion_se") *out = m.motion_se;
    else ddm::fail(ddm::ErrorCode::InvalidArgument, "unknown metric '" + name + "'");
  });
}

ddm_status ddm_report_provenance_hash(ddm_report report, uint64_t* out) {
  return try_([&] {
    check_handle(report, "report");
    check_handle(out, "output pointer");
    *out = report->report.provenance_hash();
  });
}

void ddm_report_destroy(ddm_report report) { delete report; }

}  // extern "C"
