// ddmlab: command-line driver over the ddm C API.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddm/ddm.h"

namespace {

struct Globals {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::vector<std::string> overrides;
};

int report_failure(ddm_status st, const char* fallback_stage) {
  const std::string stage = *ddm_last_error_stage() ? ddm_last_error_stage() : fallback_stage;
  std::fprintf(stderr, "error [%s] (%s): %s\n", stage.c_str(), ddm_status_name(st), ddm_last_error());
  return static_cast<int>(st) + 1;
}

/// Loads --config (or defaults) and applies --out, --seed and --set overrides.
ddm_status make_config(const Globals& g, ddm_config* cfg) {
  ddm_status st = g.config_path.empty() ? ddm_config_create_default(cfg) : ddm_config_load(g.config_path.c_str(), cfg);
  if (st != DDM_OK) return st;
  if (!g.out_dir.empty() && (st = ddm_config_set(*cfg, "out_dir", g.out_dir.c_str())) != DDM_OK) return st;
  if (!g.seed.empty() && (st = ddm_config_set(*cfg, "data_seed", g.seed.c_str())) != DDM_OK) return st;
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error [config]: --set expects key=value, got '%s'\n", kv.c_str());
      return DDM_ERR_CONFIG;
    }
    if ((st = ddm_config_set(*cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != DDM_OK) return st;
  }
  return ddm_config_validate(*cfg);
}

std::vector<int> parse_index_list(const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    out.push_back(std::stoi(text.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ddmlab: decentralized flow-matching experts on synthetic clips"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out_dir, "output directory (overrides out_dir)");
  app.add_option("--seed", g.seed, "data seed (overrides data_seed)");
  app.add_option("--set", g.overrides, "extra key=value config overrides")->take_all();

  auto* gen = app.add_subcommand("gen-data", "generate and cache the training and held-out sets");

  int cluster = 0;
  auto* train_expert = app.add_subcommand("train-expert", "train the expert of one cluster");
  train_expert->add_option("--cluster", cluster, "cluster index")->required();

  auto* train_mono = app.add_subcommand("train-monolithic", "train the monolithic baseline on the union");
  auto* train_router = app.add_subcommand("train-router", "train the router on pooled conditions");

  std::string mode = "routed", schedule_text;
  int expert = 0, steps = 0, topk = 0;
  double cfg_scale = -1.0;
  auto* sample = app.add_subcommand("sample", "sample the held-out prompts");
  sample->add_option("--mode", mode, "routed | single | schedule | monolithic")
      ->check(CLI::IsMember({"routed", "single", "schedule", "monolithic"}));
  sample->add_option("--expert", expert, "expert index for --mode single");
  sample->add_option("--steps", steps, "Euler steps");
  sample->add_option("--cfg", cfg_scale, "guidance scale");
  sample->add_option("--topk", topk, "router top-k");
  sample->add_option("--schedule", schedule_text, "expert index per step, comma separated");

  auto* compare = app.add_subcommand("compare", "train every arm, sample and write the comparison report");

  std::string pair_text;
  auto* ablate = app.add_subcommand("ablate-switching", "alternating vs single-expert schedules");
  ablate->add_option("--pair", pair_text, "a,b expert indices; default trains a high/low-noise pair");

  int probe_expert = 0;
  auto* probe = app.add_subcommand("probe-specialization", "in-cluster vs generic alignment of one expert");
  probe->add_option("--expert", probe_expert, "expert index")->required();

  std::string report_in;
  auto* report = app.add_subcommand("report", "re-emit CSV views of a report.json");
  report->add_option("--in", report_in, "report.json (default <out>/report.json)");

  CLI11_PARSE(app, argc, argv);

  ddm_config cfg = nullptr;
  ddm_status st = make_config(g, &cfg);
  if (st != DDM_OK) {
    const int rc = report_failure(st, "config");
    ddm_config_destroy(cfg);
    return rc;
  }
  const std::string out = ddm_config_out_dir(cfg);
  const char* stage = "";

  if (gen->parsed()) {
    stage = "gen-data";
    st = ddm_gen_data(cfg);
  } else if (train_expert->parsed()) {
    stage = "train-expert";
    st = ddm_train_expert(cfg, cluster);
  } else if (train_mono->parsed()) {
    stage = "train-monolithic";
    st = ddm_train_monolithic(cfg);
  } else if (train_router->parsed()) {
    stage = "train-router";
    st = ddm_train_router(cfg);
  } else if (sample->parsed()) {
    stage = "sample";
    ddm_sample_options opts;
    ddm_sample_options_init(&opts);
    opts.arm = mode == "single"       ? DDM_SAMPLE_SINGLE
               : mode == "schedule"   ? DDM_SAMPLE_SCHEDULE
               : mode == "monolithic" ? DDM_SAMPLE_MONOLITHIC
                                      : DDM_SAMPLE_ROUTED;
    opts.expert = expert;
    opts.n_steps = steps;
    opts.cfg_scale = cfg_scale;
    opts.top_k = topk;
    std::vector<int> schedule;
    if (!schedule_text.empty()) {
      try {
        schedule = parse_index_list(schedule_text);
      } catch (const std::exception&) {
        std::fprintf(stderr, "error [sample]: malformed --schedule '%s'\n", schedule_text.c_str());
        ddm_config_destroy(cfg);
        return DDM_ERR_INVALID_ARGUMENT + 1;
      }
      opts.schedule = schedule.data();
      opts.schedule_len = schedule.size();
    }
    char path[4096];
    st = ddm_sample(cfg, &opts, path, sizeof path);
    if (st == DDM_OK) std::printf("%s\n", path);
  } else if (compare->parsed()) {
    stage = "compare";
    ddm_report rep = nullptr;
    st = ddm_compare(cfg, &rep);
    if (st == DDM_OK) {
      for (const char* arm : {"ddm", "monolithic"}) {
        double fd = 0.0, al = 0.0, mo = 0.0;
        ddm_report_metric(rep, arm, "frechet", &fd);
        ddm_report_metric(rep, arm, "alignment", &al);
        ddm_report_metric(rep, arm, "motion", &mo);
        std::printf("%-11s frechet=%.6g alignment=%.6g motion=%.6g\n", arm, fd, al, mo);
      }
      std::printf("report: %s/report.json\n", out.c_str());
    }
    ddm_report_destroy(rep);
  } else if (ablate->parsed()) {
    stage = "ablate-switching";
    int pref = 0, n = 0;
    if (pair_text.empty()) {
      st = ddm_ablate_switching(cfg, nullptr, &pref, &n);
    } else {
      std::vector<int> pair;
      try {
        pair = parse_index_list(pair_text);
      } catch (const std::exception&) {
      }
      if (pair.size() != 2) {
        std::fprintf(stderr, "error [ablate-switching]: --pair expects a,b\n");
        ddm_config_destroy(cfg);
        return DDM_ERR_INVALID_ARGUMENT + 1;
      }
      st = ddm_ablate_switching(cfg, pair.data(), &pref, &n);
    }
    if (st == DDM_OK) std::printf("alternating preferred on %d / %d prompts\n", pref, n);
  } else if (probe->parsed()) {
    stage = "probe-specialization";
    double gap = 0.0, se = 0.0;
    st = ddm_probe_specialization(cfg, probe_expert, &gap, &se);
    if (st == DDM_OK) std::printf("expert %d: gap=%.6g se=%.6g\n", probe_expert, gap, se);
  } else if (report->parsed()) {
    stage = "report";
    const std::string in = report_in.empty() ? out + "/report.json" : report_in;
    st = ddm_report_emit(in.c_str(), out.c_str());
  }

  ddm_config_destroy(cfg);
  return st == DDM_OK ? 0 : report_failure(st, stage);
}
