#include "ddm/harness.hpp"

#include <exception>
#include <future>
#include <thread>

#include <json.hpp>

#include "ddm/binary_io.hpp"
#include "ddm/error.hpp"
#include "ddm/rng.hpp"

namespace ddm {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- file names -------------------------------------------------------------

namespace files {
fs::path train_data(const fs::path& out) { return out / "train.ds"; }
fs::path eval_data(const fs::path& out) { return out / "eval.ds"; }
fs::path expert_ckpt(const fs::path& out, int cluster) { return out / ("expert_" + std::to_string(cluster) + ".ckpt"); }
fs::path monolithic_ckpt(const fs::path& out) { return out / "monolithic.ckpt"; }
fs::path router_ckpt(const fs::path& out) { return out / "router.ckpt"; }
fs::path induced_ckpt(const fs::path& out, bool high_noise) {
  return out / (high_noise ? "expert_high_noise.ckpt" : "expert_low_noise.ckpt");
}
fs::path loss_csv(const fs::path& out, const std::string& arm) { return out / ("loss_" + arm + ".csv"); }
fs::path router_accuracy_csv(const fs::path& out) { return out / "router_accuracy.csv"; }
fs::path samples(const fs::path& out, const std::string& arm) { return out / ("samples_" + arm + ".ds"); }
fs::path report_json(const fs::path& out) { return out / "report.json"; }
fs::path per_prompt_csv(const fs::path& out) { return out / "per_prompt.csv"; }
fs::path relative_csv(const fs::path& out) { return out / "relative_improvement.csv"; }
fs::path switching_json(const fs::path& out) { return out / "switching.json"; }
fs::path switching_csv(const fs::path& out) { return out / "switching_per_prompt.csv"; }
fs::path specialization_json(const fs::path& out, int cluster) {
  return out / ("specialization_" + std::to_string(cluster) + ".json");
}
}  // namespace files

namespace {

// Seed namespaces below train_seed / eval_seed / data_seed.
constexpr std::uint64_t kRouterTag = 1000;
constexpr std::uint64_t kInducedTag = 2000;
constexpr std::uint64_t kEvalPromptTag = 0;
constexpr std::uint64_t kProbePromptTag = 1;

template <class F>
auto run_stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.code(), e.what());
  } catch (const std::exception& e) {
    throw StageError(name, ErrorCode::Internal, e.what());
  }
}

void ensure_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorCode::Io, "cannot create output directory '" + out.string() + "': " + ec.message());
}

std::vector<Condition> conditions_of(const Dataset& ds) {
  std::vector<Condition> out;
  out.reserve(ds.size());
  for (const auto& it : ds.items) out.push_back(it.cond);
  return out;
}

std::vector<Clip> clips_of(const Dataset& ds) {
  std::vector<Clip> out;
  out.reserve(ds.size());
  for (const auto& it : ds.items) out.push_back(it.clip);
  return out;
}

std::vector<std::uint64_t> eval_noise_seeds(const ExperimentConfig& cfg, std::size_t n) {
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = prompt_noise_seed(cfg, i);
  return seeds;
}

json metric_json(const MetricReport& m) {
  return json{{"frechet", m.frechet},
              {"alignment_mean", m.alignment_mean},
              {"alignment_se", m.alignment_se},
              {"motion_mean", m.motion_mean},
              {"motion_se", m.motion_se},
              {"aesthetic", "not computed"},
              {"per_prompt", m.per_prompt},
              {"per_prompt_motion", m.per_prompt_motion}};
}

MetricReport metric_from_json(const json& j) {
  MetricReport m;
  m.frechet = j.at("frechet").get<double>();
  m.alignment_mean = j.at("alignment_mean").get<double>();
  m.alignment_se = j.at("alignment_se").get<double>();
  m.motion_mean = j.at("motion_mean").get<double>();
  m.motion_se = j.at("motion_se").get<double>();
  m.per_prompt = j.at("per_prompt").get<std::vector<double>>();
  if (j.contains("per_prompt_motion")) m.per_prompt_motion = j.at("per_prompt_motion").get<std::vector<double>>();
  return m;
}

Dataset samples_dataset(const ExperimentConfig& cfg, const std::vector<Clip>& clips,
                        std::span<const Condition> prompts, std::vector<std::pair<std::string, std::string>> meta) {
  Dataset ds;
  ds.params = cfg.data;
  ds.seed = cfg.eval_seed;
  ds.cluster_counts.assign(static_cast<std::size_t>(cfg.data.clusters), 0);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    ds.items.push_back({clips[i], prompts[i]});
    ++ds.cluster_counts[static_cast<std::size_t>(prompts[i].cluster)];
  }
  meta.emplace_back("kind", "samples");
  ds.meta = std::move(meta);
  return ds;
}

/// Loads the cached dataset if present (it must match the config), otherwise
/// builds and caches it.
Dataset load_or_make(const ExperimentConfig& cfg, const fs::path& path, bool train) {
  if (fs::exists(path)) {
    Dataset ds = load_dataset(path);
    const std::uint64_t expected_seed = train ? cfg.data_seed : derive_seed(cfg.data_seed, {1});
    const long expected_items = train ? cfg.n_train * cfg.data.clusters : cfg.n_eval;
    if (!(ds.params == cfg.data) || ds.seed != expected_seed ||
        static_cast<long>(ds.size()) != expected_items)
      fail(ErrorCode::Config, "cached dataset '" + path.string() + "' does not match the config; rerun gen-data");
    return ds;
  }
  Dataset ds = train ? make_train_set(cfg) : make_eval_set(cfg);
  ensure_dir(path.parent_path());
  save_dataset(ds, path);
  return ds;
}

Checkpoint load_required(const fs::path& path, std::span<const int> widths) {
  if (!fs::exists(path)) fail(ErrorCode::Io, "missing checkpoint '" + path.string() + "'");
  return load_checkpoint(path, widths);
}

std::string arm_name_expert(int k) { return "expert_" + std::to_string(k); }

}  // namespace

// ---- data -------------------------------------------------------------------

Dataset make_train_set(const ExperimentConfig& cfg) { return build_dataset(cfg.data, cfg.n_train, cfg.data_seed); }

Dataset make_eval_set(const ExperimentConfig& cfg) {
  return build_stratified(cfg.data, cfg.n_eval, derive_seed(cfg.data_seed, {1}));
}

// ---- training -----------------------------------------------------------------

std::uint32_t cluster_mask(int cluster) { return 1u << cluster; }
std::uint32_t union_mask(int clusters) { return (1u << clusters) - 1u; }

std::uint64_t arm_seed(const ExperimentConfig& cfg, std::uint32_t mask) { return derive_seed(cfg.train_seed, {mask}); }

NetParams arm_init(const ExperimentConfig& cfg, std::uint32_t mask) {
  return init_params(velocity_widths(cfg.data, cfg.expert_hidden), derive_seed(arm_seed(cfg, mask), {0}));
}

TrainArmConfig expert_arm_config(const ExperimentConfig& cfg, int cluster) {
  TrainArmConfig a;
  a.kind = ArmKind::Expert;
  a.cluster = cluster;
  a.steps = iso_flop_split(cfg.total_steps, cfg.data.clusters).expert_steps.at(static_cast<std::size_t>(cluster));
  a.batch = cfg.batch;
  a.p_drop = cfg.p_drop;
  a.seed = derive_seed(arm_seed(cfg, cluster_mask(cluster)), {1});
  a.hyper.lr = cfg.lr;
  return a;
}

TrainArmConfig monolithic_arm_config(const ExperimentConfig& cfg) {
  TrainArmConfig a;
  a.kind = ArmKind::Monolithic;
  a.steps = iso_flop_split(cfg.total_steps, cfg.data.clusters).monolithic_steps;
  a.batch = cfg.batch;
  a.p_drop = cfg.p_drop;
  a.seed = derive_seed(arm_seed(cfg, union_mask(cfg.data.clusters)), {1});
  a.hyper.lr = cfg.lr;
  return a;
}

TrainArmResult train_expert(const ExperimentConfig& cfg, const Dataset& train, int cluster,
                            const BatchObserver& observer) {
  require(cluster >= 0 && cluster < cfg.data.clusters, ErrorCode::InvalidArgument,
          "expert cluster " + std::to_string(cluster) + " out of range");
  return train_arm(expert_arm_config(cfg, cluster), train, arm_init(cfg, cluster_mask(cluster)), observer);
}

TrainArmResult train_monolithic(const ExperimentConfig& cfg, const Dataset& train, const BatchObserver& observer) {
  return train_arm(monolithic_arm_config(cfg), train, arm_init(cfg, union_mask(cfg.data.clusters)), observer);
}

RouterTrainResult train_router_arm(const ExperimentConfig& cfg, const Dataset& train, const Dataset& heldout) {
  RouterTrainConfig rc;
  rc.steps = cfg.router_steps;
  rc.batch = cfg.router_batch;
  rc.seed = derive_seed(cfg.train_seed, {kRouterTag});
  rc.hyper.lr = cfg.lr;
  rc.hidden = cfg.router_hidden;
  return train_router(train, heldout, rc);
}

TrainArmResult train_induced(const ExperimentConfig& cfg, const Dataset& train, bool high_noise) {
  TrainArmConfig a;
  a.kind = ArmKind::Monolithic;
  a.steps = cfg.effective_switch_steps();
  a.batch = cfg.batch;
  a.p_drop = cfg.p_drop;
  const std::uint64_t base = derive_seed(cfg.train_seed, {kInducedTag, high_noise ? 1u : 0u});
  a.seed = derive_seed(base, {1});
  a.hyper.lr = cfg.lr;
  a.tdist.kind = high_noise ? TimeDistribution::Kind::SkewHigh : TimeDistribution::Kind::SkewLow;
  a.tdist.shape = cfg.switch_skew;
  const NetParams init = init_params(velocity_widths(cfg.data, cfg.expert_hidden), derive_seed(base, {0}));
  return train_arm(a, train, init);
}

AlignmentProbe fit_probe(const ExperimentConfig& cfg, const Dataset& train) {
  std::vector<std::vector<double>> pooled;
  pooled.reserve(train.size());
  for (const auto& it : train.items) pooled.push_back(it.cond.pooled);
  return fit_alignment_probe(clips_of(train), pooled, cfg.probe_lambda);
}

// ---- sampling -------------------------------------------------------------------

SamplerConfig base_sampler(const ExperimentConfig& cfg) {
  SamplerConfig s;
  s.n_steps = cfg.n_steps;
  s.cfg_scale = cfg.cfg_scale;
  s.top_k = cfg.top_k;
  s.guidance = cfg.guidance;
  return s;
}

std::uint64_t prompt_noise_seed(const ExperimentConfig& cfg, std::uint64_t index) {
  return derive_seed(cfg.eval_seed, {kEvalPromptTag, index});
}

std::vector<Clip> sample_prompts(std::span<const NetParams> experts, const NetParams* router,
                                 std::span<const Condition> prompts, std::span<const std::uint64_t> noise_seeds,
                                 const SamplerConfig& sampler, int frames, ForwardCounter* counter) {
  require(prompts.size() == noise_seeds.size(), ErrorCode::Shape, "one noise seed per prompt required");
  const std::size_t n = prompts.size();
  std::vector<Clip> out(n);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(hw, std::max<std::size_t>(n, 1)));
  std::vector<ForwardCounter> counters(threads);
  std::vector<std::exception_ptr> errors(threads);

  auto work = [&](unsigned t) {
    try {
      for (std::size_t i = t; i < n; i += threads) {
        Rng rng(noise_seeds[i]);
        out[i] = sample(experts, router, prompts[i], sampler, frames, rng, &counters[t]);
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (counter)
    for (const auto& c : counters) {
      counter->expert_calls += c.expert_calls;
      counter->router_calls += c.router_calls;
    }
  return out;
}

std::uint64_t protocol_hash(std::span<const Condition> prompts, std::span<const std::uint64_t> noise_seeds,
                            const SamplerConfig& sampler) {
  std::vector<double> prompt_values;
  for (const auto& c : prompts) {
    prompt_values.push_back(static_cast<double>(c.cluster));
    prompt_values.insert(prompt_values.end(), c.full.begin(), c.full.end());
    prompt_values.insert(prompt_values.end(), c.pooled.begin(), c.pooled.end());
  }
  std::string text = "prompts=" + hex64(fnv1a64(std::span<const double>(prompt_values))) + ";seeds=";
  for (auto s : noise_seeds) text += hex64(s);
  text += ";n_steps=" + std::to_string(sampler.n_steps) + ";cfg_scale=" + format_double(sampler.cfg_scale) +
          ";guidance=" + (sampler.guidance == GuidanceOrder::PerExpert ? "per_expert" : "post_mix");
  return fnv1a64(text);
}

// ---- comparison -------------------------------------------------------------------

std::vector<RelativeImprovement> relative_improvements(const MetricReport& ddm, const MetricReport& baseline) {
  auto rel = [](double up, double base) { return base != 0.0 ? up / base : 0.0; };
  return {
      {"frechet", "down", ddm.frechet, baseline.frechet, rel(baseline.frechet - ddm.frechet, baseline.frechet)},
      {"alignment", "up", ddm.alignment_mean, baseline.alignment_mean,
       rel(ddm.alignment_mean - baseline.alignment_mean, baseline.alignment_mean)},
      {"motion", "none", ddm.motion_mean, baseline.motion_mean,
       rel(ddm.motion_mean - baseline.motion_mean, baseline.motion_mean)},
  };
}

namespace {

json provenance_json(const ComparisonReport& r) {
  return json{{"config_hash", r.config_hash},
              {"checkpoints", r.checkpoint_hashes},
              {"protocol", r.protocol_hashes},
              {"items_consumed", r.items_consumed},
              {"expert_init", "independent seeds"}};
}

}  // namespace

std::string ComparisonReport::to_json() const {
  json arms_j = json::object();
  for (const auto& [name, m] : arms) arms_j[name] = metric_json(m);
  json rel_j = json::array();
  for (const auto& r : relative)
    rel_j.push_back({{"metric", r.metric}, {"direction", r.direction}, {"ddm", r.ddm}, {"monolithic", r.baseline},
                     {"value", r.value}});
  json doc{{"arms", arms_j},
           {"relative_improvement", rel_j},
           {"prompt_clusters", prompt_clusters},
           {"provenance", provenance_json(*this)}};
  return doc.dump(2) + "\n";
}

ComparisonReport ComparisonReport::from_json(const std::string& text) {
  ComparisonReport r;
  try {
    const json doc = json::parse(text);
    for (const auto& [name, m] : doc.at("arms").items()) r.arms[name] = metric_from_json(m);
    for (const auto& e : doc.at("relative_improvement"))
      r.relative.push_back({e.at("metric").get<std::string>(), e.at("direction").get<std::string>(),
                            e.at("ddm").get<double>(), e.at("monolithic").get<double>(), e.at("value").get<double>()});
    r.prompt_clusters = doc.at("prompt_clusters").get<std::vector<int>>();
    const json& p = doc.at("provenance");
    r.config_hash = p.at("config_hash").get<std::string>();
    r.checkpoint_hashes = p.at("checkpoints").get<std::map<std::string, std::string>>();
    r.protocol_hashes = p.at("protocol").get<std::map<std::string, std::string>>();
    r.items_consumed = p.at("items_consumed").get<std::map<std::string, long>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed report: ") + e.what());
  }
  return r;
}

std::uint64_t ComparisonReport::provenance_hash() const { return fnv1a64(provenance_json(*this).dump()); }
std::uint64_t ComparisonReport::report_hash() const { return fnv1a64(to_json()); }

ComparisonReport run_comparison(const ExperimentConfig& cfg, const std::optional<fs::path>& out_dir,
                                TrainedArms* keep) {
  run_stage("config", [&] { cfg.validate(); });
  const int k_count = cfg.data.clusters;

  Dataset train, eval;
  run_stage("gen-data", [&] {
    train = make_train_set(cfg);
    eval = make_eval_set(cfg);
    if (out_dir) {
      ensure_dir(*out_dir);
      save_dataset(train, files::train_data(*out_dir));
      save_dataset(eval, files::eval_data(*out_dir));
    }
  });

  // Arms share nothing but read-only data, so they train concurrently.
  TrainArmResult mono;
  std::vector<TrainArmResult> experts(static_cast<std::size_t>(k_count));
  run_stage("train", [&] {
    iso_flop_split(cfg.total_steps, k_count);
    auto mono_f = std::async(std::launch::async, [&] { return run_stage("train-monolithic", [&] { return train_monolithic(cfg, train); }); });
    std::vector<std::future<TrainArmResult>> expert_f;
    for (int k = 0; k < k_count; ++k)
      expert_f.push_back(std::async(std::launch::async, [&, k] {
        return run_stage("train-expert", [&] { return train_expert(cfg, train, k); });
      }));
    mono = mono_f.get();
    for (int k = 0; k < k_count; ++k) experts[static_cast<std::size_t>(k)] = expert_f[static_cast<std::size_t>(k)].get();
    if (out_dir) {
      save_checkpoint(files::monolithic_ckpt(*out_dir), {"monolithic", mono.net, mono.opt});
      write_loss_csv(files::loss_csv(*out_dir, "monolithic"), mono.losses);
      for (int k = 0; k < k_count; ++k) {
        const auto& e = experts[static_cast<std::size_t>(k)];
        save_checkpoint(files::expert_ckpt(*out_dir, k), {"expert", e.net, e.opt});
        write_loss_csv(files::loss_csv(*out_dir, arm_name_expert(k)), e.losses);
      }
    }
  });

  RouterTrainResult router;
  run_stage("train-router", [&] {
    router = train_router_arm(cfg, train, eval);
    if (out_dir) {
      save_checkpoint(files::router_ckpt(*out_dir), {"router", router.net, router.opt});
      write_accuracy_csv(files::router_accuracy_csv(*out_dir),
                         accuracy_by_t(router.net, eval, 10, derive_seed(cfg.eval_seed, {kRouterTag})));
    }
  });

  ComparisonReport report;
  std::vector<NetParams> expert_nets;
  for (const auto& e : experts) expert_nets.push_back(e.net);
  AlignmentProbe probe;
  run_stage("evaluate", [&] {
    probe = fit_probe(cfg, train);
    const auto prompts = conditions_of(eval);
    const auto reference = clips_of(eval);
    const auto seeds = eval_noise_seeds(cfg, prompts.size());
    const int frames = cfg.data.frames;

    auto score = [&](const std::string& name, std::span<const NetParams> nets, const NetParams* rnet,
                     const SamplerConfig& sc) {
      const auto clips = sample_prompts(nets, rnet, prompts, seeds, sc, frames);
      report.arms[name] = evaluate_samples(clips, reference, prompts, probe, cfg.frechet_reg);
      report.protocol_hashes[name] = hex64(protocol_hash(prompts, seeds, sc));
      if (out_dir)
        save_dataset(samples_dataset(cfg, clips, prompts, {{"arm", name}, {"n_steps", std::to_string(sc.n_steps)},
                                                           {"cfg_scale", format_double(sc.cfg_scale)}}),
                     files::samples(*out_dir, name));
    };

    SamplerConfig routed = base_sampler(cfg);
    routed.mode = SamplerMode::Routed;
    score("ddm", expert_nets, &router.net, routed);

    SamplerConfig single = base_sampler(cfg);
    single.mode = SamplerMode::Single;
    single.expert = 0;
    score("monolithic", std::span<const NetParams>(&mono.net, 1), nullptr, single);

    for (int k = 0; k < k_count; ++k) {
      single.expert = k;
      score(arm_name_expert(k), expert_nets, nullptr, single);
    }
    for (const auto& it : eval.items) report.prompt_clusters.push_back(it.cond.cluster);
  });

  report.relative = relative_improvements(report.arms.at("ddm"), report.arms.at("monolithic"));
  report.config_hash = hex64(cfg.hash());
  report.checkpoint_hashes["monolithic"] = hex64(params_hash(mono.net));
  report.checkpoint_hashes["router"] = hex64(params_hash(router.net));
  report.items_consumed["monolithic"] = mono.items_consumed;
  long expert_items = 0;
  for (int k = 0; k < k_count; ++k) {
    const auto& e = experts[static_cast<std::size_t>(k)];
    report.checkpoint_hashes[arm_name_expert(k)] = hex64(params_hash(e.net));
    report.items_consumed[arm_name_expert(k)] = e.items_consumed;
    expert_items += e.items_consumed;
  }
  report.items_consumed["experts_total"] = expert_items;

  if (out_dir) run_stage("report", [&] { emit_report(report, *out_dir); });

  if (keep) {
    keep->train = std::move(train);
    keep->eval = std::move(eval);
    keep->experts = std::move(expert_nets);
    keep->monolithic = std::move(mono.net);
    keep->router = std::move(router.net);
    keep->probe = std::move(probe);
  }
  return report;
}

void emit_report(const ComparisonReport& report, const fs::path& out_dir) {
  ensure_dir(out_dir);
  write_text_file(files::report_json(out_dir), report.to_json());

  std::string pp = "prompt,cluster";
  for (const auto& [name, m] : report.arms) pp += "," + name;
  pp += "\n";
  const std::size_t n = report.arms.empty() ? 0 : report.arms.begin()->second.per_prompt.size();
  for (std::size_t i = 0; i < n; ++i) {
    pp += std::to_string(i) + "," +
          (i < report.prompt_clusters.size() ? std::to_string(report.prompt_clusters[i]) : std::string("-1"));
    for (const auto& [name, m] : report.arms) pp += "," + format_double(m.per_prompt.at(i));
    pp += "\n";
  }
  write_text_file(files::per_prompt_csv(out_dir), pp);

  std::string rel = "metric,direction,ddm,monolithic,relative_improvement\n";
  for (const auto& r : report.relative)
    rel += r.metric + "," + r.direction + "," + format_double(r.ddm) + "," + format_double(r.baseline) + "," +
           format_double(r.value) + "\n";
  write_text_file(files::relative_csv(out_dir), rel);
}

// ---- specialization probe -------------------------------------------------------------

std::string SpecializationResult::to_json() const {
  json j{{"expert", expert},
         {"gap", gap.gap},
         {"gap_se", gap.gap_se()},
         {"in_mean", gap.in_mean},
         {"in_se", gap.in_se},
         {"generic_mean", gap.out_mean},
         {"generic_se", gap.out_se},
         {"in_scores", in_scores},
         {"generic_scores", out_scores}};
  return j.dump(2) + "\n";
}

ProbePrompts specialization_prompts(const ExperimentConfig& cfg, int cluster) {
  require(cluster >= 0 && cluster < cfg.data.clusters, ErrorCode::InvalidArgument, "expert index out of range");
  const long n = cfg.probe_prompts;
  const Dataset pool = build_stratified(cfg.data, n * cfg.data.clusters, derive_seed(cfg.data_seed, {2}));
  ProbePrompts pp;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto seed = derive_seed(cfg.eval_seed, {kProbePromptTag, i});
    if (pool.items[i].cond.cluster == cluster) {
      pp.in_cluster.push_back(pool.items[i].cond);
      pp.in_seeds.push_back(seed);
    }
    if (static_cast<long>(i) < n) {
      pp.generic.push_back(pool.items[i].cond);
      pp.generic_seeds.push_back(seed);
    }
  }
  return pp;
}

SpecializationResult probe_specialization(const ExperimentConfig& cfg, const NetParams& expert,
                                          const AlignmentProbe& probe, int cluster) {
  const ProbePrompts pp = specialization_prompts(cfg, cluster);
  SamplerConfig sc = base_sampler(cfg);
  sc.mode = SamplerMode::Single;
  sc.expert = 0;
  const std::span<const NetParams> nets(&expert, 1);
  auto scores = [&](const std::vector<Condition>& prompts, const std::vector<std::uint64_t>& seeds) {
    const auto clips = sample_prompts(nets, nullptr, prompts, seeds, sc, cfg.data.frames);
    std::vector<double> s;
    for (std::size_t i = 0; i < clips.size(); ++i) s.push_back(alignment_score(probe, clips[i], prompts[i].pooled));
    return s;
  };
  SpecializationResult r;
  r.expert = cluster;
  r.in_scores = scores(pp.in_cluster, pp.in_seeds);
  r.out_scores = scores(pp.generic, pp.generic_seeds);
  r.gap = specialization_gap(r.in_scores, r.out_scores);
  return r;
}

SpecializationResult run_specialization_probe(const ExperimentConfig& cfg, const fs::path& out_dir, int cluster) {
  return run_stage("probe-specialization", [&] {
    cfg.validate();
    require(cluster >= 0 && cluster < cfg.data.clusters, ErrorCode::InvalidArgument,
            "expert index " + std::to_string(cluster) + " out of range");
    const auto widths = velocity_widths(cfg.data, cfg.expert_hidden);
    const Checkpoint ck = load_required(files::expert_ckpt(out_dir, cluster), widths);
    const Dataset train = load_or_make(cfg, files::train_data(out_dir), true);
    const auto result = probe_specialization(cfg, ck.net, fit_probe(cfg, train), cluster);
    write_text_file(files::specialization_json(out_dir, cluster), result.to_json());
    return result;
  });
}

// ---- switching ablation -----------------------------------------------------------------

double SwitchingResult::best_single_alignment() const {
  return std::max(schedules.at(kSwitchSingleA).alignment_mean, schedules.at(kSwitchSingleB).alignment_mean);
}

double SwitchingResult::best_alternating_alignment() const {
  return std::max(schedules.at(kSwitchAltA).alignment_mean, schedules.at(kSwitchAltB).alignment_mean);
}

std::string SwitchingResult::to_json() const {
  json s = json::object();
  for (const auto& [name, m] : schedules) s[name] = metric_json(m);
  json j{{"schedules", s},
         {"preference_count", preference},
         {"n_prompts", n_prompts},
         {"baseline", {kSwitchSingleA, kSwitchSingleB}},
         {"best_single_alignment", best_single_alignment()},
         {"best_alternating_alignment", best_alternating_alignment()}};
  return j.dump(2) + "\n";
}

SwitchingResult switching_ablation(const ExperimentConfig& cfg, const NetParams& a, const NetParams& b,
                                   const AlignmentProbe& probe, const Dataset& eval) {
  require(static_cast<long>(cfg.switch_prompts) <= static_cast<long>(eval.size()), ErrorCode::InvalidArgument,
          "switch_prompts exceeds the held-out prompt count");
  const std::vector<NetParams> pair{a, b};
  std::vector<Condition> prompts;
  for (int i = 0; i < cfg.switch_prompts; ++i) prompts.push_back(eval.items[static_cast<std::size_t>(i)].cond);
  const auto seeds = eval_noise_seeds(cfg, prompts.size());
  const auto reference = clips_of(eval);

  SamplerConfig sc = base_sampler(cfg);
  const std::vector<std::pair<std::string, SamplerConfig>> schedules = [&] {
    std::vector<std::pair<std::string, SamplerConfig>> out;
    SamplerConfig s = sc;
    s.mode = SamplerMode::Single;
    s.expert = 0;
    out.emplace_back(kSwitchSingleA, s);
    s.expert = 1;
    out.emplace_back(kSwitchSingleB, s);
    s.mode = SamplerMode::Schedule;
    s.schedule = alternating_schedule(sc.n_steps, 0, 1, 0);
    out.emplace_back(kSwitchAltA, s);
    s.schedule = alternating_schedule(sc.n_steps, 0, 1, 1);
    out.emplace_back(kSwitchAltB, s);
    return out;
  }();

  SwitchingResult r;
  r.n_prompts = static_cast<int>(prompts.size());
  for (const auto& [name, s] : schedules) {
    const auto clips = sample_prompts(pair, nullptr, prompts, seeds, s, cfg.data.frames);
    r.schedules[name] = evaluate_samples(clips, reference, prompts, probe, cfg.frechet_reg);
    r.per_prompt[name] = r.schedules[name].per_prompt;
  }
  r.preference = schedule_preference(r.per_prompt, {kSwitchSingleA, kSwitchSingleB});
  return r;
}

SwitchingResult run_switching_ablation(const ExperimentConfig& cfg, const fs::path& out_dir,
                                       std::optional<std::pair<int, int>> pair) {
  return run_stage("ablate-switching", [&] {
    cfg.validate();
    ensure_dir(out_dir);
    const auto widths = velocity_widths(cfg.data, cfg.expert_hidden);
    const Dataset train = load_or_make(cfg, files::train_data(out_dir), true);
    const Dataset eval = load_or_make(cfg, files::eval_data(out_dir), false);

    NetParams a, b;
    if (pair) {
      require(pair->first != pair->second, ErrorCode::InvalidArgument, "switching pair needs two distinct experts");
      for (int e : {pair->first, pair->second})
        require(e >= 0 && e < cfg.data.clusters, ErrorCode::InvalidArgument, "expert index out of range");
      a = load_required(files::expert_ckpt(out_dir, pair->first), widths).net;
      b = load_required(files::expert_ckpt(out_dir, pair->second), widths).net;
    } else {
      auto get = [&](bool high) {
        const auto path = files::induced_ckpt(out_dir, high);
        if (fs::exists(path)) return load_checkpoint(path, widths).net;
        auto res = train_induced(cfg, train, high);
        save_checkpoint(path, {high ? "expert_high_noise" : "expert_low_noise", res.net, res.opt});
        write_loss_csv(files::loss_csv(out_dir, high ? "expert_high_noise" : "expert_low_noise"), res.losses);
        return res.net;
      };
      a = get(true);
      b = get(false);
    }

    const auto result = switching_ablation(cfg, a, b, fit_probe(cfg, train), eval);
    write_text_file(files::switching_json(out_dir), result.to_json());
    std::string csv = "prompt";
    for (const auto& [name, s] : result.per_prompt) csv += "," + name;
    csv += "\n";
    for (int i = 0; i < result.n_prompts; ++i) {
      csv += std::to_string(i);
      for (const auto& [name, s] : result.per_prompt) csv += "," + format_double(s[static_cast<std::size_t>(i)]);
      csv += "\n";
    }
    write_text_file(files::switching_csv(out_dir), csv);
    return result;
  });
}

// ---- CLI stages -----------------------------------------------------------------------------

void stage_gen_data(const ExperimentConfig& cfg, const fs::path& out_dir) {
  run_stage("gen-data", [&] {
    cfg.validate();
    ensure_dir(out_dir);
    save_dataset(make_train_set(cfg), files::train_data(out_dir));
    save_dataset(make_eval_set(cfg), files::eval_data(out_dir));
  });
}

void stage_train_expert(const ExperimentConfig& cfg, const fs::path& out_dir, int cluster) {
  run_stage("train-expert", [&] {
    cfg.validate();
    require(cluster >= 0 && cluster < cfg.data.clusters, ErrorCode::InvalidArgument,
            "--cluster " + std::to_string(cluster) + " out of range [0, " + std::to_string(cfg.data.clusters) + ")");
    const Dataset train = load_or_make(cfg, files::train_data(out_dir), true);
    const auto res = train_expert(cfg, train, cluster);
    save_checkpoint(files::expert_ckpt(out_dir, cluster), {"expert", res.net, res.opt});
    write_loss_csv(files::loss_csv(out_dir, arm_name_expert(cluster)), res.losses);
  });
}

void stage_train_monolithic(const ExperimentConfig& cfg, const fs::path& out_dir) {
  run_stage("train-monolithic", [&] {
    cfg.validate();
    const Dataset train = load_or_make(cfg, files::train_data(out_dir), true);
    const auto res = train_monolithic(cfg, train);
    save_checkpoint(files::monolithic_ckpt(out_dir), {"monolithic", res.net, res.opt});
    write_loss_csv(files::loss_csv(out_dir, "monolithic"), res.losses);
  });
}

void stage_train_router(const ExperimentConfig& cfg, const fs::path& out_dir) {
  run_stage("train-router", [&] {
    cfg.validate();
    const Dataset train = load_or_make(cfg, files::train_data(out_dir), true);
    const Dataset eval = load_or_make(cfg, files::eval_data(out_dir), false);
    const auto res = train_router_arm(cfg, train, eval);
    save_checkpoint(files::router_ckpt(out_dir), {"router", res.net, res.opt});
    write_accuracy_csv(files::router_accuracy_csv(out_dir),
                       accuracy_by_t(res.net, eval, 10, derive_seed(cfg.eval_seed, {kRouterTag})));
  });
}

fs::path stage_sample(const ExperimentConfig& cfg, const fs::path& out_dir, const SampleRequest& req) {
  return run_stage("sample", [&] {
    cfg.validate();
    const Dataset eval = load_or_make(cfg, files::eval_data(out_dir), false);
    const auto widths = velocity_widths(cfg.data, cfg.expert_hidden);

    SamplerConfig sc = base_sampler(cfg);
    if (req.n_steps) sc.n_steps = *req.n_steps;
    if (req.cfg_scale) sc.cfg_scale = *req.cfg_scale;
    if (req.top_k) sc.top_k = *req.top_k;

    std::vector<NetParams> nets;
    NetParams router;
    std::string name;
    switch (req.arm) {
      case SampleArm::Monolithic:
        nets.push_back(load_required(files::monolithic_ckpt(out_dir), widths).net);
        sc.mode = SamplerMode::Single;
        sc.expert = 0;
        name = "monolithic";
        break;
      case SampleArm::Routed:
      case SampleArm::Single:
      case SampleArm::Schedule:
        for (int k = 0; k < cfg.data.clusters; ++k) nets.push_back(load_required(files::expert_ckpt(out_dir, k), widths).net);
        if (req.arm == SampleArm::Routed) {
          router = load_required(files::router_ckpt(out_dir), router_widths(cfg.data, cfg.router_hidden)).net;
          sc.mode = SamplerMode::Routed;
          name = "routed";
        } else if (req.arm == SampleArm::Single) {
          sc.mode = SamplerMode::Single;
          sc.expert = req.expert;
          name = arm_name_expert(req.expert);
        } else {
          sc.mode = SamplerMode::Schedule;
          sc.schedule = req.schedule;
          name = "schedule";
        }
        break;
    }
    sc.validate(static_cast<int>(nets.size()));

    const auto prompts = conditions_of(eval);
    const auto seeds = eval_noise_seeds(cfg, prompts.size());
    const auto clips = sample_prompts(nets, req.arm == SampleArm::Routed ? &router : nullptr, prompts, seeds, sc,
                                      cfg.data.frames);
    std::vector<std::pair<std::string, std::string>> meta{{"arm", name},
                                                          {"n_steps", std::to_string(sc.n_steps)},
                                                          {"cfg_scale", format_double(sc.cfg_scale)},
                                                          {"top_k", std::to_string(sc.top_k)}};
    if (!sc.schedule.empty()) {
      std::vector<long long> s(sc.schedule.begin(), sc.schedule.end());
      meta.emplace_back("schedule", join_ints(s));
    }
    const auto path = files::samples(out_dir, name);
    save_dataset(samples_dataset(cfg, clips, prompts, std::move(meta)), path);
    return path;
  });
}

void stage_report(const fs::path& report_path, const fs::path& out_dir) {
  run_stage("report", [&] { emit_report(ComparisonReport::from_json(read_text_file(report_path)), out_dir); });
}

}  // namespace ddm
