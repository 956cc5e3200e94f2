#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddm/config.hpp"
#include "ddm/datagen.hpp"
#include "ddm/flow.hpp"
#include "ddm/metrics.hpp"
#include "ddm/net.hpp"
#include "ddm/router.hpp"
#include "ddm/sampler.hpp"

namespace ddm {

/// Deterministic output file names under an output directory.
namespace files {
std::filesystem::path train_data(const std::filesystem::path& out);
std::filesystem::path eval_data(const std::filesystem::path& out);
std::filesystem::path expert_ckpt(const std::filesystem::path& out, int cluster);
std::filesystem::path monolithic_ckpt(const std::filesystem::path& out);
std::filesystem::path router_ckpt(const std::filesystem::path& out);
std::filesystem::path induced_ckpt(const std::filesystem::path& out, bool high_noise);
std::filesystem::path loss_csv(const std::filesystem::path& out, const std::string& arm);
std::filesystem::path router_accuracy_csv(const std::filesystem::path& out);
std::filesystem::path samples(const std::filesystem::path& out, const std::string& arm);
std::filesystem::path report_json(const std::filesystem::path& out);
std::filesystem::path per_prompt_csv(const std::filesystem::path& out);
std::filesystem::path relative_csv(const std::filesystem::path& out);
std::filesystem::path switching_json(const std::filesystem::path& out);
std::filesystem::path switching_csv(const std::filesystem::path& out);
std::filesystem::path specialization_json(const std::filesystem::path& out, int cluster);
}  // namespace files

// ---- data ---------------------------------------------------------------

Dataset make_train_set(const ExperimentConfig& cfg);
/// Cluster-stratified held-out prompts (n_eval items).
Dataset make_eval_set(const ExperimentConfig& cfg);

// ---- training -------------------------------------------------------------

/// Bitmask of the clusters an arm trains on. An arm's seeds depend only on
/// this mask, so with K = 1 the expert and the monolithic arm coincide.
std::uint32_t cluster_mask(int cluster);
std::uint32_t union_mask(int clusters);
std::uint64_t arm_seed(const ExperimentConfig& cfg, std::uint32_t mask);

TrainArmConfig expert_arm_config(const ExperimentConfig& cfg, int cluster);
TrainArmConfig monolithic_arm_config(const ExperimentConfig& cfg);
NetParams arm_init(const ExperimentConfig& cfg, std::uint32_t mask);

TrainArmResult train_expert(const ExperimentConfig& cfg, const Dataset& train, int cluster,
                            const BatchObserver& observer = {});
TrainArmResult train_monolithic(const ExperimentConfig& cfg, const Dataset& train, const BatchObserver& observer = {});
RouterTrainResult train_router_arm(const ExperimentConfig& cfg, const Dataset& train, const Dataset& heldout);

/// Union-trained pair with timestep sampling skewed toward t = 1 (high noise)
/// or t = 0 (low noise), Beta(switch_skew, 1) / Beta(1, switch_skew).
TrainArmResult train_induced(const ExperimentConfig& cfg, const Dataset& train, bool high_noise);

AlignmentProbe fit_probe(const ExperimentConfig& cfg, const Dataset& train);

// ---- sampling -------------------------------------------------------------

SamplerConfig base_sampler(const ExperimentConfig& cfg);
std::uint64_t prompt_noise_seed(const ExperimentConfig& cfg, std::uint64_t index);

/// Samples one clip per prompt with its own noise seed; prompts are sharded
/// across hardware threads.
std::vector<Clip> sample_prompts(std::span<const NetParams> experts, const NetParams* router,
                                 std::span<const Condition> prompts, std::span<const std::uint64_t> noise_seeds,
                                 const SamplerConfig& sampler, int frames, ForwardCounter* counter = nullptr);

/// Hash of everything that defines the generation protocol of one arm.
std::uint64_t protocol_hash(std::span<const Condition> prompts, std::span<const std::uint64_t> noise_seeds,
                            const SamplerConfig& sampler);

// ---- comparison -----------------------------------------------------------

struct RelativeImprovement {
  std::string metric;
  std::string direction;  // "down", "up" or "none"
  double ddm = 0.0;
  double baseline = 0.0;
  double value = 0.0;
};

/// (baseline - ddm) / baseline for down-metrics, (ddm - baseline) / baseline
/// otherwise; motion carries direction "none".
std::vector<RelativeImprovement> relative_improvements(const MetricReport& ddm, const MetricReport& baseline);

struct ComparisonReport {
  std::map<std::string, MetricReport> arms;  // "ddm", "monolithic", "expert_<k>"
  std::vector<RelativeImprovement> relative;
  std::vector<int> prompt_clusters;

  std::string config_hash;
  std::map<std::string, std::string> checkpoint_hashes;
  std::map<std::string, std::string> protocol_hashes;
  std::map<std::string, long> items_consumed;

  std::string to_json() const;
  static ComparisonReport from_json(const std::string& text);
  /// Hash of the provenance block only.
  std::uint64_t provenance_hash() const;
  /// Hash of the full JSON document.
  std::uint64_t report_hash() const;
};

/// Trained state of one comparison run, kept for follow-up probes.
struct TrainedArms {
  Dataset train;
  Dataset eval;
  std::vector<NetParams> experts;
  NetParams monolithic;
  NetParams router;
  AlignmentProbe probe;
};

/// Full pipeline: data, iso-FLOP training of every arm, router, sampling on
/// the stratified held-out prompts, metrics. When `out_dir` is set all
/// artifacts are written there. Stage failures throw StageError.
ComparisonReport run_comparison(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir,
                                TrainedArms* keep = nullptr);

/// Writes report.json, per_prompt.csv and relative_improvement.csv.
void emit_report(const ComparisonReport& report, const std::filesystem::path& out_dir);

// ---- specialization probe -------------------------------------------------

struct SpecializationResult {
  int expert = 0;
  std::vector<double> in_scores;
  std::vector<double> out_scores;
  SpecializationGap gap;

  std::string to_json() const;
};

struct ProbePrompts {
  std::vector<Condition> in_cluster;
  std::vector<std::uint64_t> in_seeds;
  std::vector<Condition> generic;  // uniform mixture over clusters
  std::vector<std::uint64_t> generic_seeds;
};

ProbePrompts specialization_prompts(const ExperimentConfig& cfg, int cluster);

SpecializationResult probe_specialization(const ExperimentConfig& cfg, const NetParams& expert,
                                          const AlignmentProbe& probe, int cluster);

/// Loads expert_<k>.ckpt and the cached training set from out_dir.
SpecializationResult run_specialization_probe(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                              int cluster);

// ---- switching ablation ---------------------------------------------------

inline const char* const kSwitchSingleA = "single_a";
inline const char* const kSwitchSingleB = "single_b";
inline const char* const kSwitchAltA = "alternate_a_first";
inline const char* const kSwitchAltB = "alternate_b_first";

struct SwitchingResult {
  std::map<std::string, MetricReport> schedules;
  std::map<std::string, std::vector<double>> per_prompt;
  int preference = 0;  // prompts preferring an alternating schedule
  int n_prompts = 0;

  double best_single_alignment() const;
  double best_alternating_alignment() const;
  std::string to_json() const;
};

/// Router-bypassed schedules over the pair (a, b) on the first switch_prompts
/// held-out prompts.
SwitchingResult switching_ablation(const ExperimentConfig& cfg, const NetParams& a, const NetParams& b,
                                   const AlignmentProbe& probe, const Dataset& eval);

/// With a pair, uses expert_<a>/expert_<b> from out_dir; without, trains (or
/// reuses) the induced high-noise/low-noise pair.
SwitchingResult run_switching_ablation(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                       std::optional<std::pair<int, int>> pair);

// ---- stage commands used by the CLI -----------------------------------------

void stage_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void stage_train_expert(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int cluster);
void stage_train_monolithic(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void stage_train_router(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

enum class SampleArm { Routed, Single, Schedule, Monolithic };

struct SampleRequest {
  SampleArm arm = SampleArm::Routed;
  int expert = 0;
  std::optional<int> n_steps;
  std::optional<double> cfg_scale;
  std::optional<int> top_k;
  ExpertSchedule schedule;
};

/// Samples the held-out prompts and writes them in the dataset format; returns the file path.
std::filesystem::path stage_sample(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                   const SampleRequest& request);

/// Re-emits the CSV views of an existing report.json.
void stage_report(const std::filesystem::path& report_path, const std::filesystem::path& out_dir);

}  // namespace ddm
