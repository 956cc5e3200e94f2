#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ddm/datagen.hpp"
#include "ddm/flow.hpp"
#include "ddm/router.hpp"
#include "ddm/sampler.hpp"

namespace ddm {

/// Everything an experiment run depends on. Seeds are always explicit;
/// per-arm seeds are derived from train_seed deterministically.
struct ExperimentConfig {
  GenParams data;
  long n_train = 1000;  // per cluster
  long n_eval = 300;

  long total_steps = 6000;
  int batch = 512;
  double p_drop = 0.1;
  double lr = 1e-3;
  std::vector<int> expert_hidden = kDefaultExpertHidden;

  long router_steps = 2000;
  int router_batch = 128;
  std::vector<int> router_hidden = kDefaultRouterHidden;

  int n_steps = 50;
  double cfg_scale = 7.5;
  int top_k = 1;
  GuidanceOrder guidance = GuidanceOrder::PerExpert;

  std::uint64_t data_seed = 0;
  std::uint64_t train_seed = 1;
  std::uint64_t eval_seed = 2;

  int switch_prompts = 40;
  double switch_skew = 2.0;  // Beta shape of the induced high/low-noise experts
  long switch_steps = 0;     // 0: total_steps

  long probe_prompts = 100;  // per prompt set of the specialization probe
  double probe_lambda = 1e-3;
  double frechet_reg = 1e-6;

  std::string out_dir = "out";

  void validate() const;
  /// key=value text of every experimental field (out_dir excluded).
  std::string canonical() const;
  std::uint64_t hash() const;
  long effective_switch_steps() const { return switch_steps > 0 ? switch_steps : total_steps; }
};

/// Fields a config file must set.
inline const std::vector<std::string> kRequiredConfigKeys{"data_seed"};

/// Sets one field from its textual value. Unknown keys and malformed values
/// throw Error{Config}.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Parses `key = value` lines; '#' starts a comment.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace ddm
