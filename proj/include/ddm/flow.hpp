#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "ddm/datagen.hpp"
#include "ddm/net.hpp"
#include "ddm/rng.hpp"

namespace ddm {

/// Linear path x_t = (1 - t) x0 + t eps; t = 1 is pure noise.
std::vector<double> interpolate_path(std::span<const double> x0, std::span<const double> eps, double t);

/// d/dt of the linear path: eps - x0.
std::vector<double> target_velocity(std::span<const double> x0, std::span<const double> eps);

/// Timestep distribution for training. Uniform by default; the skewed
/// variants are Beta(shape, 1) (mass near t = 1) and Beta(1, shape) (mass near 0).
struct TimeDistribution {
  enum class Kind { Uniform, SkewHigh, SkewLow };
  Kind kind = Kind::Uniform;
  double shape = 1.0;

  double sample(Rng& rng) const;
};

struct FlowBatchItem {
  std::size_t source = 0;  // dataset index
  int cluster = 0;
  std::vector<double> x0;
  std::vector<double> eps;
  double t = 0.0;
  std::vector<double> cond;  // full condition, or zeros when dropped
  bool null_cond = false;
  std::vector<double> x_t;
  std::vector<double> target;
};

/// Samples `batch` items uniformly with replacement from `pool` (dataset indices).
std::vector<FlowBatchItem> make_flow_batch(const Dataset& ds, std::span<const std::size_t> pool, int batch,
                                           double p_drop, Rng& rng, const TimeDistribution& tdist = {});
std::vector<FlowBatchItem> make_flow_batch(const Dataset& ds, int batch, double p_drop, Rng& rng);

/// [x_t ∥ time_features(t) ∥ cond] columns and target columns for a batch.
void batch_matrices(std::span<const FlowBatchItem> batch, Eigen::MatrixXd& inputs, Eigen::MatrixXd& targets);

enum class ArmKind { Expert, Monolithic };

struct TrainArmConfig {
  ArmKind kind = ArmKind::Monolithic;
  int cluster = 0;  // expert arms only
  long steps = 0;
  int batch = 64;
  double p_drop = 0.1;
  std::uint64_t seed = 0;  // batch stream
  AdamHyper hyper;
  TimeDistribution tdist;
};

struct TrainArmResult {
  NetParams net;
  OptState opt;
  std::vector<double> losses;
  long items_consumed = 0;
};

using BatchObserver = std::function<void(long step, std::span<const FlowBatchItem>)>;

/// Runs `steps` Adam updates of the flow-matching objective. Reads nothing
/// but its arguments; expert arms see only items of their own cluster.
/// Throws DivergenceError carrying the step index on a non-finite loss.
TrainArmResult train_arm(const TrainArmConfig& cfg, const Dataset& ds, const NetParams& init,
                         const BatchObserver& observer = {});

/// [F*D + T_w + C, hidden..., F*D]
std::vector<int> velocity_widths(const GenParams& gp, std::span<const int> hidden);
inline const std::vector<int> kDefaultExpertHidden{128, 128, 128};

struct IsoFlopSplit {
  long monolithic_steps = 0;
  std::vector<long> expert_steps;
};

/// Monolithic arm gets total_steps, each of K experts total_steps / K.
IsoFlopSplit iso_flop_split(long total_steps, int clusters);

void write_loss_csv(const std::filesystem::path& path, std::span<const double> losses);

}  // namespace ddm
