#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ddm/datagen.hpp"
#include "ddm/net.hpp"

namespace ddm {

struct RoutingWeights {
  std::vector<double> weights;  // K entries, zero outside active_set, sum 1
  std::vector<int> active_set;  // ascending expert indices
  int top_k = 1;
};

inline const std::vector<int> kDefaultRouterHidden{32, 32};

/// [F*D + T_w + P, hidden..., K]. The router never gets the full condition.
std::vector<int> router_widths(const GenParams& gp, std::span<const int> hidden = kDefaultRouterHidden);

/// Logits over experts from [x_t ∥ time_features(t) ∥ pooled]. Passing a
/// vector of any other width than P (e.g. the C-dim full condition) is an
/// Error{Shape}.
std::vector<double> router_logits(const NetParams& net, std::span<const double> x_t, double t,
                                  std::span<const double> pooled);

/// Softmax, keep the top_k largest (ties to the lower index), renormalize.
RoutingWeights route_weights(std::span<const double> logits, int top_k);

/// Argmax with ties resolved to the lowest index.
int argmax_lowest(std::span<const double> values);

int predict_cluster(const NetParams& net, std::span<const double> x_t, double t, std::span<const double> pooled);

struct RouterTrainConfig {
  long steps = 2000;
  int batch = 128;
  std::uint64_t seed = 0;
  AdamHyper hyper;
  std::vector<int> hidden = kDefaultRouterHidden;
  long eval_every = 200;
};

struct RouterTrainResult {
  NetParams net;
  OptState opt;
  std::vector<double> losses;
  /// (step, held-out accuracy at t ~ Uniform[0,1]) pairs; the last entry is the final net.
  std::vector<std::pair<long, double>> accuracy_trace;
};

/// Source-cluster classifier over (noisy clip, t, pooled) trained with
/// softmax cross-entropy; t ~ Uniform[0,1] as in flow training.
RouterTrainResult train_router(const Dataset& train, const Dataset& heldout, const RouterTrainConfig& cfg);

/// Accuracy over every held-out item at t ~ Uniform[0,1], `reps` noise draws per item.
double heldout_accuracy(const NetParams& net, const Dataset& heldout, std::uint64_t seed, int reps = 1);

struct BinAccuracy {
  double t_lo = 0.0;
  double t_hi = 0.0;
  double accuracy = 0.0;
  long n = 0;
};

/// Accuracy with t drawn uniformly inside each of `bins` equal-width bins.
std::vector<BinAccuracy> accuracy_by_t(const NetParams& net, const Dataset& heldout, int bins, std::uint64_t seed,
                                       int reps = 1);

/// Accuracy with t drawn uniformly from [t_lo, t_hi].
double accuracy_in_range(const NetParams& net, const Dataset& heldout, double t_lo, double t_hi, std::uint64_t seed,
                         int reps = 1);

void write_accuracy_csv(const std::filesystem::path& path, std::span<const BinAccuracy> bins);

}  // namespace ddm
