#include "ddm/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ddm/binary_io.hpp"
#include "ddm/error.hpp"
#include "ddm/flow.hpp"
#include "ddm/rng.hpp"

namespace ddm {

std::vector<int> router_widths(const GenParams& gp, std::span<const int> hidden) {
  std::vector<int> w{gp.clip_size() + kTimeFeatures + gp.pooled_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(gp.clusters);
  return w;
}

std::vector<double> router_logits(const NetParams& net, std::span<const double> x_t, double t,
                                  std::span<const double> pooled) {
  const long expected = static_cast<long>(net.input_width()) - static_cast<long>(x_t.size()) - kTimeFeatures;
  if (static_cast<long>(pooled.size()) != expected)
    fail(ErrorCode::Shape, "router expects a pooled condition of width " + std::to_string(expected) + ", got " +
                               std::to_string(pooled.size()) + " (the router never reads the full condition)");
  return forward_velocity(net, x_t, t, pooled);
}

int argmax_lowest(std::span<const double> values) {
  require(!values.empty(), ErrorCode::InvalidArgument, "argmax of an empty vector");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

RoutingWeights route_weights(std::span<const double> logits, int top_k) {
  const int k = static_cast<int>(logits.size());
  require(k >= 1, ErrorCode::InvalidArgument, "no logits");
  require(top_k >= 1 && top_k <= k, ErrorCode::InvalidArgument,
          "top_k=" + std::to_string(top_k) + " outside [1, " + std::to_string(k) + "]");
  for (double l : logits) require(std::isfinite(l), ErrorCode::Numeric, "non-finite router logit");

  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)]; });

  RoutingWeights rw;
  rw.top_k = top_k;
  rw.active_set.assign(order.begin(), order.begin() + top_k);
  std::sort(rw.active_set.begin(), rw.active_set.end());

  // Softmax restricted to the kept entries equals truncate-then-renormalize.
  const double mx = logits[static_cast<std::size_t>(order.front())];
  rw.weights.assign(static_cast<std::size_t>(k), 0.0);
  double z = 0.0;
  for (int i : rw.active_set) z += rw.weights[static_cast<std::size_t>(i)] = std::exp(logits[static_cast<std::size_t>(i)] - mx);
  for (int i : rw.active_set) rw.weights[static_cast<std::size_t>(i)] /= z;
  return rw;
}

int predict_cluster(const NetParams& net, std::span<const double> x_t, double t, std::span<const double> pooled) {
  return argmax_lowest(router_logits(net, x_t, t, pooled));
}

namespace {

struct NoisyBatch {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
};

/// One noisy example per (item, rep): x_t on the flow path at t drawn from [t_lo, t_hi].
NoisyBatch noisy_examples(const Dataset& ds, std::span<const std::size_t> picks, double t_lo, double t_hi, Rng& rng) {
  const auto& gp = ds.params;
  NoisyBatch b;
  const Eigen::Index w = gp.clip_size() + kTimeFeatures + gp.pooled_dim;
  b.inputs.resize(w, static_cast<Eigen::Index>(picks.size()));
  b.labels.reserve(picks.size());
  std::vector<double> eps(static_cast<std::size_t>(gp.clip_size()));
  for (std::size_t j = 0; j < picks.size(); ++j) {
    const Item& it = ds.items[picks[j]];
    const double t = rng.uniform(t_lo, t_hi);
    for (double& e : eps) e = rng.normal();
    const auto x_t = interpolate_path(it.clip.flat(), eps, t);
    b.inputs.col(static_cast<Eigen::Index>(j)) = assemble_input(x_t, t, it.cond.pooled);
    b.labels.push_back(it.cond.cluster);
  }
  return b;
}

double accuracy_of(const NetParams& net, const NoisyBatch& b) {
  const Eigen::MatrixXd logits = forward(net, b.inputs);
  long correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const Eigen::VectorXd col = logits.col(j);
    if (argmax_lowest(std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))) ==
        b.labels[static_cast<std::size_t>(j)])
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.cols());
}

std::vector<std::size_t> repeated_indices(std::size_t n, int reps) {
  std::vector<std::size_t> picks;
  picks.reserve(n * static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < n; ++i) picks.push_back(i);
  return picks;
}

}  // namespace

double accuracy_in_range(const NetParams& net, const Dataset& heldout, double t_lo, double t_hi, std::uint64_t seed,
                         int reps) {
  require(!heldout.items.empty(), ErrorCode::InvalidArgument, "empty held-out set");
  require(0.0 <= t_lo && t_lo <= t_hi && t_hi <= 1.0, ErrorCode::InvalidArgument, "bad t range");
  Rng rng(seed);
  const auto picks = repeated_indices(heldout.size(), reps);
  return accuracy_of(net, noisy_examples(heldout, picks, t_lo, t_hi, rng));
}

double heldout_accuracy(const NetParams& net, const Dataset& heldout, std::uint64_t seed, int reps) {
  return accuracy_in_range(net, heldout, 0.0, 1.0, seed, reps);
}

std::vector<BinAccuracy> accuracy_by_t(const NetParams& net, const Dataset& heldout, int bins, std::uint64_t seed,
                                       int reps) {
  require(bins >= 1, ErrorCode::InvalidArgument, "need at least one bin");
  std::vector<BinAccuracy> out;
  for (int b = 0; b < bins; ++b) {
    BinAccuracy ba;
    ba.t_lo = static_cast<double>(b) / bins;
    ba.t_hi = static_cast<double>(b + 1) / bins;
    ba.accuracy = accuracy_in_range(net, heldout, ba.t_lo, ba.t_hi, derive_seed(seed, {static_cast<std::uint64_t>(b)}), reps);
    ba.n = static_cast<long>(heldout.size()) * reps;
    out.push_back(ba);
  }
  return out;
}

RouterTrainResult train_router(const Dataset& train, const Dataset& heldout, const RouterTrainConfig& cfg) {
  const auto& gp = train.params;
  require(cfg.steps >= 0 && cfg.batch >= 1, ErrorCode::InvalidArgument, "router steps/batch invalid");
  for (int k = 0; k < gp.clusters; ++k)
    require(!train.indices_of(k).empty(), ErrorCode::InvalidArgument,
            "router training data has no items of cluster " + std::to_string(k));

  RouterTrainResult res;
  res.net = init_params(router_widths(gp, cfg.hidden), derive_seed(cfg.seed, {0}));
  res.opt = init_opt_state(res.net, cfg.hyper);
  Rng rng(derive_seed(cfg.seed, {1}));
  const std::uint64_t eval_seed = derive_seed(cfg.seed, {2});

  std::vector<std::size_t> picks(static_cast<std::size_t>(cfg.batch));
  for (long step = 0; step < cfg.steps; ++step) {
    for (auto& p : picks) p = rng.below(train.size());
    const NoisyBatch b = noisy_examples(train, picks, 0.0, 1.0, rng);
    LossAndGradients lg;
    try {
      lg = cross_entropy_and_gradients(res.net, b.inputs, b.labels);
    } catch (const DivergenceError&) {
      throw DivergenceError(step, "router training diverged at step " + std::to_string(step));
    }
    adam_step(res.net, res.opt, lg.grads);
    res.losses.push_back(lg.loss);
    if (!heldout.items.empty() && cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0)
      res.accuracy_trace.emplace_back(step + 1, heldout_accuracy(res.net, heldout, eval_seed));
  }
  if (!heldout.items.empty() && (res.accuracy_trace.empty() || res.accuracy_trace.back().first != cfg.steps))
    res.accuracy_trace.emplace_back(cfg.steps, heldout_accuracy(res.net, heldout, eval_seed));
  return res;
}

void write_accuracy_csv(const std::filesystem::path& path, std::span<const BinAccuracy> bins) {
  std::string out = "t_bin,accuracy\n";
  for (const auto& b : bins) out += format_double(0.5 * (b.t_lo + b.t_hi)) + "," + format_double(b.accuracy) + "\n";
  write_text_file(path, out);
}

}  // namespace ddm
