#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddm/error.hpp"
#include "ddm/net.hpp"
#include "ddm/rng.hpp"
#include "ddm/router.hpp"
#include "oracles.hpp"

namespace testutil {

/// Error code thrown by `fn`, or Internal when it returns normally.
template <class F>
ddm::ErrorCode code_of(F&& fn) {
  try {
    fn();
  } catch (const ddm::Error& e) {
    return e.code();
  }
  return ddm::ErrorCode::Internal;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ddm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Random regression batch matching a velocity net of the given widths;
/// the condition width is whatever remains after x_t and the time features.
inline std::vector<ddm::RegressionExample> random_batch(const ddm::NetParams& net, int n, int x_width,
                                                        std::uint64_t seed) {
  ddm::Rng rng(seed);
  const int cond_width = net.input_width() - x_width - ddm::kTimeFeatures;
  std::vector<ddm::RegressionExample> batch(static_cast<std::size_t>(n));
  for (auto& ex : batch) {
    for (int i = 0; i < x_width; ++i) ex.x_t.push_back(rng.normal());
    ex.t = rng.uniform();
    for (int i = 0; i < cond_width; ++i) ex.cond.push_back(rng.normal());
    for (int i = 0; i < net.output_width(); ++i) ex.target.push_back(rng.normal());
  }
  return batch;
}

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares analytic gradients to central differences on `n_params`
/// uniformly drawn parameter indices. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8).
inline GradientCheck check_gradients(const ddm::NetParams& net, const std::vector<ddm::RegressionExample>& batch,
                                     std::size_t n_params, std::uint64_t seed, double h = 1e-5) {
  const auto analytic = ddm::loss_and_gradients(net, batch).grads.flatten();
  ddm::Rng rng(seed);
  GradientCheck out;
  for (std::size_t i = 0; i < n_params; ++i) {
    const auto idx = static_cast<std::size_t>(rng.below(analytic.size()));
    const double numeric = oracle::central_difference(net, batch, idx, h);
    const double a = analytic[idx];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    out.max_rel_error = std::max(out.max_rel_error, rel);
    ++out.checked;
  }
  return out;
}

struct RoutingProperty {
  long vectors = 0;
  long violations = 0;
  std::string first_violation;
};

/// Property test of route_weights over random logit vectors: nonnegativity,
/// sum to one within 1e-9, zeros exactly outside the active set, active set =
/// the top_k largest logits with ties to the lower index, and invariance to
/// adding a constant to every logit.
inline RoutingProperty check_routing_invariants(long n_vectors, std::uint64_t seed) {
  ddm::Rng rng(seed);
  RoutingProperty out;
  auto violate = [&](const std::string& what) {
    if (out.violations++ == 0) out.first_violation = what;
  };
  for (long v = 0; v < n_vectors; ++v) {
    const int k = 1 + static_cast<int>(rng.below(8));
    const int top_k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    std::vector<double> logits(static_cast<std::size_t>(k));
    const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
    for (auto& l : logits) l = scale * rng.normal();
    // Exact ties exercise the lower-index rule.
    if (k >= 2 && rng.uniform() < 0.2) logits[rng.below(static_cast<std::uint64_t>(k))] = logits[0];
    ++out.vectors;

    const auto rw = ddm::route_weights(logits, top_k);
    double sum = 0.0;
    for (double w : rw.weights) {
      if (!(w >= 0.0)) violate("negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) violate("weights do not sum to one");
    if (static_cast<int>(rw.active_set.size()) != std::min(top_k, k)) violate("active set size");

    // Expected active set: indices sorted by (logit desc, index asc), first top_k.
    std::vector<int> order(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double la = logits[static_cast<std::size_t>(a)], lb = logits[static_cast<std::size_t>(b)];
      return la != lb ? la > lb : a < b;
    });
    std::vector<int> expected(order.begin(), order.begin() + top_k);
    std::sort(expected.begin(), expected.end());
    if (rw.active_set != expected) violate("active set is not the top-k with lowest-index ties");
    for (int i = 0; i < k; ++i) {
      const bool active = std::binary_search(expected.begin(), expected.end(), i);
      const double w = rw.weights[static_cast<std::size_t>(i)];
      if (!active && w != 0.0) violate("nonzero weight outside the active set");
      if (active && !(w > 0.0) && scale < 10.0) violate("zero weight inside the active set");
    }

    const double c = rng.uniform(-50.0, 50.0);
    std::vector<double> shifted(logits);
    for (auto& l : shifted) l += c;
    const auto rs = ddm::route_weights(shifted, top_k);
    if (rs.active_set != rw.active_set) violate("shift changed the active set");
    for (int i = 0; i < k; ++i)
      if (std::abs(rs.weights[static_cast<std::size_t>(i)] - rw.weights[static_cast<std::size_t>(i)]) > 1e-9)
        violate("shift changed the weights");
  }
  return out;
}

}  // namespace testutil
