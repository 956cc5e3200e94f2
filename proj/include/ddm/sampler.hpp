#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ddm/datagen.hpp"
#include "ddm/net.hpp"
#include "ddm/rng.hpp"
#include "ddm/router.hpp"

namespace ddm {

enum class SamplerMode { Routed, Single, Schedule };

/// Where classifier-free guidance is applied relative to the expert mixture.
enum class GuidanceOrder { PerExpert, PostMix };

/// Expert index per denoising step.
using ExpertSchedule = std::vector<int>;

struct SamplerConfig {
  int n_steps = 50;
  double cfg_scale = 7.5;
  int top_k = 1;
  SamplerMode mode = SamplerMode::Routed;
  int expert = 0;           // SamplerMode::Single
  ExpertSchedule schedule;  // SamplerMode::Schedule, length n_steps
  GuidanceOrder guidance = GuidanceOrder::PerExpert;

  void validate(int n_experts) const;
};

/// Instrumentation: network evaluations made while sampling.
struct ForwardCounter {
  long expert_calls = 0;
  long router_calls = 0;
};

/// v_uncond + s (v_cond - v_uncond)
std::vector<double> guided_velocity(std::span<const double> v_cond, std::span<const double> v_uncond, double s);

/// Sum over the active set of weight_k * guided velocity of expert k. Experts
/// outside the active set are not evaluated.
std::vector<double> mixture_velocity(std::span<const NetParams> experts, const RoutingWeights& weights,
                                     std::span<const double> x_t, double t, std::span<const double> cond_full,
                                     double cfg_scale, ForwardCounter* counter = nullptr,
                                     GuidanceOrder order = GuidanceOrder::PerExpert);

using VelocityFn = std::function<std::vector<double>(std::span<const double> x, double t, int step)>;

/// Euler from t = 1 to t = 0: x_{i+1} = x_i - v(x_i, t_i) / n, t_i = 1 - i / n.
/// Returns all n_steps + 1 states.
std::vector<std::vector<double>> euler_integrate(const VelocityFn& velocity, std::span<const double> x_start,
                                                 int n_steps);

double step_time(int step, int n_steps);

/// One sample: x_start ~ N(0, I) from `rng`, then routed / single / scheduled
/// Euler integration. `router` may be null unless mode is Routed.
Clip sample(std::span<const NetParams> experts, const NetParams* router, const Condition& cond,
            const SamplerConfig& cfg, int frames, Rng& rng, ForwardCounter* counter = nullptr);

/// [start, other, start, other, ...] of length n_steps over the pair (a, b).
ExpertSchedule alternating_schedule(int n_steps, int a, int b, int start);

}  // namespace ddm
