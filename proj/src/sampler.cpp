#include "ddm/sampler.hpp"

#include <cmath>

#include "ddm/error.hpp"

namespace ddm {

void SamplerConfig::validate(int n_experts) const {
  require(n_experts >= 1, ErrorCode::InvalidArgument, "sampler needs at least one expert");
  require(n_steps >= 1, ErrorCode::InvalidArgument, "n_steps must be >= 1");
  require(std::isfinite(cfg_scale) && cfg_scale >= 0.0, ErrorCode::InvalidArgument, "cfg_scale must be >= 0");
  switch (mode) {
    case SamplerMode::Routed:
      require(top_k >= 1 && top_k <= n_experts, ErrorCode::InvalidArgument,
              "top_k must lie in [1, " + std::to_string(n_experts) + "]");
      break;
    case SamplerMode::Single:
      require(expert >= 0 && expert < n_experts, ErrorCode::InvalidArgument,
              "expert index " + std::to_string(expert) + " out of range");
      break;
    case SamplerMode::Schedule:
      require(static_cast<int>(schedule.size()) == n_steps, ErrorCode::InvalidArgument,
              "schedule length " + std::to_string(schedule.size()) + " != n_steps " + std::to_string(n_steps));
      for (int e : schedule)
        require(e >= 0 && e < n_experts, ErrorCode::InvalidArgument,
                "schedule names expert " + std::to_string(e) + " but only " + std::to_string(n_experts) + " exist");
      break;
  }
}

std::vector<double> guided_velocity(std::span<const double> v_cond, std::span<const double> v_uncond, double s) {
  require(v_cond.size() == v_uncond.size(), ErrorCode::Shape, "conditional and unconditional velocities differ in length");
  std::vector<double> out(v_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v_uncond[i] + s * (v_cond[i] - v_uncond[i]);
  return out;
}

std::vector<double> mixture_velocity(std::span<const NetParams> experts, const RoutingWeights& weights,
                                     std::span<const double> x_t, double t, std::span<const double> cond_full,
                                     double cfg_scale, ForwardCounter* counter, GuidanceOrder order) {
  require(weights.weights.size() == experts.size(), ErrorCode::Shape, "one routing weight per expert required");
  const std::vector<double> null_cond(cond_full.size(), 0.0);
  std::vector<double> out(x_t.size(), 0.0), mix_c, mix_u;
  if (order == GuidanceOrder::PostMix) {
    mix_c.assign(x_t.size(), 0.0);
    mix_u.assign(x_t.size(), 0.0);
  }
  for (int k : weights.active_set) {
    require(k >= 0 && static_cast<std::size_t>(k) < experts.size(), ErrorCode::InvalidArgument, "active expert out of range");
    const auto& net = experts[static_cast<std::size_t>(k)];
    const double w = weights.weights[static_cast<std::size_t>(k)];
    const auto vc = forward_velocity(net, x_t, t, cond_full);
    const auto vu = forward_velocity(net, x_t, t, null_cond);
    if (counter) counter->expert_calls += 2;
    require(vc.size() == x_t.size(), ErrorCode::Shape, "expert output width differs from state width");
    if (order == GuidanceOrder::PerExpert) {
      const auto g = guided_velocity(vc, vu, cfg_scale);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * g[i];
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        mix_c[i] += w * vc[i];
        mix_u[i] += w * vu[i];
      }
    }
  }
  if (order == GuidanceOrder::PostMix) out = guided_velocity(mix_c, mix_u, cfg_scale);
  return out;
}

double step_time(int step, int n_steps) { return 1.0 - static_cast<double>(step) / static_cast<double>(n_steps); }

std::vector<std::vector<double>> euler_integrate(const VelocityFn& velocity, std::span<const double> x_start,
                                                 int n_steps) {
  require(n_steps >= 1, ErrorCode::InvalidArgument, "n_steps must be >= 1");
  const double dt = -1.0 / static_cast<double>(n_steps);
  std::vector<std::vector<double>> traj;
  traj.reserve(static_cast<std::size_t>(n_steps) + 1);
  traj.emplace_back(x_start.begin(), x_start.end());
  for (int i = 0; i < n_steps; ++i) {
    const auto& x = traj.back();
    const auto v = velocity(x, step_time(i, n_steps), i);
    require(v.size() == x.size(), ErrorCode::Shape, "velocity width differs from state width");
    std::vector<double> next(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      next[j] = x[j] + dt * v[j];
      if (!std::isfinite(next[j])) fail(ErrorCode::Numeric, "non-finite ODE state at step " + std::to_string(i));
    }
    traj.push_back(std::move(next));
  }
  return traj;
}

Clip sample(std::span<const NetParams> experts, const NetParams* router, const Condition& cond,
            const SamplerConfig& cfg, int frames, Rng& rng, ForwardCounter* counter) {
  const int k = static_cast<int>(experts.size());
  cfg.validate(k);
  require(cfg.mode != SamplerMode::Routed || router != nullptr, ErrorCode::InvalidArgument, "routed sampling needs a router");
  const int width = experts.front().output_width();
  require(frames >= 1 && width % frames == 0, ErrorCode::Shape, "expert output width is not a multiple of F");

  std::vector<double> x0(static_cast<std::size_t>(width));
  for (double& v : x0) v = rng.normal();

  auto one_hot = [k](int e) {
    RoutingWeights rw;
    rw.weights.assign(static_cast<std::size_t>(k), 0.0);
    rw.weights[static_cast<std::size_t>(e)] = 1.0;
    rw.active_set = {e};
    rw.top_k = 1;
    return rw;
  };

  const VelocityFn velocity = [&](std::span<const double> x, double t, int step) {
    RoutingWeights rw;
    switch (cfg.mode) {
      case SamplerMode::Routed:
        rw = route_weights(router_logits(*router, x, t, cond.pooled), cfg.top_k);
        if (counter) counter->router_calls += 1;
        break;
      case SamplerMode::Single:
        rw = one_hot(cfg.expert);
        break;
      case SamplerMode::Schedule:
        rw = one_hot(cfg.schedule[static_cast<std::size_t>(step)]);
        break;
    }
    return mixture_velocity(experts, rw, x, t, cond.full, cfg.cfg_scale, counter, cfg.guidance);
  };

  auto traj = euler_integrate(velocity, x0, cfg.n_steps);
  return Clip(frames, width / frames, std::move(traj.back()));
}

ExpertSchedule alternating_schedule(int n_steps, int a, int b, int start) {
  require(n_steps >= 1, ErrorCode::InvalidArgument, "n_steps must be >= 1");
  require(a != b, ErrorCode::InvalidArgument, "alternating schedule needs two distinct experts");
  require(start == a || start == b, ErrorCode::InvalidArgument, "start must be one of the pair");
  const int other = start == a ? b : a;
  ExpertSchedule s(static_cast<std::size_t>(n_steps));
  for (int i = 0; i < n_steps; ++i) s[static_cast<std::size_t>(i)] = (i % 2 == 0) ? start : other;
  return s;
}

}  // namespace ddm
