#include "ddm/flow.hpp"

#include <cmath>
#include <fstream>

#include "ddm/binary_io.hpp"
#include "ddm/error.hpp"

namespace ddm {

std::vector<double> interpolate_path(std::span<const double> x0, std::span<const double> eps, double t) {
  require(x0.size() == eps.size(), ErrorCode::Shape, "x0 and eps differ in length");
  require(t >= 0.0 && t <= 1.0, ErrorCode::InvalidArgument, "t must lie in [0, 1]");
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * eps[i];
  return out;
}

std::vector<double> target_velocity(std::span<const double> x0, std::span<const double> eps) {
  require(x0.size() == eps.size(), ErrorCode::Shape, "x0 and eps differ in length");
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps[i] - x0[i];
  return out;
}

double TimeDistribution::sample(Rng& rng) const {
  switch (kind) {
    case Kind::Uniform: return rng.uniform();
    case Kind::SkewHigh: return std::pow(rng.uniform(), 1.0 / shape);
    case Kind::SkewLow: return 1.0 - std::pow(rng.uniform(), 1.0 / shape);
  }
  return rng.uniform();
}

std::vector<FlowBatchItem> make_flow_batch(const Dataset& ds, std::span<const std::size_t> pool, int batch,
                                           double p_drop, Rng& rng, const TimeDistribution& tdist) {
  require(!pool.empty(), ErrorCode::InvalidArgument, "cannot draw a flow batch from an empty dataset");
  require(batch >= 1, ErrorCode::InvalidArgument, "batch size must be >= 1");
  require(p_drop >= 0.0 && p_drop < 1.0, ErrorCode::InvalidArgument, "p_drop must lie in [0, 1)");
  require(tdist.shape > 0.0, ErrorCode::InvalidArgument, "time distribution shape must be positive");

  std::vector<FlowBatchItem> out(static_cast<std::size_t>(batch));
  for (auto& b : out) {
    b.source = pool[rng.below(pool.size())];
    const Item& it = ds.items[b.source];
    b.cluster = it.cond.cluster;
    b.x0 = it.clip.data();
    b.t = tdist.sample(rng);
    b.null_cond = rng.uniform() < p_drop;
    b.cond = b.null_cond ? std::vector<double>(it.cond.full.size(), 0.0) : it.cond.full;
    b.eps.resize(b.x0.size());
    for (double& e : b.eps) e = rng.normal();
    b.x_t = interpolate_path(b.x0, b.eps, b.t);
    b.target = target_velocity(b.x0, b.eps);
  }
  return out;
}

std::vector<FlowBatchItem> make_flow_batch(const Dataset& ds, int batch, double p_drop, Rng& rng) {
  std::vector<std::size_t> pool(ds.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  return make_flow_batch(ds, pool, batch, p_drop, rng);
}

void batch_matrices(std::span<const FlowBatchItem> batch, Eigen::MatrixXd& inputs, Eigen::MatrixXd& targets) {
  require(!batch.empty(), ErrorCode::InvalidArgument, "empty batch");
  const auto& first = batch.front();
  const Eigen::Index in_w = static_cast<Eigen::Index>(first.x_t.size() + kTimeFeatures + first.cond.size());
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  inputs.resize(in_w, n);
  targets.resize(static_cast<Eigen::Index>(first.target.size()), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& b = batch[static_cast<std::size_t>(j)];
    inputs.col(j) = assemble_input(b.x_t, b.t, b.cond);
    targets.col(j) = Eigen::Map<const Eigen::VectorXd>(b.target.data(), static_cast<Eigen::Index>(b.target.size()));
  }
}

TrainArmResult train_arm(const TrainArmConfig& cfg, const Dataset& ds, const NetParams& init,
                         const BatchObserver& observer) {
  require(cfg.steps >= 0, ErrorCode::InvalidArgument, "steps must be >= 0");
  std::vector<std::size_t> pool;
  if (cfg.kind == ArmKind::Expert) {
    pool = ds.indices_of(cfg.cluster);
  } else {
    pool.resize(ds.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  }
  require(!pool.empty(), ErrorCode::InvalidArgument,
          cfg.kind == ArmKind::Expert ? "no training items for cluster " + std::to_string(cfg.cluster)
                                      : std::string("empty training set"));

  TrainArmResult res{init, init_opt_state(init, cfg.hyper), {}, 0};
  res.losses.reserve(static_cast<std::size_t>(cfg.steps));
  Rng rng(cfg.seed);
  Eigen::MatrixXd inputs, targets;
  for (long step = 0; step < cfg.steps; ++step) {
    const auto batch = make_flow_batch(ds, pool, cfg.batch, cfg.p_drop, rng, cfg.tdist);
    if (observer) observer(step, batch);
    batch_matrices(batch, inputs, targets);
    LossAndGradients lg;
    try {
      lg = mse_loss_and_gradients(res.net, inputs, targets);
    } catch (const DivergenceError&) {
      throw DivergenceError(step, "training diverged at step " + std::to_string(step));
    }
    adam_step(res.net, res.opt, lg.grads);
    res.losses.push_back(lg.loss);
    res.items_consumed += cfg.batch;
  }
  return res;
}

std::vector<int> velocity_widths(const GenParams& gp, std::span<const int> hidden) {
  std::vector<int> w{gp.clip_size() + kTimeFeatures + gp.cond_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(gp.clip_size());
  return w;
}

IsoFlopSplit iso_flop_split(long total_steps, int clusters) {
  require(clusters >= 1, ErrorCode::InvalidArgument, "K must be >= 1");
  require(total_steps >= 0, ErrorCode::InvalidArgument, "total_steps must be >= 0");
  if (total_steps % clusters != 0) {
    const long down = total_steps - total_steps % clusters;
    fail(ErrorCode::InvalidArgument, "total_steps=" + std::to_string(total_steps) + " is not divisible by K=" +
                                         std::to_string(clusters) + "; round to " + std::to_string(down) + " or " +
                                         std::to_string(down + clusters));
  }
  return {total_steps, std::vector<long>(static_cast<std::size_t>(clusters), total_steps / clusters)};
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> losses) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i) + "," + format_double(losses[i]) + "\n";
  write_text_file(path, out);
}

}  // namespace ddm
