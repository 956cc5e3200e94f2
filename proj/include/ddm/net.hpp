#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ddm {

/// Width of the sinusoidal timestep embedding.
inline constexpr int kTimeFeatures = 8;

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Multilayer perceptron with tanh hidden activations and a linear output.
/// Used both for velocity fields (output F*D) and router logits (output K).
struct NetParams {
  std::vector<Layer> layers;

  std::vector<int> widths() const;
  int input_width() const;
  int output_width() const;
  std::size_t param_count() const;

  /// Layer by layer: weight row-major, then bias.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const NetParams& other) const;
};

/// Gradient record; same shapes as the parameters.
using Gradients = NetParams;

void validate_widths(std::span<const int> widths);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
NetParams init_params(std::span<const int> widths, std::uint64_t seed);
NetParams zero_params(std::span<const int> widths);

/// [sin(2 pi f_i t), cos(2 pi f_i t)] pairs for f_i = 1, 2, 4, ...
std::vector<double> time_features(double t, int width = kTimeFeatures);

/// Column [x ∥ time_features(t) ∥ cond].
Eigen::VectorXd assemble_input(std::span<const double> x, double t, std::span<const double> cond);

/// Batched forward pass; one example per column.
Eigen::MatrixXd forward(const NetParams& net, const Eigen::MatrixXd& inputs);

/// Single-example forward over [x_t ∥ time_features(t) ∥ cond]. Throws Error{Shape}
/// when the concatenated width does not match the network input.
std::vector<double> forward_velocity(const NetParams& net, std::span<const double> x_t, double t,
                                     std::span<const double> cond);

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Mean over batch and output coordinates of the squared error. Throws
/// DivergenceError when the loss is not finite.
LossAndGradients mse_loss_and_gradients(const NetParams& net, const Eigen::MatrixXd& inputs,
                                        const Eigen::MatrixXd& targets);

/// Mean softmax cross-entropy against integer labels (router training).
LossAndGradients cross_entropy_and_gradients(const NetParams& net, const Eigen::MatrixXd& inputs,
                                             std::span<const int> labels);

struct RegressionExample {
  std::vector<double> x_t;
  double t = 0.0;
  std::vector<double> cond;
  std::vector<double> target;
};

LossAndGradients loss_and_gradients(const NetParams& net, std::span<const RegressionExample> batch);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamHyper&) const = default;
};

struct OptState {
  NetParams m;
  NetParams v;
  long step = 0;
  AdamHyper hyper;

  bool operator==(const OptState&) const = default;
};

OptState init_opt_state(const NetParams& net, const AdamHyper& hyper = {});

/// In-place bias-corrected Adam step; rejects non-finite gradients.
void adam_step(NetParams& net, OptState& opt, const Gradients& grads);

struct AdamResult {
  NetParams net;
  OptState opt;
};

/// Value form of adam_step.
AdamResult adam_update(const NetParams& net, const Gradients& grads, const OptState& opt);

struct Checkpoint {
  std::string kind;  // "expert", "monolithic", "router", ...
  NetParams net;
  OptState opt;
};

inline constexpr const char* kCheckpointMagic = "DDMLAB-NET";

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws Error{Shape} when `expected_widths` is non-empty and differs from the file.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::span<const int> expected_widths = {});
Checkpoint checkpoint_roundtrip(const Checkpoint& ckpt, const std::filesystem::path& path);

std::uint64_t params_hash(const NetParams& net);

}  // namespace ddm
