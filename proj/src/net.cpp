#include "ddm/net.hpp"

#include <cmath>
#include <numbers>

#include "ddm/binary_io.hpp"
#include "ddm/error.hpp"
#include "ddm/rng.hpp"

namespace ddm {

std::vector<int> NetParams::widths() const {
  std::vector<int> w;
  if (layers.empty()) return w;
  w.push_back(static_cast<int>(layers.front().weight.cols()));
  for (const auto& l : layers) w.push_back(static_cast<int>(l.weight.rows()));
  return w;
}

int NetParams::input_width() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
int NetParams::output_width() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

std::size_t NetParams::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<double> NetParams::flatten() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
  }
  return out;
}

void NetParams::assign(std::span<const double> flat) {
  require(flat.size() == param_count(), ErrorCode::Shape, "flat parameter vector has the wrong length");
  std::size_t i = 0;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[i++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = flat[i++];
  }
}

bool NetParams::operator==(const NetParams& other) const {
  if (widths() != other.widths()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!(layers[i].weight.array() == other.layers[i].weight.array()).all()) return false;
    if (!(layers[i].bias.array() == other.layers[i].bias.array()).all()) return false;
  }
  return true;
}

void validate_widths(std::span<const int> widths) {
  require(widths.size() >= 2, ErrorCode::InvalidArgument, "a network needs at least two widths");
  for (int w : widths) require(w > 0, ErrorCode::InvalidArgument, "layer widths must be positive");
}

NetParams zero_params(std::span<const int> widths) {
  validate_widths(widths);
  NetParams net;
  for (std::size_t i = 1; i < widths.size(); ++i)
    net.layers.push_back({Eigen::MatrixXd::Zero(widths[i], widths[i - 1]), Eigen::VectorXd::Zero(widths[i])});
  return net;
}

NetParams init_params(std::span<const int> widths, std::uint64_t seed) {
  NetParams net = zero_params(widths);
  Rng rng(seed);
  for (auto& l : net.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-bound, bound);
  }
  return net;
}

std::vector<double> time_features(double t, int width) {
  require(t >= 0.0 && t <= 1.0, ErrorCode::InvalidArgument, "timestep must lie in [0, 1]");
  require(width >= 2 && width % 2 == 0, ErrorCode::InvalidArgument, "time feature width must be even");
  std::vector<double> out(static_cast<std::size_t>(width));
  double freq = 1.0;
  for (int i = 0; i < width / 2; ++i, freq *= 2.0) {
    const double a = 2.0 * std::numbers::pi * freq * t;
    out[2 * static_cast<std::size_t>(i)] = std::sin(a);
    out[2 * static_cast<std::size_t>(i) + 1] = std::cos(a);
  }
  return out;
}

Eigen::VectorXd assemble_input(std::span<const double> x, double t, std::span<const double> cond) {
  const auto tf = time_features(t);
  Eigen::VectorXd in(static_cast<Eigen::Index>(x.size() + tf.size() + cond.size()));
  Eigen::Index i = 0;
  for (double v : x) in(i++) = v;
  for (double v : tf) in(i++) = v;
  for (double v : cond) in(i++) = v;
  return in;
}

namespace {

void check_input(const NetParams& net, Eigen::Index rows) {
  require(!net.layers.empty(), ErrorCode::Shape, "empty network");
  require(rows == net.input_width(), ErrorCode::Shape,
          "input width " + std::to_string(rows) + " does not match network input width " +
              std::to_string(net.input_width()));
}

/// Forward pass that keeps every activation for backprop; acts[0] is the input.
std::vector<Eigen::MatrixXd> forward_cached(const NetParams& net, const Eigen::MatrixXd& inputs) {
  check_input(net, inputs.rows());
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(net.layers.size() + 1);
  acts.push_back(inputs);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    Eigen::MatrixXd z = l.weight * acts.back();
    z.colwise() += l.bias;
    if (i + 1 < net.layers.size()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

Gradients backward(const NetParams& net, const std::vector<Eigen::MatrixXd>& acts, Eigen::MatrixXd dz) {
  Gradients g;
  g.layers.resize(net.layers.size());
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    g.layers[i].weight = dz * acts[i].transpose();
    g.layers[i].bias = dz.rowwise().sum();
    if (i > 0) {
      Eigen::MatrixXd da = net.layers[i].weight.transpose() * dz;
      dz = (da.array() * (1.0 - acts[i].array().square())).matrix();
    }
  }
  return g;
}

}  // namespace

Eigen::MatrixXd forward(const NetParams& net, const Eigen::MatrixXd& inputs) {
  check_input(net, inputs.rows());
  Eigen::MatrixXd a = inputs;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    Eigen::MatrixXd z = l.weight * a;
    z.colwise() += l.bias;
    if (i + 1 < net.layers.size()) z = z.array().tanh().matrix();
    a = std::move(z);
  }
  return a;
}

std::vector<double> forward_velocity(const NetParams& net, std::span<const double> x_t, double t,
                                     std::span<const double> cond) {
  const Eigen::VectorXd in = assemble_input(x_t, t, cond);
  check_input(net, in.size());
  Eigen::VectorXd a = in;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    Eigen::VectorXd z = l.weight * a + l.bias;
    if (i + 1 < net.layers.size()) z = z.array().tanh().matrix();
    a = std::move(z);
  }
  return std::vector<double>(a.data(), a.data() + a.size());
}

LossAndGradients mse_loss_and_gradients(const NetParams& net, const Eigen::MatrixXd& inputs,
                                        const Eigen::MatrixXd& targets) {
  require(inputs.cols() > 0, ErrorCode::InvalidArgument, "empty batch");
  require(targets.cols() == inputs.cols() && targets.rows() == net.output_width(), ErrorCode::Shape,
          "target shape does not match network output");
  const auto acts = forward_cached(net, inputs);
  const Eigen::MatrixXd resid = acts.back() - targets;
  const double denom = static_cast<double>(resid.size());
  const double loss = resid.squaredNorm() / denom;
  if (!std::isfinite(loss)) throw DivergenceError(-1, "non-finite regression loss");
  return {loss, backward(net, acts, (2.0 / denom) * resid)};
}

LossAndGradients cross_entropy_and_gradients(const NetParams& net, const Eigen::MatrixXd& inputs,
                                             std::span<const int> labels) {
  require(inputs.cols() > 0, ErrorCode::InvalidArgument, "empty batch");
  require(static_cast<Eigen::Index>(labels.size()) == inputs.cols(), ErrorCode::Shape, "one label per column required");
  const auto acts = forward_cached(net, inputs);
  const Eigen::MatrixXd& logits = acts.back();
  const Eigen::Index k = logits.rows(), b = logits.cols();
  Eigen::MatrixXd dz(k, b);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < b; ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    require(y >= 0 && y < k, ErrorCode::InvalidArgument, "label out of range");
    const double mx = logits.col(j).maxCoeff();
    const Eigen::VectorXd e = (logits.col(j).array() - mx).exp().matrix();
    const double z = e.sum();
    loss += std::log(z) - (logits(y, j) - mx);
    dz.col(j) = e / z;
    dz(y, j) -= 1.0;
  }
  loss /= static_cast<double>(b);
  if (!std::isfinite(loss)) throw DivergenceError(-1, "non-finite cross-entropy loss");
  dz /= static_cast<double>(b);
  return {loss, backward(net, acts, std::move(dz))};
}

LossAndGradients loss_and_gradients(const NetParams& net, std::span<const RegressionExample> batch) {
  require(!batch.empty(), ErrorCode::InvalidArgument, "empty batch");
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd in(net.input_width(), n), tgt(net.output_width(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& ex = batch[static_cast<std::size_t>(j)];
    const Eigen::VectorXd col = assemble_input(ex.x_t, ex.t, ex.cond);
    check_input(net, col.size());
    require(static_cast<Eigen::Index>(ex.target.size()) == net.output_width(), ErrorCode::Shape,
            "target width does not match network output");
    in.col(j) = col;
    tgt.col(j) = Eigen::Map<const Eigen::VectorXd>(ex.target.data(), static_cast<Eigen::Index>(ex.target.size()));
  }
  return mse_loss_and_gradients(net, in, tgt);
}

OptState init_opt_state(const NetParams& net, const AdamHyper& hyper) {
  require(hyper.lr > 0 && hyper.beta1 > 0 && hyper.beta1 < 1 && hyper.beta2 > 0 && hyper.beta2 < 1 && hyper.eps > 0,
          ErrorCode::InvalidArgument, "Adam hyperparameters must be positive (betas below 1)");
  const auto w = net.widths();
  return {zero_params(w), zero_params(w), 0, hyper};
}

void adam_step(NetParams& net, OptState& opt, const Gradients& grads) {
  const auto w = net.widths();
  require(grads.widths() == w && opt.m.widths() == w && opt.v.widths() == w, ErrorCode::Shape,
          "gradient/optimizer shapes do not match parameters");
  for (const auto& l : grads.layers)
    require(l.weight.allFinite() && l.bias.allFinite(), ErrorCode::Numeric, "non-finite gradient entry");

  const auto& h = opt.hyper;
  opt.step += 1;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(opt.step));
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m.array() = h.beta1 * m.array() + (1.0 - h.beta1) * g.array();
    v.array() = h.beta2 * v.array() + (1.0 - h.beta2) * g.array().square();
    p.array() -= h.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + h.eps);
  };
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    update(net.layers[i].weight, opt.m.layers[i].weight, opt.v.layers[i].weight, grads.layers[i].weight);
    update(net.layers[i].bias, opt.m.layers[i].bias, opt.v.layers[i].bias, grads.layers[i].bias);
  }
}

AdamResult adam_update(const NetParams& net, const Gradients& grads, const OptState& opt) {
  AdamResult r{net, opt};
  adam_step(r.net, r.opt, grads);
  return r;
}

namespace {

std::string join_widths(const std::vector<int>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto w = ckpt.net.widths();
  require(ckpt.opt.m.widths() == w && ckpt.opt.v.widths() == w, ErrorCode::Shape, "optimizer state shape mismatch");
  BlobFile f;
  f.magic = kCheckpointMagic;
  f.set("kind", ckpt.kind);
  f.set("widths", join_widths(w));
  f.set("step", std::to_string(ckpt.opt.step));
  f.set("lr", format_double(ckpt.opt.hyper.lr));
  f.set("beta1", format_double(ckpt.opt.hyper.beta1));
  f.set("beta2", format_double(ckpt.opt.hyper.beta2));
  f.set("eps", format_double(ckpt.opt.hyper.eps));
  f.set("params", std::to_string(ckpt.net.param_count()));
  for (const NetParams* p : {&ckpt.net, &ckpt.opt.m, &ckpt.opt.v}) {
    const auto flat = p->flatten();
    f.values.insert(f.values.end(), flat.begin(), flat.end());
  }
  write_blob_file(path, f);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::span<const int> expected_widths) {
  const BlobFile f = read_blob_file(path, kCheckpointMagic);
  std::vector<int> w;
  for (long long v : parse_int_list(f.get("widths"), "widths")) w.push_back(static_cast<int>(v));
  validate_widths(w);
  if (!expected_widths.empty() && !std::equal(w.begin(), w.end(), expected_widths.begin(), expected_widths.end()))
    fail(ErrorCode::Shape, "checkpoint '" + path.string() + "' has widths [" + join_widths(w) +
                               "], expected [" + join_widths({expected_widths.begin(), expected_widths.end()}) + "]");

  Checkpoint ck;
  ck.kind = f.get("kind");
  ck.net = zero_params(w);
  const std::size_t n = ck.net.param_count();
  require(static_cast<std::size_t>(parse_int(f.get("params"), "params")) == n && f.values.size() == 3 * n,
          ErrorCode::Shape, "checkpoint blob does not match declared widths");
  ck.opt = init_opt_state(ck.net, {parse_double(f.get("lr"), "lr"), parse_double(f.get("beta1"), "beta1"),
                                   parse_double(f.get("beta2"), "beta2"), parse_double(f.get("eps"), "eps")});
  ck.opt.step = parse_int(f.get("step"), "step");
  const std::span<const double> all(f.values);
  ck.net.assign(all.subspan(0, n));
  ck.opt.m.assign(all.subspan(n, n));
  ck.opt.v.assign(all.subspan(2 * n, n));
  return ck;
}

Checkpoint checkpoint_roundtrip(const Checkpoint& ckpt, const std::filesystem::path& path) {
  save_checkpoint(path, ckpt);
  return load_checkpoint(path, ckpt.net.widths());
}

std::uint64_t params_hash(const NetParams& net) {
  const auto flat = net.flatten();
  return fnv1a64(std::span<const double>(flat));
}

}  // namespace ddm
