#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ddm/binary_io.hpp"
#include "ddm/datagen.hpp"
#include "ddm/flow.hpp"
#include "ddm/net.hpp"
#include "ddm/router.hpp"
#include "test_util.hpp"

using namespace ddm;
using testutil::code_of;

TEST_CASE("init_params shapes, zero biases, determinism") {
  const std::vector<int> w4{4, 4};
  const NetParams a = init_params(w4, 1);
  CHECK(a.layers[0].bias.isZero(0.0));
  CHECK(a.layers[0].bias.size() == 4);

  const std::vector<int> w{8, 16, 8};
  const NetParams n = init_params(w, 9);
  REQUIRE(n.layers.size() == 2);
  CHECK(n.layers[0].weight.rows() == 16);
  CHECK(n.layers[0].weight.cols() == 8);
  CHECK(n.layers[1].weight.rows() == 8);
  CHECK(n.layers[1].weight.cols() == 16);
  CHECK(n == init_params(w, 9));
  CHECK_FALSE(n == init_params(w, 10));
  const double bound = 1.0 / std::sqrt(8.0);
  CHECK(n.layers[0].weight.cwiseAbs().maxCoeff() <= bound);

  const std::vector<int> bad{4};
  CHECK(code_of([&] { init_params(bad, 1); }) == ErrorCode::InvalidArgument);
  const std::vector<int> zero{4, 0};
  CHECK(code_of([&] { init_params(zero, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("time features") {
  const auto t0 = time_features(0.0);
  REQUIRE(t0.size() == kTimeFeatures);
  for (int i = 0; i < kTimeFeatures / 2; ++i) {
    CHECK(t0[2 * i] == 0.0);
    CHECK(t0[2 * i + 1] == 1.0);
  }
  const auto th = time_features(0.5);
  CHECK(std::abs(th[0]) < 1e-15);
  CHECK(th[1] == doctest::Approx(-1.0));
  for (double t : {0.0, 0.13, 0.5, 0.77, 1.0}) {
    double n2 = 0.0;
    for (double v : time_features(t)) n2 += v * v;
    CHECK(std::sqrt(n2) <= std::sqrt(kTimeFeatures / 2.0) * std::sqrt(2.0) + 1e-12);
  }
  CHECK(code_of([] { time_features(1.5); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { time_features(-0.1); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { time_features(0.5, 7); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("forward_velocity") {
  const GenParams gp;
  const auto widths = velocity_widths(gp, kDefaultExpertHidden);
  CHECK(widths == std::vector<int>{32 + kTimeFeatures + 16, 128, 128, 128, 32});
  const std::vector<double> x(32, 0.3), cond(16, -0.2);

  SUBCASE("zero net gives zero velocity") {
    const auto v = forward_velocity(zero_params(widths), x, 0.4, cond);
    for (double e : v) CHECK(e == 0.0);
  }
  SUBCASE("pure") {
    const NetParams net = init_params(widths, 4);
    CHECK(forward_velocity(net, x, 0.4, cond) == forward_velocity(net, x, 0.4, cond));
  }
  SUBCASE("output bias perturbation moves one coordinate by exactly delta") {
    NetParams net = init_params(widths, 4);
    const auto before = forward_velocity(net, x, 0.4, cond);
    const double delta = 0.25;
    net.layers.back().bias(5) += delta;
    const auto after = forward_velocity(net, x, 0.4, cond);
    for (std::size_t i = 0; i < before.size(); ++i) {
      if (i == 5) CHECK(after[i] - before[i] == doctest::Approx(delta).epsilon(1e-14));
      else CHECK(after[i] == before[i]);
    }
  }
  SUBCASE("shape mismatch") {
    const NetParams net = init_params(widths, 4);
    const std::vector<double> short_cond(15, 0.0);
    CHECK(code_of([&] { forward_velocity(net, x, 0.4, short_cond); }) == ErrorCode::Shape);
  }
}

TEST_CASE("loss_and_gradients") {
  const std::vector<int> widths{6 + kTimeFeatures + 3, 10, 10, 6};
  const NetParams net = init_params(widths, 21);
  auto batch = testutil::random_batch(net, 5, 6, 22);

  SUBCASE("zero residual gives zero loss and gradients") {
    for (auto& ex : batch) ex.target = forward_velocity(net, ex.x_t, ex.t, ex.cond);
    const auto lg = loss_and_gradients(net, batch);
    // batched and single-example forward passes round differently
    CHECK(lg.loss < 1e-28);
    for (double g : lg.grads.flatten()) CHECK(std::abs(g) < 1e-14);
  }
  SUBCASE("duplicating the batch leaves loss and gradients unchanged") {
    auto doubled = batch;
    doubled.insert(doubled.end(), batch.begin(), batch.end());
    const auto a = loss_and_gradients(net, batch);
    const auto b = loss_and_gradients(net, doubled);
    CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-14));
    const auto ga = a.grads.flatten(), gb = b.grads.flatten();
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(std::abs(ga[i] - gb[i]) <= 1e-14 * (1 + std::abs(ga[i])));
  }
  SUBCASE("finite-difference oracle on a 3-layer net") {
    const auto check = testutil::check_gradients(net, batch, 100, 23);
    CHECK(check.checked == 100);
    CHECK(check.max_rel_error < 1e-4);
  }
  SUBCASE("finite-difference oracle at the largest stated widths") {
    const std::vector<int> big{40, 32, 32, 40};
    const NetParams bnet = init_params(big, 31);
    const auto bbatch = testutil::random_batch(bnet, 4, 40 - kTimeFeatures - 2, 32);
    CHECK(testutil::check_gradients(bnet, bbatch, 200, 33).max_rel_error < 1e-4);
  }
  SUBCASE("non-finite loss is a divergence") {
    batch[0].target[0] = std::numeric_limits<double>::infinity();
    CHECK(code_of([&] { loss_and_gradients(net, batch); }) == ErrorCode::Diverged);
  }
  SUBCASE("empty batch is rejected") {
    CHECK(code_of([&] { loss_and_gradients(net, {}); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("cross-entropy gradients match finite differences") {
  const std::vector<int> widths{5, 7, 3};
  const NetParams net = init_params(widths, 2);
  Eigen::MatrixXd in = Eigen::MatrixXd::Random(5, 6);
  const std::vector<int> labels{0, 1, 2, 2, 1, 0};
  const auto lg = cross_entropy_and_gradients(net, in, labels);
  const auto g = lg.grads.flatten();
  auto flat = net.flatten();
  for (std::size_t i = 0; i < flat.size(); i += 3) {
    NetParams p = net;
    const double x = flat[i];
    flat[i] = x + 1e-5;
    p.assign(flat);
    const double up = cross_entropy_and_gradients(p, in, labels).loss;
    flat[i] = x - 1e-5;
    p.assign(flat);
    const double down = cross_entropy_and_gradients(p, in, labels).loss;
    flat[i] = x;
    const double numeric = (up - down) / 2e-5;
    CHECK(std::abs(numeric - g[i]) <= 1e-4 * std::max({std::abs(numeric), std::abs(g[i]), 1e-8}));
  }
}

TEST_CASE("adam_update") {
  const std::vector<int> widths{3, 4, 2};
  const NetParams net = init_params(widths, 5);
  const OptState opt = init_opt_state(net);

  SUBCASE("first step with unit gradient moves every parameter by lr/(1+eps)") {
    NetParams g = net;
    auto ones = net.flatten();
    std::fill(ones.begin(), ones.end(), 1.0);
    g.assign(ones);
    const auto r = adam_update(net, g, opt);
    CHECK(r.opt.step == 1);
    const auto before = net.flatten(), after = r.net.flatten();
    for (std::size_t i = 0; i < before.size(); ++i)
      CHECK(after[i] - before[i] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-9));
  }
  SUBCASE("zero gradient from fresh moments leaves parameters unchanged") {
    const auto r0 = adam_update(net, zero_params(widths), opt);
    CHECK(r0.net == net);
  }
  SUBCASE("zero gradient decays moments and keeps moving on momentum") {
    NetParams g = net;
    auto ones = net.flatten();
    std::fill(ones.begin(), ones.end(), 1.0);
    g.assign(ones);
    const auto r1 = adam_update(net, g, opt);
    const auto r2 = adam_update(r1.net, zero_params(widths), r1.opt);
    CHECK(r2.net.flatten()[0] < r1.net.flatten()[0]);
    CHECK(r2.opt.step == 2);
    CHECK(r2.opt.m.flatten()[0] == doctest::Approx(0.9 * r1.opt.m.flatten()[0]));
    CHECK(r2.opt.v.flatten()[0] == doctest::Approx(0.999 * r1.opt.v.flatten()[0]));
  }
  SUBCASE("deterministic") {
    const auto batch = testutil::random_batch(init_params(std::vector<int>{2 + kTimeFeatures + 1, 4, 2}, 1), 3, 2, 3);
    const NetParams n2 = init_params(std::vector<int>{2 + kTimeFeatures + 1, 4, 2}, 1);
    const auto g = loss_and_gradients(n2, batch).grads;
    const auto o2 = init_opt_state(n2);
    const auto a = adam_update(n2, g, o2), b = adam_update(n2, g, o2);
    CHECK(a.net == b.net);
    CHECK(a.opt == b.opt);
  }
  SUBCASE("non-finite gradient is rejected") {
    NetParams g = zero_params(widths);
    g.layers[0].weight(0, 0) = std::nan("");
    CHECK(code_of([&] { adam_update(net, g, opt); }) == ErrorCode::Numeric);
  }
}

TEST_CASE("checkpoint roundtrip") {
  const auto dir = testutil::scratch_dir("net_ckpt");
  const std::vector<int> widths{6, 5, 4};
  Checkpoint ck{"expert", init_params(widths, 8), {}};
  ck.opt = init_opt_state(ck.net);
  NetParams g = init_params(widths, 9);
  adam_step(ck.net, ck.opt, g);
  const auto path = dir / "expert_0.ckpt";

  const Checkpoint back = checkpoint_roundtrip(ck, path);
  CHECK(back.net == ck.net);
  CHECK(back.opt == ck.opt);
  CHECK(back.kind == "expert");

  const std::vector<int> wrong{6, 7, 4};
  CHECK(code_of([&] { load_checkpoint(path, wrong); }) == ErrorCode::Shape);

  std::string bytes = read_text_file(path);
  bytes[bytes.size() - 12] ^= 0x11;
  write_text_file(dir / "bad.ckpt", bytes);
  CHECK(code_of([&] { load_checkpoint(dir / "bad.ckpt"); }) == ErrorCode::Checksum);
}

TEST_CASE("router is an order of magnitude smaller than an expert") {
  const GenParams gp;
  const auto expert = init_params(velocity_widths(gp, kDefaultExpertHidden), 1);
  const auto router = init_params(router_widths(gp), 1);
  CHECK(router.param_count() * 10 < expert.param_count());
}
