// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.
// Tolerances and budgets are pinned here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "ddm/binary_io.hpp"
#include "ddm/harness.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ddm;

namespace {

constexpr double kGradTol = 1e-4;
constexpr std::size_t kGradParams = 128;
constexpr double kGradBudget = 10.0;
constexpr double kFrechetTol = 1e-9;
constexpr double kDenmanBeaversTol = 1e-7;
constexpr double kEulerExactTol = 1e-12;
constexpr double kEulerExpTol = 1e-2;
constexpr long kRoutingVectors = 10000;
constexpr double kZeroCommBudget = 300.0;
constexpr double kRouterAccuracy = 0.90;
constexpr double kRouterLowT = 0.2;
constexpr double kShuffledBand = 0.05;
constexpr double kRouterBudget = 120.0;
constexpr double kSpecBudget = 600.0;
constexpr double kHeadlineBudget = 1800.0;
constexpr double kSwitchBudget = 600.0;
constexpr int kSwitchPreferenceMin = 21;  // strictly more than half of 40
constexpr int kHeadlineSeeds = 3;
constexpr int kAccuracyReps = 5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int g_failures = 0;

void verdict(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

/// Runs one criterion; an exception is a FAIL with its message.
void criterion(const char* name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    verdict(name, false, std::string("threw: ") + e.what());
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

GaussianSummary summary(const Eigen::VectorXd& m, const Eigen::MatrixXd& s) { return {m, s}; }

void gradient_oracle() {
  const auto t0 = Clock::now();
  const GenParams gp;
  const NetParams net = init_params(velocity_widths(gp, kDefaultExpertHidden), 7);
  const auto batch = testutil::random_batch(net, 16, gp.clip_size(), 8);
  const auto r = testutil::check_gradients(net, batch, kGradParams, 9);
  const double secs = seconds_since(t0);
  verdict("gradient-oracle", r.max_rel_error < kGradTol && r.checked >= 100 && secs < kGradBudget,
          fmt("max rel error %.3g over %zu params of a %ld-param expert (tol %.0e), %.2f s", r.max_rel_error, r.checked,
              static_cast<long>(net.param_count()), kGradTol, secs));
}

void frechet_suite() {
  Rng rng(101);
  double worst_analytic = 0.0;
  for (int d : {1, 2, 3, 8, 32}) {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd m(d), a(d), b(d);
    for (int i = 0; i < d; ++i) {
      m(i) = rng.normal();
      a(i) = rng.uniform(0.1, 4.0);
      b(i) = rng.uniform(0.1, 4.0);
    }
    double want = 0.0;
    for (int i = 0; i < d; ++i) want += std::pow(std::sqrt(a(i)) - std::sqrt(b(i)), 2);
    worst_analytic = std::max(worst_analytic, std::abs(frechet_distance(summary(zero, id), summary(zero, id))));
    worst_analytic =
        std::max(worst_analytic, std::abs(frechet_distance(summary(zero, id), summary(m, id)) - m.squaredNorm()));
    const double diag = frechet_distance(summary(zero, a.asDiagonal().toDenseMatrix()),
                                         summary(zero, b.asDiagonal().toDenseMatrix()));
    worst_analytic = std::max(worst_analytic, std::abs(diag - want));
  }
  double worst_db = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const int d = 1 + trial % 3;
    const Eigen::MatrixXd s1 = oracle::random_spd(d, rng), s2 = oracle::random_spd(d, rng);
    Eigen::VectorXd m1(d), m2(d);
    for (int i = 0; i < d; ++i) {
      m1(i) = rng.normal();
      m2(i) = rng.normal();
    }
    worst_db = std::max(worst_db, std::abs(frechet_distance(summary(m1, s1), summary(m2, s2)) -
                                           oracle::frechet_denman_beavers(m1, s1, m2, s2)));
  }
  verdict("frechet-analytic", worst_analytic <= kFrechetTol && worst_db <= kDenmanBeaversTol,
          fmt("analytic max error %.3g (tol %.0e), Denman-Beavers max error %.3g over 300 cases d<=3 (tol %.0e)",
              worst_analytic, kFrechetTol, worst_db, kDenmanBeaversTol));
}

void euler_exactness() {
  // constant field: Euler is exact, x(0) = x(1) - c
  const std::vector<double> c{0.5, -1.25, 3.0}, x1{1.0, 2.0, -0.5};
  const auto straight = euler_integrate([&](std::span<const double>, double, int) { return c; }, x1, 7);
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, std::abs(straight.back()[i] - (x1[i] - c[i])));
  // the flow-matching path: v = eps - x0 carries x_1 = eps onto x_0 for any step count
  const std::vector<double> x0{-0.3, 0.8, 0.1}, eps{1.1, -0.4, 0.7};
  std::vector<double> v(3);
  for (int i = 0; i < 3; ++i) v[i] = eps[i] - x0[i];
  for (int n : {1, 3, 50}) {
    const auto path = euler_integrate([&](std::span<const double>, double, int) { return v; }, eps, n);
    for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(path.back()[i] - x0[i]));
  }
  // dx/dt = x integrated from t = 1 to t = 0 approximates x(1) e^-1
  const std::vector<double> one{1.0};
  const auto decay = euler_integrate(
      [](std::span<const double> x, double, int) { return std::vector<double>(x.begin(), x.end()); }, one, 50);
  const double err = std::abs(decay.back()[0] - std::exp(-1.0));
  verdict("euler-exactness", worst <= kEulerExactTol && err <= kEulerExpTol,
          fmt("linear-path max error %.3g (tol %.0e), |x_50 - e^-1| = %.4g (tol %.0e)", worst, kEulerExactTol, err,
              kEulerExpTol));
}

void routing_invariants() {
  const auto r = testutil::check_routing_invariants(kRoutingVectors, 202);
  verdict("routing-invariants", r.vectors >= kRoutingVectors && r.violations == 0,
          fmt("%ld random logit vectors, %ld violations%s%s", r.vectors, r.violations,
              r.violations ? ", first: " : "", r.first_violation.c_str()));
}

struct SeedRun {
  ComparisonReport report;
  double seconds = 0.0;
};

ExperimentConfig seed_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.data_seed = seed;
  return cfg;
}

/// Paired across-seed difference: mean and standard error of the mean.
MeanSe paired(const std::vector<SeedRun>& runs, double MetricReport::*field) {
  std::vector<double> d;
  for (const auto& r : runs) d.push_back(r.report.arms.at("ddm").*field - r.report.arms.at("monolithic").*field);
  return mean_and_se(d);
}

void headline(const std::vector<SeedRun>& runs, double total_secs) {
  std::string per_seed;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const auto& a = runs[s].report.arms;
    per_seed += fmt("; seed %zu: frechet %.4g vs %.4g, alignment %.4f vs %.4f", s, a.at("ddm").frechet,
                    a.at("monolithic").frechet, a.at("ddm").alignment_mean, a.at("monolithic").alignment_mean);
  }
  const MeanSe fd = paired(runs, &MetricReport::frechet);
  const MeanSe al = paired(runs, &MetricReport::alignment_mean);
  const bool fd_ok = fd.mean < 0.0 && -fd.mean > 2.0 * fd.se;
  const bool al_ok = al.mean > 0.0 && al.mean > 2.0 * al.se;
  verdict("headline", fd_ok && al_ok && total_secs < kHeadlineBudget,
          fmt("ddm - mono frechet %.4g (se %.3g), alignment %+.4f (se %.3g), K=3 top_k=1, %.0f s", fd.mean, fd.se,
              al.mean, al.se, total_secs) +
              per_seed);
}

void specialization(const ExperimentConfig& cfg, const TrainedArms& arms) {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (int k = 0; k < cfg.data.clusters; ++k) {
    const auto r = probe_specialization(cfg, arms.experts[static_cast<std::size_t>(k)], arms.probe, k);
    const bool good = r.gap.gap > 2.0 * r.gap.gap_se() && static_cast<long>(r.in_scores.size()) >= 100 &&
                      static_cast<long>(r.out_scores.size()) >= 100;
    ok = ok && good;
    detail += fmt("%sexpert %d gap %.4f (se %.4f, n %zu/%zu)", k ? "; " : "", k, r.gap.gap, r.gap.gap_se(),
                  r.in_scores.size(), r.out_scores.size());
  }
  const double secs = seconds_since(t0);
  verdict("specialization-gap", ok && secs < kSpecBudget, detail + fmt(", %.0f s", secs));
}

void router_quality(const ExperimentConfig& cfg, const TrainedArms& arms) {
  const auto t0 = Clock::now();
  const auto trained = train_router_arm(cfg, arms.train, arms.eval);
  const double train_secs = seconds_since(t0);
  const std::uint64_t seed = derive_seed(cfg.eval_seed, {77});
  const double low_t = accuracy_in_range(trained.net, arms.eval, 0.0, kRouterLowT, seed, kAccuracyReps);

  const auto t1 = Clock::now();
  const Dataset shuffled = permute_labels(arms.train, derive_seed(cfg.data_seed, {78}));
  const auto control = train_router_arm(cfg, shuffled, arms.eval);
  const double control_secs = seconds_since(t1);
  const double chance = 1.0 / cfg.data.clusters;
  const double control_acc = heldout_accuracy(control.net, arms.eval, seed, kAccuracyReps);

  const bool same = params_hash(trained.net) == params_hash(arms.router);
  verdict("router-quality",
          low_t >= kRouterAccuracy && std::abs(control_acc - chance) <= kShuffledBand && train_secs < kRouterBudget &&
              control_secs < kRouterBudget && same,
          fmt("accuracy %.4f at t<=%.1f (min %.2f), shuffled-label accuracy %.4f (target %.3f +/- %.2f), "
              "train %.1f s / %.1f s, retrain matches run: %s",
              low_t, kRouterLowT, kRouterAccuracy, control_acc, chance, kShuffledBand, train_secs, control_secs,
              same ? "yes" : "no"));
}

void zero_communication(const ExperimentConfig& cfg, const TrainedArms& arms, const ComparisonReport& report) {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail = "reverse-order sequential retrain vs concurrent run:";
  for (int k = cfg.data.clusters - 1; k >= 0; --k) {
    const auto res = train_expert(cfg, arms.train, k);
    const std::string h = hex64(params_hash(res.net));
    const std::string want = report.checkpoint_hashes.at("expert_" + std::to_string(k));
    ok = ok && h == want;
    detail += fmt(" expert_%d %s %s", k, h.c_str(), h == want ? "==" : "!=") + " " + want;
  }
  const double secs = seconds_since(t0);
  verdict("zero-communication", ok && secs < kZeroCommBudget, detail + fmt(", %.0f s", secs));
}

void k1_equivalence() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.data.clusters = 1;
  cfg.total_steps = 1500;
  cfg.n_eval = 150;
  const auto r = run_comparison(cfg, std::nullopt);
  const bool metrics_same = r.arms.at("ddm") == r.arms.at("monolithic");
  const bool ckpt_same = r.checkpoint_hashes.at("expert_0") == r.checkpoint_hashes.at("monolithic");
  verdict("k1-equivalence", metrics_same && ckpt_same,
          fmt("K=1 ddm frechet %.17g vs mono %.17g, alignment %.17g vs %.17g, checkpoints %s, %.0f s",
              r.arms.at("ddm").frechet, r.arms.at("monolithic").frechet, r.arms.at("ddm").alignment_mean,
              r.arms.at("monolithic").alignment_mean, ckpt_same ? "identical" : "differ", seconds_since(t0)));
}

void switching(const ExperimentConfig& cfg, const TrainedArms& arms) {
  const auto t0 = Clock::now();
  const auto high = train_induced(cfg, arms.train, true);
  const auto low = train_induced(cfg, arms.train, false);
  const auto s = switching_ablation(cfg, high.net, low.net, arms.probe, arms.eval);
  const double secs = seconds_since(t0);
  const double alt = s.best_alternating_alignment(), single = s.best_single_alignment();
  verdict("switching", alt >= single && s.preference >= kSwitchPreferenceMin && s.n_prompts == 40 && secs < kSwitchBudget,
          fmt("best alternating alignment %.4f vs best single %.4f, %d/%d prompts prefer alternating, %.0f s", alt,
              single, s.preference, s.n_prompts, secs));
}

void determinism(const ExperimentConfig& cfg, const ComparisonReport& first) {
  const auto t0 = Clock::now();
  const auto second = run_comparison(cfg, std::nullopt);
  const auto a = first.provenance_hash(), b = second.provenance_hash();
  verdict("determinism", a == b && first.report_hash() == second.report_hash(),
          fmt("provenance %s vs %s, full report %s, %.0f s", hex64(a).c_str(), hex64(b).c_str(),
              first.report_hash() == second.report_hash() ? "identical" : "differs", seconds_since(t0)));
}

}  // namespace

int main() {
  criterion("gradient-oracle", gradient_oracle);
  criterion("frechet-analytic", frechet_suite);
  criterion("euler-exactness", euler_exactness);
  criterion("routing-invariants", routing_invariants);

  std::vector<SeedRun> runs;
  TrainedArms arms0;
  bool headline_ran = false;
  criterion("headline", [&] {
    const auto t0 = Clock::now();
    for (int s = 0; s < kHeadlineSeeds; ++s) {
      const auto ts = Clock::now();
      SeedRun run;
      run.report = run_comparison(seed_config(static_cast<std::uint64_t>(s)), std::nullopt, s == 0 ? &arms0 : nullptr);
      run.seconds = seconds_since(ts);
      runs.push_back(std::move(run));
    }
    headline_ran = true;
    headline(runs, seconds_since(t0));
  });

  const ExperimentConfig cfg0 = seed_config(0);
  auto needs_headline = [&](const char* name, const std::function<void()>& body) {
    if (!headline_ran) {
      verdict(name, false, "not run: the seed-0 comparison failed");
      return;
    }
    criterion(name, body);
  };
  needs_headline("zero-communication", [&] { zero_communication(cfg0, arms0, runs[0].report); });
  needs_headline("router-quality", [&] { router_quality(cfg0, arms0); });
  needs_headline("specialization-gap", [&] { specialization(cfg0, arms0); });
  criterion("k1-equivalence", k1_equivalence);
  needs_headline("switching", [&] { switching(cfg0, arms0); });
  needs_headline("determinism", [&] { determinism(cfg0, runs[0].report); });

  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
