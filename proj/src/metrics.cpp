#include "ddm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddm/error.hpp"

namespace ddm {

GaussianSummary fit_gaussian(std::span<const std::vector<double>> samples) {
  require(samples.size() >= 2, ErrorCode::InvalidArgument, "a Gaussian fit needs at least 2 samples");
  const Eigen::Index d = static_cast<Eigen::Index>(samples.front().size());
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    require(static_cast<Eigen::Index>(s.size()) == d, ErrorCode::Shape, "samples differ in dimension");
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(s.data(), d);
  }
  GaussianSummary g;
  g.n = static_cast<long>(n);
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  g.cov = 0.5 * (cov + cov.transpose());
  return g;
}

GaussianSummary fit_gaussian(std::span<const Clip> clips) {
  std::vector<std::vector<double>> rows;
  rows.reserve(clips.size());
  for (const auto& c : clips) rows.push_back(c.data());
  return fit_gaussian(rows);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  require(m.rows() == m.cols(), ErrorCode::Shape, "matrix square root of a non-square matrix");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) fail(ErrorCode::Numeric, "eigen-solver did not converge");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const GaussianSummary& p, const GaussianSummary& q, double regularization) {
  require(p.mean.size() == q.mean.size() && p.cov.rows() == q.cov.rows() && p.cov.rows() == p.mean.size(),
          ErrorCode::Shape, "Gaussian summaries differ in dimension");
  require(regularization >= 0.0, ErrorCode::InvalidArgument, "regularization must be >= 0");
  const Eigen::Index d = p.mean.size();
  const Eigen::MatrixXd sp = p.cov + regularization * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd sq = q.cov + regularization * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd root_p = psd_sqrt(sp);
  const Eigen::MatrixXd cross = psd_sqrt(root_p * sq * root_p);
  const double value = (p.mean - q.mean).squaredNorm() + sp.trace() + sq.trace() - 2.0 * cross.trace();
  return std::max(0.0, value);
}

std::vector<double> AlignmentProbe::apply(std::span<const double> x) const {
  require(static_cast<Eigen::Index>(x.size()) == weight.cols(), ErrorCode::Shape, "probe input width mismatch");
  const Eigen::VectorXd y = weight * Eigen::Map<const Eigen::VectorXd>(x.data(), weight.cols()) + bias;
  return std::vector<double>(y.data(), y.data() + y.size());
}

AlignmentProbe fit_alignment_probe(std::span<const Clip> clips, std::span<const std::vector<double>> pooled,
                                   double lambda) {
  require(lambda > 0.0, ErrorCode::InvalidArgument, "probe ridge lambda must be > 0");
  require(clips.size() == pooled.size() && !clips.empty(), ErrorCode::Shape, "one pooled vector per clip required");
  const Eigen::Index n = static_cast<Eigen::Index>(clips.size());
  const Eigen::Index d = static_cast<Eigen::Index>(clips.front().data().size());
  const Eigen::Index p = static_cast<Eigen::Index>(pooled.front().size());
  require(n >= d + 1, ErrorCode::InvalidArgument,
          "probe needs at least F*D+1 = " + std::to_string(d + 1) + " training pairs, got " + std::to_string(n));

  Eigen::MatrixXd x(n, d), y(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = clips[static_cast<std::size_t>(i)].data();
    const auto& t = pooled[static_cast<std::size_t>(i)];
    require(static_cast<Eigen::Index>(c.size()) == d && static_cast<Eigen::Index>(t.size()) == p, ErrorCode::Shape,
            "probe training pairs differ in shape");
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(c.data(), d);
    y.row(i) = Eigen::Map<const Eigen::RowVectorXd>(t.data(), p);
  }
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const Eigen::RowVectorXd y_mean = y.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::MatrixXd yc = y.rowwise() - y_mean;
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::MatrixXd gram = inv_n * (xc.transpose() * xc) + lambda * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd rhs = inv_n * (xc.transpose() * yc);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) fail(ErrorCode::Numeric, "probe normal equations are not positive definite");

  AlignmentProbe probe;
  probe.weight = ldlt.solve(rhs).transpose();
  probe.bias = (y_mean - x_mean * probe.weight.transpose()).transpose();
  return probe;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::Shape, "cosine of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double alignment_score(const AlignmentProbe& probe, const Clip& clip, std::span<const double> pooled) {
  return cosine(probe.apply(clip.flat()), pooled);
}

double motion_magnitude(const Clip& clip) {
  require(clip.frames() >= 2, ErrorCode::InvalidArgument, "motion needs at least two frames");
  double total = 0.0;
  for (int f = 0; f + 1 < clip.frames(); ++f) {
    double s = 0.0;
    for (int d = 0; d < clip.dim(); ++d) {
      const double diff = clip(f + 1, d) - clip(f, d);
      s += diff * diff;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(clip.frames() - 1);
}

MeanSe mean_and_se(std::span<const double> values) {
  require(!values.empty(), ErrorCode::InvalidArgument, "mean of an empty list");
  MeanSe r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  r.se = sd / std::sqrt(static_cast<double>(values.size()));
  return r;
}

double SpecializationGap::gap_se() const { return std::sqrt(in_se * in_se + out_se * out_se); }

SpecializationGap specialization_gap(std::span<const double> in_scores, std::span<const double> out_scores) {
  require(!in_scores.empty() && !out_scores.empty(), ErrorCode::InvalidArgument, "specialization gap needs non-empty score lists");
  const auto in = mean_and_se(in_scores);
  const auto out = mean_and_se(out_scores);
  return {in.mean - out.mean, in.mean, out.mean, in.se, out.se};
}

int schedule_preference(const std::map<std::string, std::vector<double>>& per_prompt_scores,
                        const std::set<std::string>& baseline) {
  require(!per_prompt_scores.empty(), ErrorCode::InvalidArgument, "no schedules");
  for (const auto& b : baseline)
    require(per_prompt_scores.count(b) == 1, ErrorCode::InvalidArgument, "baseline schedule '" + b + "' has no scores");
  const std::size_t n = per_prompt_scores.begin()->second.size();
  for (const auto& [name, scores] : per_prompt_scores)
    require(scores.size() == n, ErrorCode::Shape, "schedule '" + name + "' has a different prompt count");

  int count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best_base = -std::numeric_limits<double>::infinity();
    double best_other = -std::numeric_limits<double>::infinity();
    for (const auto& [name, scores] : per_prompt_scores) {
      double& slot = baseline.count(name) ? best_base : best_other;
      slot = std::max(slot, scores[i]);
    }
    if (best_other > best_base) ++count;
  }
  return count;
}

MetricReport evaluate_samples(std::span<const Clip> samples, std::span<const Clip> reference,
                              std::span<const Condition> prompts, const AlignmentProbe& probe,
                              double frechet_regularization) {
  require(samples.size() == prompts.size(), ErrorCode::Shape, "one prompt per sample required");
  MetricReport r;
  r.frechet = frechet_distance(fit_gaussian(samples), fit_gaussian(reference), frechet_regularization);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    r.per_prompt.push_back(alignment_score(probe, samples[i], prompts[i].pooled));
    r.per_prompt_motion.push_back(motion_magnitude(samples[i]));
  }
  const auto a = mean_and_se(r.per_prompt);
  const auto m = mean_and_se(r.per_prompt_motion);
  r.alignment_mean = a.mean;
  r.alignment_se = a.se;
  r.motion_mean = m.mean;
  r.motion_se = m.se;
  return r;
}

}  // namespace ddm
