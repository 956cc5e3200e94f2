#pragma once

#include <Eigen/Dense>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ddm/datagen.hpp"

namespace ddm {

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  long n = 0;
};

/// Sample mean and unbiased covariance, symmetrized.
GaussianSummary fit_gaussian(std::span<const std::vector<double>> samples);
GaussianSummary fit_gaussian(std::span<const Clip> clips);

/// Principal square root of a symmetric PSD matrix: symmetrize, eigendecompose,
/// floor eigenvalues at zero. Throws Error{Numeric} if the solver fails.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

/// Default covariance shift used by the evaluation harness.
inline constexpr double kFrechetRegularization = 1e-6;

/// |mu_p - mu_q|^2 + tr(S_p + S_q - 2 (S_p^1/2 S_q S_p^1/2)^1/2), with
/// `regularization` * I added to both covariances first.
double frechet_distance(const GaussianSummary& p, const GaussianSummary& q, double regularization = 0.0);

/// Ridge map from a flattened clip to the pooled condition.
struct AlignmentProbe {
  Eigen::MatrixXd weight;  // P x (F*D)
  Eigen::VectorXd bias;    // P

  std::vector<double> apply(std::span<const double> x) const;
};

inline constexpr double kProbeLambda = 1e-3;

/// Minimizes (1/n) sum |W x_i + b - y_i|^2 + lambda |W|^2 (bias unpenalized)
/// through an SPD solve of the centered normal equations.
AlignmentProbe fit_alignment_probe(std::span<const Clip> clips, std::span<const std::vector<double>> pooled,
                                   double lambda = kProbeLambda);

/// Cosine similarity; 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);

double alignment_score(const AlignmentProbe& probe, const Clip& clip, std::span<const double> pooled);

/// Mean Euclidean norm of consecutive frame differences.
double motion_magnitude(const Clip& clip);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // sample sd / sqrt(n)
};

MeanSe mean_and_se(std::span<const double> values);

struct SpecializationGap {
  double gap = 0.0;
  double in_mean = 0.0;
  double out_mean = 0.0;
  double in_se = 0.0;
  double out_se = 0.0;
  /// sqrt(in_se^2 + out_se^2)
  double gap_se() const;
};

SpecializationGap specialization_gap(std::span<const double> in_scores, std::span<const double> out_scores);

/// Number of prompts whose best schedule lies outside `baseline`; ties go to
/// the baseline.
int schedule_preference(const std::map<std::string, std::vector<double>>& per_prompt_scores,
                        const std::set<std::string>& baseline);

struct MetricReport {
  double frechet = 0.0;
  double alignment_mean = 0.0;
  double alignment_se = 0.0;
  double motion_mean = 0.0;
  double motion_se = 0.0;
  std::vector<double> per_prompt;  // alignment per evaluated prompt
  std::vector<double> per_prompt_motion;

  bool operator==(const MetricReport&) const = default;
};

/// Scores sampled clips against the reference clips and their prompts.
MetricReport evaluate_samples(std::span<const Clip> samples, std::span<const Clip> reference,
                              std::span<const Condition> prompts, const AlignmentProbe& probe,
                              double frechet_regularization = kFrechetRegularization);

}  // namespace ddm
