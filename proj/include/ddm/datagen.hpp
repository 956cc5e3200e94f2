#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddm/rng.hpp"

namespace ddm {

/// Generation parameters shared by every item of a dataset.
struct GenParams {
  int clusters = 3;    // K
  int frames = 8;      // F
  int dim = 4;         // D
  int cond_dim = 16;   // C
  int pooled_dim = 4;  // P
  double sigma_c = 0.05;

  int clip_size() const { return frames * dim; }
  void validate() const;
  bool operator==(const GenParams&) const = default;
};

/// Number of procedural trajectory families: linear drift, planar rotation, oscillation.
inline constexpr int kNumFamilies = 3;
/// Magnitude of the one-hot cluster slot in the condition template.
inline constexpr double kClusterGain = 16.0;
/// Per-cluster offset applied to the start vector, see cluster_offset().
inline constexpr double kStartOffset = 1.5;

/// F x D frame sequence, row-major (frame index major).
class Clip {
 public:
  Clip() = default;
  Clip(int frames, int dim) : frames_(frames), dim_(dim), data_(static_cast<std::size_t>(frames) * dim, 0.0) {}
  Clip(int frames, int dim, std::vector<double> data);

  int frames() const { return frames_; }
  int dim() const { return dim_; }
  double operator()(int f, int d) const { return data_[static_cast<std::size_t>(f) * dim_ + d]; }
  double& operator()(int f, int d) { return data_[static_cast<std::size_t>(f) * dim_ + d]; }
  std::span<const double> flat() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Clip&) const = default;

 private:
  int frames_ = 0;
  int dim_ = 0;
  std::vector<double> data_;
};

struct Condition {
  std::vector<double> full;    // C-dim, read by experts
  std::vector<double> pooled;  // P-dim block mean of full, read by the router
  int cluster = 0;

  bool operator==(const Condition&) const = default;
};

struct Item {
  Clip clip;
  Condition cond;

  bool operator==(const Item&) const = default;
};

struct Dataset {
  GenParams params;
  std::uint64_t seed = 0;
  std::vector<Item> items;
  std::vector<long long> cluster_counts;
  /// Free-form provenance echoed into the file header (not part of equality).
  std::vector<std::pair<std::string, std::string>> meta;

  std::size_t size() const { return items.size(); }
  /// Indices of the items whose cluster label is `cluster`.
  std::vector<std::size_t> indices_of(int cluster) const;
};

/// Start-vector offset of a cluster: +1, -1 and alternating sign patterns over D.
std::vector<double> cluster_offset(int cluster, int dim);

/// Per-sample parameter vector for a cluster:
///   0: [start(D), drift(D)]   1: [start(D), omega]   2: [start(D), amp(D), omega]
std::vector<double> sample_params(int cluster, int dim, Rng& rng);
std::size_t param_count(int cluster, int dim);

Clip generate_clip(int cluster, std::span<const double> params, int frames, int dim);

/// Mean over contiguous blocks of size full.size() / pooled_dim.
std::vector<double> block_mean(std::span<const double> full, int pooled_dim);

/// Noise-free condition vector: one-hot slot at cluster * (C/P) scaled by
/// kClusterGain; params fill the remaining (free) slots in order, starting at
/// free slot cluster * n_free / K and wrapping, so each cluster owns its own
/// offsets; zero padding.
std::vector<double> condition_template(int cluster, std::span<const double> params, const GenParams& gp);

Condition make_condition(int cluster, std::span<const double> params, const GenParams& gp, Rng& rng);

/// Per-cluster counts for n_total items; the remainder goes round-robin by
/// ascending cluster index.
std::vector<long long> stratified_counts(long long n_total, int clusters);

/// Item i belongs to cluster i % K, so every prefix is stratified.
Dataset build_stratified(const GenParams& gp, long long n_total, std::uint64_t seed);
Dataset build_dataset(const GenParams& gp, long long n_per_cluster, std::uint64_t seed);

/// Same items with cluster labels replaced by a seeded permutation of the labels.
Dataset permute_labels(const Dataset& ds, std::uint64_t seed);

/// Bitwise equality of all numeric fields.
bool same_numbers(const Dataset& a, const Dataset& b);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
Dataset cache_roundtrip(const Dataset& ds, const std::filesystem::path& path);

inline constexpr const char* kDatasetMagic = "DDMLAB-DS";

}  // namespace ddm
