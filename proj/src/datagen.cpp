#include "ddm/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ddm/binary_io.hpp"
#include "ddm/error.hpp"

namespace ddm {

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) fail(ErrorCode::InvalidArgument, std::string(what) + " contains a non-finite value");
}

}  // namespace

void GenParams::validate() const {
  require(clusters >= 1 && clusters <= kNumFamilies, ErrorCode::InvalidArgument,
          "K must be in [1, " + std::to_string(kNumFamilies) + "]");
  require(frames >= 2, ErrorCode::InvalidArgument, "F must be >= 2");
  require(dim >= 2, ErrorCode::InvalidArgument, "D must be >= 2");
  require(pooled_dim >= 1 && pooled_dim < cond_dim, ErrorCode::InvalidArgument, "need 1 <= P < C");
  require(cond_dim % pooled_dim == 0, ErrorCode::InvalidArgument, "C must be divisible by P");
  require(clusters <= pooled_dim, ErrorCode::InvalidArgument, "K must not exceed P (one pooled block per cluster slot)");
  require(static_cast<std::size_t>(cond_dim - clusters) >= param_count(2, dim), ErrorCode::InvalidArgument,
          "C too small to embed the per-sample parameters");
  require(std::isfinite(sigma_c) && sigma_c >= 0.0, ErrorCode::InvalidArgument, "sigma_c must be >= 0");
}

Clip::Clip(int frames, int dim, std::vector<double> data) : frames_(frames), dim_(dim), data_(std::move(data)) {
  require(data_.size() == static_cast<std::size_t>(frames) * dim, ErrorCode::Shape, "clip data does not match F x D");
}

std::vector<std::size_t> Dataset::indices_of(int cluster) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].cond.cluster == cluster) out.push_back(i);
  return out;
}

std::vector<double> cluster_offset(int cluster, int dim) {
  std::vector<double> off(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    double sign = 1.0;
    if (cluster == 1) sign = -1.0;
    if (cluster == 2) sign = (d % 2 == 0) ? 1.0 : -1.0;
    off[static_cast<std::size_t>(d)] = kStartOffset * sign;
  }
  return off;
}

std::size_t param_count(int cluster, int dim) {
  switch (cluster) {
    case 0: return 2 * static_cast<std::size_t>(dim);
    case 1: return static_cast<std::size_t>(dim) + 1;
    case 2: return 2 * static_cast<std::size_t>(dim) + 1;
    default: fail(ErrorCode::InvalidArgument, "unknown cluster index " + std::to_string(cluster));
  }
}

std::vector<double> sample_params(int cluster, int dim, Rng& rng) {
  const auto n = param_count(cluster, dim);
  std::vector<double> p;
  p.reserve(n);
  const auto off = cluster_offset(cluster, dim);
  for (int d = 0; d < dim; ++d) p.push_back(off[static_cast<std::size_t>(d)] + rng.uniform(-1.0, 1.0));
  constexpr double pi = std::numbers::pi;
  switch (cluster) {
    case 0:
      for (int d = 0; d < dim; ++d) p.push_back(rng.uniform(-0.5, 0.5));
      break;
    case 1:
      p.push_back(rng.uniform(pi / 8, pi / 2));
      break;
    case 2:
      for (int d = 0; d < dim; ++d) p.push_back(rng.uniform(0.5, 1.5));
      p.push_back(rng.uniform(pi / 8, pi / 2));
      break;
  }
  return p;
}

Clip generate_clip(int cluster, std::span<const double> params, int frames, int dim) {
  require(frames >= 2 && dim >= 2, ErrorCode::InvalidArgument, "generate_clip needs F >= 2 and D >= 2");
  const auto n = param_count(cluster, dim);
  require(params.size() == n, ErrorCode::Shape,
          "cluster " + std::to_string(cluster) + " expects " + std::to_string(n) + " params");
  check_finite(params, "clip params");

  Clip clip(frames, dim);
  const auto start = params.subspan(0, static_cast<std::size_t>(dim));
  for (int f = 0; f < frames; ++f) {
    switch (cluster) {
      case 0: {
        const auto drift = params.subspan(static_cast<std::size_t>(dim));
        for (int d = 0; d < dim; ++d) clip(f, d) = start[d] + f * drift[d];
        break;
      }
      case 1: {
        const double a = f * params[static_cast<std::size_t>(dim)];
        const double c = std::cos(a), s = std::sin(a);
        clip(f, 0) = c * start[0] - s * start[1];
        clip(f, 1) = s * start[0] + c * start[1];
        for (int d = 2; d < dim; ++d) clip(f, d) = start[d];
        break;
      }
      case 2: {
        const auto amp = params.subspan(static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
        const double s = std::sin(f * params[2 * static_cast<std::size_t>(dim)]);
        for (int d = 0; d < dim; ++d) clip(f, d) = start[d] + s * amp[d];
        break;
      }
    }
  }
  return clip;
}

std::vector<double> block_mean(std::span<const double> full, int pooled_dim) {
  require(pooled_dim >= 1 && full.size() % static_cast<std::size_t>(pooled_dim) == 0, ErrorCode::InvalidArgument,
          "condition width " + std::to_string(full.size()) + " is not divisible by P=" + std::to_string(pooled_dim));
  const std::size_t block = full.size() / static_cast<std::size_t>(pooled_dim);
  std::vector<double> out(static_cast<std::size_t>(pooled_dim));
  for (std::size_t b = 0; b < out.size(); ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < block; ++i) s += full[b * block + i];
    out[b] = s / static_cast<double>(block);
  }
  return out;
}

std::vector<double> condition_template(int cluster, std::span<const double> params, const GenParams& gp) {
  require(gp.cond_dim % gp.pooled_dim == 0, ErrorCode::InvalidArgument, "C must be divisible by P");
  require(cluster >= 0 && cluster < gp.clusters, ErrorCode::InvalidArgument, "cluster out of range");
  const std::size_t block = static_cast<std::size_t>(gp.cond_dim / gp.pooled_dim);
  std::vector<double> full(static_cast<std::size_t>(gp.cond_dim), 0.0);
  std::vector<bool> used(full.size(), false);
  for (int k = 0; k < gp.clusters; ++k) used[static_cast<std::size_t>(k) * block] = true;
  full[static_cast<std::size_t>(cluster) * block] = kClusterGain;

  std::vector<std::size_t> free_slots;
  for (std::size_t i = 0; i < full.size(); ++i)
    if (!used[i]) free_slots.push_back(i);
  require(params.size() <= free_slots.size(), ErrorCode::InvalidArgument, "too many params for condition width C");
  // Cluster k starts at free slot k * n_free / K and wraps around.
  const std::size_t n_free = free_slots.size();
  const std::size_t first = static_cast<std::size_t>(cluster) * n_free / static_cast<std::size_t>(gp.clusters);
  for (std::size_t j = 0; j < params.size(); ++j) full[free_slots[(first + j) % n_free]] = params[j];
  return full;
}

Condition make_condition(int cluster, std::span<const double> params, const GenParams& gp, Rng& rng) {
  require(gp.sigma_c >= 0.0, ErrorCode::InvalidArgument, "sigma_c must be >= 0");
  check_finite(params, "condition params");
  Condition c;
  c.full = condition_template(cluster, params, gp);
  if (gp.sigma_c > 0.0)
    for (double& v : c.full) v += gp.sigma_c * rng.normal();
  c.pooled = block_mean(c.full, gp.pooled_dim);
  c.cluster = cluster;
  return c;
}

std::vector<long long> stratified_counts(long long n_total, int clusters) {
  require(clusters >= 1, ErrorCode::InvalidArgument, "K must be >= 1");
  require(n_total >= 0, ErrorCode::InvalidArgument, "item count must be >= 0");
  std::vector<long long> counts(static_cast<std::size_t>(clusters), n_total / clusters);
  for (long long r = 0; r < n_total % clusters; ++r) ++counts[static_cast<std::size_t>(r)];
  return counts;
}

Dataset build_stratified(const GenParams& gp, long long n_total, std::uint64_t seed) {
  gp.validate();
  require(n_total >= gp.clusters, ErrorCode::InvalidArgument, "need at least one item per cluster");
  Dataset ds;
  ds.params = gp;
  ds.seed = seed;
  ds.cluster_counts.assign(static_cast<std::size_t>(gp.clusters), 0);
  ds.items.reserve(static_cast<std::size_t>(n_total));
  for (long long i = 0; i < n_total; ++i) {
    const int k = static_cast<int>(i % gp.clusters);
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    const auto params = sample_params(k, gp.dim, rng);
    Item item{generate_clip(k, params, gp.frames, gp.dim), make_condition(k, params, gp, rng)};
    ds.items.push_back(std::move(item));
    ++ds.cluster_counts[static_cast<std::size_t>(k)];
  }
  return ds;
}

Dataset build_dataset(const GenParams& gp, long long n_per_cluster, std::uint64_t seed) {
  require(n_per_cluster >= 1, ErrorCode::InvalidArgument, "n_per_cluster must be >= 1");
  return build_stratified(gp, n_per_cluster * gp.clusters, seed);
}

Dataset permute_labels(const Dataset& ds, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(ds.size());
  for (const auto& it : ds.items) labels.push_back(it.cond.cluster);
  Rng rng(seed);
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
  Dataset out = ds;
  for (std::size_t i = 0; i < labels.size(); ++i) out.items[i].cond.cluster = labels[i];
  return out;
}

bool same_numbers(const Dataset& a, const Dataset& b) {
  return a.params == b.params && a.seed == b.seed && a.items == b.items && a.cluster_counts == b.cluster_counts;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto& gp = ds.params;
  BlobFile f;
  f.magic = kDatasetMagic;
  f.set("K", std::to_string(gp.clusters));
  f.set("F", std::to_string(gp.frames));
  f.set("D", std::to_string(gp.dim));
  f.set("C", std::to_string(gp.cond_dim));
  f.set("P", std::to_string(gp.pooled_dim));
  f.set("sigma_c", format_double(gp.sigma_c));
  f.set("seed", std::to_string(ds.seed));
  f.set("counts", join_ints(ds.cluster_counts));
  f.set("items", std::to_string(ds.items.size()));
  for (const auto& [k, v] : ds.meta) f.set("meta." + k, v);

  const std::size_t per_item = 1 + static_cast<std::size_t>(gp.clip_size() + gp.cond_dim + gp.pooled_dim);
  f.values.reserve(per_item * ds.items.size());
  for (const auto& it : ds.items) {
    require(it.clip.frames() == gp.frames && it.clip.dim() == gp.dim, ErrorCode::Shape, "clip shape differs from dataset F x D");
    require(it.cond.full.size() == static_cast<std::size_t>(gp.cond_dim) &&
                it.cond.pooled.size() == static_cast<std::size_t>(gp.pooled_dim),
            ErrorCode::Shape, "condition width differs from dataset C/P");
    f.values.push_back(static_cast<double>(it.cond.cluster));
    f.values.insert(f.values.end(), it.clip.data().begin(), it.clip.data().end());
    f.values.insert(f.values.end(), it.cond.full.begin(), it.cond.full.end());
    f.values.insert(f.values.end(), it.cond.pooled.begin(), it.cond.pooled.end());
  }
  write_blob_file(path, f);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const BlobFile f = read_blob_file(path, kDatasetMagic);
  Dataset ds;
  auto& gp = ds.params;
  gp.clusters = static_cast<int>(parse_int(f.get("K"), "K"));
  gp.frames = static_cast<int>(parse_int(f.get("F"), "F"));
  gp.dim = static_cast<int>(parse_int(f.get("D"), "D"));
  gp.cond_dim = static_cast<int>(parse_int(f.get("C"), "C"));
  gp.pooled_dim = static_cast<int>(parse_int(f.get("P"), "P"));
  gp.sigma_c = parse_double(f.get("sigma_c"), "sigma_c");
  gp.validate();
  ds.seed = static_cast<std::uint64_t>(std::stoull(f.get("seed")));
  ds.cluster_counts = parse_int_list(f.get("counts"), "counts");
  const auto n_items = static_cast<std::size_t>(parse_int(f.get("items"), "items"));
  for (const auto& [k, v] : f.fields)
    if (k.rfind("meta.", 0) == 0) ds.meta.emplace_back(k.substr(5), v);

  const std::size_t fd = static_cast<std::size_t>(gp.clip_size());
  const std::size_t c = static_cast<std::size_t>(gp.cond_dim), p = static_cast<std::size_t>(gp.pooled_dim);
  const std::size_t per_item = 1 + fd + c + p;
  require(f.values.size() == per_item * n_items, ErrorCode::Format, "blob size does not match item count and shape");
  require(ds.cluster_counts.size() == static_cast<std::size_t>(gp.clusters), ErrorCode::Format, "counts length != K");

  std::vector<long long> seen(static_cast<std::size_t>(gp.clusters), 0);
  ds.items.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    const double* row = f.values.data() + i * per_item;
    const double label = row[0];
    require(label >= 0 && label < gp.clusters && label == std::floor(label), ErrorCode::Format,
            "item " + std::to_string(i) + " has an invalid cluster label");
    Item it;
    it.cond.cluster = static_cast<int>(label);
    it.clip = Clip(gp.frames, gp.dim, std::vector<double>(row + 1, row + 1 + fd));
    it.cond.full.assign(row + 1 + fd, row + 1 + fd + c);
    it.cond.pooled.assign(row + 1 + fd + c, row + per_item);
    require(block_mean(it.cond.full, gp.pooled_dim) == it.cond.pooled, ErrorCode::Format,
            "item " + std::to_string(i) + ": pooled vector is not the block mean of the full condition");
    ++seen[static_cast<std::size_t>(it.cond.cluster)];
    ds.items.push_back(std::move(it));
  }
  require(seen == ds.cluster_counts, ErrorCode::Format, "cluster counts disagree with item labels");
  return ds;
}

Dataset cache_roundtrip(const Dataset& ds, const std::filesystem::path& path) {
  save_dataset(ds, path);
  return load_dataset(path);
}

}  // namespace ddm
