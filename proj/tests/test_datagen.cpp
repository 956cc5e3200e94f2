#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ddm/binary_io.hpp"
#include "ddm/datagen.hpp"
#include "ddm/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ddm;
using testutil::code_of;

namespace {

void expect_frames(const Clip& c, const std::vector<std::vector<double>>& rows) {
  REQUIRE(c.frames() == static_cast<int>(rows.size()));
  for (int f = 0; f < c.frames(); ++f)
    for (int d = 0; d < c.dim(); ++d) CHECK(c(f, d) == rows[f][d]);
}

}  // namespace

TEST_CASE("linear drift clip") {
  const std::vector<double> p{0, 0, 1, 0};
  expect_frames(generate_clip(0, p, 3, 2), {{0, 0}, {1, 0}, {2, 0}});
}

TEST_CASE("quarter-turn rotation clip") {
  const std::vector<double> p{1, 0, std::numbers::pi / 2};
  const Clip c = generate_clip(1, p, 4, 2);
  const std::vector<std::vector<double>> want{{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (int f = 0; f < 4; ++f)
    for (int d = 0; d < 2; ++d) CHECK(std::abs(c(f, d) - want[f][d]) < 1e-15);
}

TEST_CASE("oscillation clip") {
  const std::vector<double> p{0, 0, 1, 0, std::numbers::pi / 2};
  const Clip c = generate_clip(2, p, 3, 2);
  const std::vector<std::vector<double>> want{{0, 0}, {1, 0}, {0, 0}};
  for (int f = 0; f < 3; ++f)
    for (int d = 0; d < 2; ++d) CHECK(std::abs(c(f, d) - want[f][d]) < 1e-15);
}

TEST_CASE("generate_clip rejects bad input") {
  const std::vector<double> p{0, 0, 1, 0};
  CHECK(code_of([&] { generate_clip(3, p, 3, 2); }) == ErrorCode::InvalidArgument);
  const std::vector<double> bad{0, NAN, 1, 0};
  CHECK(code_of([&] { generate_clip(0, bad, 3, 2); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { generate_clip(0, p, 1, 2); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("generate_clip is deterministic") {
  Rng rng(7);
  for (int k = 0; k < kNumFamilies; ++k) {
    const auto p = sample_params(k, 4, rng);
    CHECK(generate_clip(k, p, 8, 4) == generate_clip(k, p, 8, 4));
  }
}

TEST_CASE("block mean pooling") {
  const std::vector<double> full{1, 3, 5, 7};
  CHECK(block_mean(full, 2) == std::vector<double>{2, 6});
}

TEST_CASE("make_condition") {
  GenParams gp;
  SUBCASE("zero noise reproduces the template") {
    gp.sigma_c = 0.0;
    const std::vector<double> zeros(param_count(0, gp.dim), 0.0);
    Rng rng(3);
    const Condition c = make_condition(0, zeros, gp, rng);
    CHECK(c.full == condition_template(0, zeros, gp));
    CHECK(c.cluster == 0);
    CHECK(c.full[0] == kClusterGain);
  }
  SUBCASE("same stream state gives the same condition") {
    Rng a(11), b(11);
    const auto p = sample_params(1, gp.dim, a);
    const auto q = sample_params(1, gp.dim, b);
    CHECK(make_condition(1, p, gp, a) == make_condition(1, q, gp, b));
  }
  SUBCASE("pooled is recomputable bit for bit") {
    Rng rng(5);
    for (int k = 0; k < gp.clusters; ++k) {
      const auto p = sample_params(k, gp.dim, rng);
      const Condition c = make_condition(k, p, gp, rng);
      CHECK(block_mean(c.full, gp.pooled_dim) == c.pooled);
      CHECK(c.pooled.size() == static_cast<std::size_t>(gp.pooled_dim));
    }
  }
  SUBCASE("C not divisible by P is rejected") {
    gp.cond_dim = 15;
    Rng rng(1);
    const std::vector<double> zeros(param_count(0, gp.dim), 0.0);
    CHECK(code_of([&] { make_condition(0, zeros, gp, rng); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("each cluster keeps its own one-hot slot and pooled block") {
  GenParams gp;
  for (int k = 0; k < gp.clusters; ++k) {
    const std::vector<double> zeros(param_count(k, gp.dim), 0.0);
    const auto full = condition_template(k, zeros, gp);
    const std::size_t slot = static_cast<std::size_t>(k * (gp.cond_dim / gp.pooled_dim));
    CHECK(full[slot] == kClusterGain);
    const auto pooled = block_mean(full, gp.pooled_dim);
    CHECK(static_cast<int>(std::max_element(pooled.begin(), pooled.end()) - pooled.begin()) == k);
  }
}

TEST_CASE("build_dataset stratification and determinism") {
  GenParams gp;
  const Dataset ds = build_dataset(gp, 4, 42);
  CHECK(ds.size() == 12);
  CHECK(ds.cluster_counts == std::vector<long long>{4, 4, 4});
  for (int k = 0; k < 3; ++k) CHECK(ds.indices_of(k).size() == 4);
  CHECK(same_numbers(ds, build_dataset(gp, 4, 42)));
  CHECK_FALSE(same_numbers(ds, build_dataset(gp, 4, 43)));
  CHECK(code_of([&] { build_dataset(gp, 0, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("round-robin remainder rule") {
  CHECK(stratified_counts(2048, 3) == std::vector<long long>{683, 683, 682});
  CHECK(stratified_counts(10, 3) == std::vector<long long>{4, 3, 3});
  CHECK(stratified_counts(9, 3) == std::vector<long long>{3, 3, 3});
  const Dataset ev = build_stratified(GenParams{}, 2048, 9);
  CHECK(ev.cluster_counts == std::vector<long long>{683, 683, 682});
  for (long long n : {3LL, 7LL, 100LL, 301LL}) {
    const auto c = stratified_counts(n, 3);
    CHECK(*std::max_element(c.begin(), c.end()) - *std::min_element(c.begin(), c.end()) <= 1);
  }
}

TEST_CASE("item clusters match their generator") {
  const Dataset ds = build_dataset(GenParams{}, 20, 5);
  long long total = 0;
  for (auto c : ds.cluster_counts) total += c;
  CHECK(total == static_cast<long long>(ds.size()));
  for (const auto& it : ds.items) {
    CHECK(it.cond.cluster >= 0);
    CHECK(it.cond.cluster < 3);
    for (double v : it.clip.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("clusters are separable by nearest centroid") {
  const GenParams gp;
  const Dataset train = build_stratified(gp, 300, 100);
  const Dataset test = build_stratified(gp, 300, 200);
  CHECK(oracle::nearest_centroid_accuracy(train, test) >= 0.95);
}

TEST_CASE("permute_labels keeps items and permutes labels") {
  const Dataset ds = build_dataset(GenParams{}, 50, 1);
  const Dataset sh = permute_labels(ds, 99);
  REQUIRE(sh.size() == ds.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(sh.items[i].clip == ds.items[i].clip);
    if (sh.items[i].cond.cluster != ds.items[i].cond.cluster) ++changed;
  }
  CHECK(changed > ds.size() / 3);
}

TEST_CASE("dataset cache roundtrip and corruption") {
  const auto dir = testutil::scratch_dir("datagen_cache");
  const Dataset ds = build_dataset(GenParams{}, 5, 77);
  const auto path = dir / "d.ds";
  CHECK(same_numbers(cache_roundtrip(ds, path), ds));

  std::string bytes = read_text_file(path);
  SUBCASE("truncated file is a checksum error") {
    write_text_file(dir / "trunc.ds", bytes.substr(0, bytes.size() - 40));
    CHECK(code_of([&] { load_dataset(dir / "trunc.ds"); }) == ErrorCode::Checksum);
  }
  SUBCASE("flipped blob byte is a checksum error") {
    bytes[bytes.size() - 20] ^= 0x5a;
    write_text_file(dir / "flip.ds", bytes);
    CHECK(code_of([&] { load_dataset(dir / "flip.ds"); }) == ErrorCode::Checksum);
  }
  SUBCASE("header version 2 is a version error") {
    const auto pos = bytes.find("version=1");
    REQUIRE(pos != std::string::npos);
    bytes[pos + 8] = '2';
    write_text_file(dir / "v2.ds", bytes);
    CHECK(code_of([&] { load_dataset(dir / "v2.ds"); }) == ErrorCode::Version);
  }
  SUBCASE("wrong magic is a format error") {
    bytes[0] = 'X';
    write_text_file(dir / "magic.ds", bytes);
    CHECK(code_of([&] { load_dataset(dir / "magic.ds"); }) == ErrorCode::Format);
  }
  SUBCASE("missing file is an io error") {
    CHECK(code_of([&] { load_dataset(dir / "absent.ds"); }) == ErrorCode::Io);
  }
}

TEST_CASE("format_double roundtrips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0})
    CHECK(parse_double(format_double(v), "v") == v);
}
