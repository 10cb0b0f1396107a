#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "camcls/tta.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace camcls;

namespace {

Heatmap<float> heat_from_grid(const Tensor<float>& grid, size_t input) {
  Heatmap<float> h;
  h.raw = grid;
  h.grid = grid;
  for (float& v : h.grid.data) v = v > 0.0f ? v : 0.0f;
  double total = 0.0;
  for (float v : h.grid.data) total += v;
  h.degenerate = total == 0.0;
  h.full_res = upsample_grid(h.grid, input, input, Upsample::nearest);
  return h;
}

}  // namespace

TEST_CASE("uniform heatmap ranks in row-major order") {
  const Heatmap<float> h = heat_from_grid(Tensor<float>::full({4, 4}, 1.0f), 32);
  const auto ranked = rank_patches(h, 8);
  REQUIRE(ranked.size() == 16);
  for (size_t i = 0; i < 16; ++i) {
    CHECK(ranked[i].first == i / 4);
    CHECK(ranked[i].second == i % 4);
  }
}

TEST_CASE("single hot patch ranks first") {
  Tensor<float> grid = Tensor<float>::zeros({4, 4});
  grid(2, 3) = 5.0f;
  const auto ranked = rank_patches(heat_from_grid(grid, 32), 8);
  CHECK(ranked[0] == GridCell{2, 3});
}

TEST_CASE("ranking matches the sort oracle on random heatmaps") {
  Rng rng(31);
  for (int round = 0; round < 200; ++round) {
    Tensor<float> grid({4, 4});
    for (float& v : grid.data) v = static_cast<float>(rng.integer(4));
    const Heatmap<float> h = heat_from_grid(grid, 32);
    const auto ranked = rank_patches(h, 8);
    const Tensor<float> sums = patch_cam_sums(h, 8);
    // strictly non-increasing with row-major ties
    for (size_t i = 0; i + 1 < ranked.size(); ++i) {
      const float a = sums(ranked[i].first, ranked[i].second);
      const float b = sums(ranked[i + 1].first, ranked[i + 1].second);
      CHECK(a >= b);
      if (a == b)
        CHECK(ranked[i].first * 4 + ranked[i].second < ranked[i + 1].first * 4 + ranked[i + 1].second);
    }
  }
}

TEST_CASE("rank_patches enforces divisibility") {
  const Heatmap<float> h = heat_from_grid(Tensor<float>::full({4, 4}, 1.0f), 32);
  CHECK_THROWS_AS(rank_patches(h, 5), ContractError);
}

TEST_CASE("masked images: counts, nesting, and untouched pixels") {
  Rng rng(32);
  Tensor<float> image = testutil::random_tensor<float>(rng, {1, 32, 32});
  for (float& v : image.data) v += 10.0f;  // keep every pixel away from the fill value
  Tensor<float> grid({4, 4});
  for (float& v : grid.data) v = static_cast<float>(rng.uniform());
  const auto ranked = rank_patches(heat_from_grid(grid, 32), 8);

  const auto masked = make_masked_images(image, ranked, 5, 0.0f, 8);
  REQUIRE(masked.size() == 5);
  std::set<size_t> prev;
  for (size_t m = 0; m < masked.size(); ++m) {
    std::set<size_t> cur;
    for (size_t i = 0; i < image.numel(); ++i)
      if (masked[m].data[i] != image.data[i]) {
        CHECK(masked[m].data[i] == 0.0f);
        cur.insert(i);
      }
    CHECK(cur.size() == (m + 1) * 64);
    for (size_t i : prev) CHECK(cur.count(i) == 1);  // strict nesting
    prev = cur;
  }
}

TEST_CASE("k = 1 masks exactly one patch") {
  Tensor<float> image = Tensor<float>::full({1, 16, 16}, 3.0f);
  Tensor<float> grid({2, 2}, std::vector<float>{4, 3, 2, 1});
  const auto ranked = rank_patches(heat_from_grid(grid, 16), 8);
  const auto masked = make_masked_images(image, ranked, 1, 0.0f, 8);
  REQUIRE(masked.size() == 1);
  size_t changed = 0;
  for (size_t i = 0; i < image.numel(); ++i)
    if (masked[0].data[i] != 3.0f) ++changed;
  CHECK(changed == 64);
}

TEST_CASE("no-op fill on a constant image leaves all k images identical") {
  Tensor<float> image = Tensor<float>::full({1, 16, 16}, 0.25f);
  Tensor<float> grid({2, 2}, std::vector<float>{4, 3, 2, 1});
  const auto ranked = rank_patches(heat_from_grid(grid, 16), 8);
  const auto masked = make_masked_images(image, ranked, 4, 0.25f, 8);
  for (const auto& img : masked) CHECK(img.data == image.data);
}

TEST_CASE("paper numbers: k=31 of a 28x28 grid masks 1984 pixels") {
  Tensor<float> image = Tensor<float>::full({1, 224, 224}, 1.0f);
  Rng rng(33);
  Tensor<float> grid({28, 28});
  for (float& v : grid.data) v = static_cast<float>(rng.uniform());
  const auto ranked = rank_patches(heat_from_grid(grid, 224), 8);
  REQUIRE(ranked.size() == 28 * 28);
  const auto masked = make_masked_images(image, ranked, 31, 0.0f, 8);
  size_t zeroed = 0;
  for (float v : masked.back().data)
    if (v == 0.0f) ++zeroed;
  CHECK(zeroed == 1984);
  CHECK_THROWS_AS(make_masked_images(image, ranked, 28 * 28 + 1, 0.0f, 8), ContractError);
}

TEST_CASE("vote: fig-2 style narrative flips a weak negative to positive") {
  std::vector<double> probs;
  probs.insert(probs.end(), {0.61, 0.59, 0.64});  // early masks already cross 0.5
  for (int i = 0; i < 12; ++i) probs.push_back(0.7);
  for (int i = 0; i < 16; ++i) probs.push_back(0.91);
  REQUIRE(probs.size() == 31);
  const VoteRecord rec = vote(0.47, probs, 0.2);
  // negative original: supporting means p <= 0.8; the late 0.91s are not
  CHECK(rec.flipped);
  CHECK(rec.final_label == 1);
}

TEST_CASE("vote: unanimous support keeps the label") {
  const std::vector<double> probs(31, 0.9);
  const VoteRecord rec = vote(0.9, probs, 0.2);
  CHECK_FALSE(rec.flipped);
  CHECK(rec.final_label == 1);
  for (bool s : rec.supporting) CHECK(s);
}

TEST_CASE("vote: 16 of 31 non-supporting crosses the strict majority") {
  std::vector<double> probs(31, 0.9);
  for (int i = 0; i < 16; ++i) probs[i] = 0.1;  // below theta = 0.2
  const VoteRecord rec = vote(0.9, probs, 0.2);
  CHECK(rec.flipped);
  CHECK(rec.final_label == 0);
  std::vector<double> probs15(31, 0.9);
  for (int i = 0; i < 15; ++i) probs15[i] = 0.1;
  CHECK_FALSE(vote(0.9, probs15, 0.2).flipped);
}

TEST_CASE("vote boundary: p exactly at theta supports, at 1-theta for negatives") {
  const VoteRecord pos = vote(0.8, std::vector<double>{0.2, 0.2, 0.2}, 0.2);
  for (bool s : pos.supporting) CHECK(s);
  const VoteRecord neg = vote(0.3, std::vector<double>{0.8, 0.8, 0.8}, 0.2);
  for (bool s : neg.supporting) CHECK(s);
}

TEST_CASE("theta = 0.5 reduces support to hard-label agreement") {
  Rng rng(34);
  for (int round = 0; round < 200; ++round) {
    const double orig = rng.uniform();
    std::vector<double> probs(7);
    for (double& p : probs) p = rng.uniform();
    const VoteRecord rec = vote(orig, probs, 0.5);
    const bool positive = orig > 0.5;
    for (size_t i = 0; i < probs.size(); ++i) {
      const bool agrees = positive ? probs[i] >= 0.5 : probs[i] <= 0.5;
      CHECK(rec.supporting[i] == agrees);
    }
  }
}

TEST_CASE("vote is monotone in each masked probability for positive originals") {
  Rng rng(35);
  for (int round = 0; round < 100; ++round) {
    std::vector<double> probs(9);
    for (double& p : probs) p = rng.uniform();
    const VoteRecord before = vote(0.85, probs, 0.3);
    const size_t j = rng.integer(probs.size());
    probs[j] = std::min(1.0, probs[j] + rng.uniform() * (1.0 - probs[j]));
    const VoteRecord after = vote(0.85, probs, 0.3);
    if (before.flipped == false) CHECK(after.flipped == false);
  }
}

TEST_CASE("vote matches brute_vote on 1000 random triples with boundary values") {
  Rng rng(36);
  for (int round = 0; round < 1000; ++round) {
    const double theta = 0.05 + 0.45 * rng.uniform();
    const size_t k = 1 + rng.integer(41);
    const double orig = rng.uniform();
    std::vector<double> probs(k);
    for (double& p : probs) {
      const double pick = rng.uniform();
      if (pick < 0.15)
        p = theta;  // exact boundary
      else if (pick < 0.3)
        p = 1.0 - theta;
      else
        p = rng.uniform();
    }
    const VoteRecord rec = vote(orig, probs, theta);
    const auto want = oracle::brute_vote(orig, probs, theta);
    CHECK(rec.flipped == want.flipped);
    CHECK(rec.final_label == want.final_label);
  }
}

TEST_CASE("tta config validation") {
  TtaConfig cfg;
  cfg.k = 63;
  cfg.theta = 0.2;
  cfg.mask_patch_px = 8;
  cfg.validate(64);
  cfg.theta = 0.6;
  CHECK_THROWS_AS(cfg.validate(64), ConfigError);
  cfg.theta = 0.2;
  cfg.k = 65;
  CHECK_THROWS_AS(cfg.validate(64), ConfigError);
  cfg.k = 10;
  cfg.mask_patch_px = 7;
  CHECK_THROWS_AS(cfg.validate(64), ConfigError);
}
