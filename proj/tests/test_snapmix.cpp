#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "camcls/snapmix.hpp"
#include "test_util.hpp"

using namespace camcls;

namespace {

Heatmap<float> uniform_heat(size_t grid, size_t input, float value = 1.0f) {
  Heatmap<float> h;
  h.raw = Tensor<float>::full({grid, grid}, value);
  h.grid = h.raw;
  h.degenerate = value == 0.0f;
  h.full_res = upsample_grid(h.grid, input, input, Upsample::nearest);
  return h;
}

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

TEST_CASE("sample_box spans the lambda extremes") {
  Rng rng(1);
  const Box zero = sample_box(rng, 1.0, 224, 224);
  CHECK(zero.area() == 0);
  const Box full = sample_box(rng, 0.0, 224, 224);
  CHECK(full.top == 0);
  CHECK(full.left == 0);
  CHECK(full.height == 224);
  CHECK(full.width == 224);
  const Box quarter = sample_box(rng, 0.75, 224, 224);
  CHECK(quarter.height == 112);
  CHECK(quarter.width == 112);
  CHECK_THROWS_AS(sample_box(rng, 1.5, 10, 10), ContractError);
}

TEST_CASE("sample_box stays inside the image over many draws") {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const double lambda = rng.uniform();
    const Box b = sample_box(rng, lambda, 48, 64);
    CHECK(b.inside(48, 64));
    const double frac = static_cast<double>(b.area()) / (48.0 * 64.0);
    CHECK(std::abs(frac - (1.0 - lambda)) < 0.1);  // rounding slack
  }
}

TEST_CASE("zero-area box on either side recovers the unmixed sample") {
  Rng rng(3);
  Tensor<float> img_a = testutil::random_tensor<float>(rng, {1, 16, 16});
  Tensor<float> img_b = testutil::random_tensor<float>(rng, {1, 16, 16});
  const Heatmap<float> heat = uniform_heat(4, 16);
  for (const auto& [ba, bb] : {std::pair{Box{0, 0, 0, 0}, Box{2, 2, 8, 8}},
                               std::pair{Box{2, 2, 8, 8}, Box{0, 0, 0, 0}}}) {
    const VirtualSample<float> vs = snapmix_compose(img_a, 1, img_b, 0, heat, heat, ba, bb);
    CHECK(vs.image.data == img_a.data);
    CHECK(vs.weight_a == 1.0);
    CHECK(vs.weight_b == 0.0);
  }
}

TEST_CASE("uniform heatmaps: 30%/50% boxes give weights (0.7, 0.5)") {
  Rng rng(4);
  Tensor<float> img_a = testutil::random_tensor<float>(rng, {1, 20, 20});
  Tensor<float> img_b = testutil::random_tensor<float>(rng, {1, 20, 20});
  const Heatmap<float> heat = uniform_heat(4, 20);
  const Box box_a{0, 0, 10, 12};  // 120 / 400 = 0.3
  const Box box_b{5, 0, 10, 20};  // 200 / 400 = 0.5
  const VirtualSample<float> vs = snapmix_compose(img_a, 1, img_b, 0, heat, heat, box_a, box_b);
  CHECK(vs.rho_a == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(vs.rho_b == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(vs.weight_a == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(vs.weight_b == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("hand heatmap case: rho (0.25, 0.5), weights (0.75, 0.5)") {
  Tensor<float> img_a = Tensor<float>::zeros({1, 2, 2});
  Tensor<float> img_b = Tensor<float>::full({1, 2, 2}, 1.0f);
  const Heatmap<float> heat_a =
      heat_from_grid(Tensor<float>({2, 2}, std::vector<float>{1, 0, 3, 0}), 2);
  const Heatmap<float> heat_b = uniform_heat(2, 2);
  const Box box_a{0, 0, 1, 1};
  const Box box_b{0, 0, 1, 2};  // half the image
  const VirtualSample<float> vs = snapmix_compose(img_a, 1, img_b, 0, heat_a, heat_b, box_a, box_b);
  CHECK(vs.rho_a == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(vs.rho_b == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(vs.weight_a == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(vs.weight_b == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("compositing changes no pixel outside box_a") {
  Rng rng(5);
  Tensor<float> img_a = testutil::random_tensor<float>(rng, {1, 16, 16});
  Tensor<float> img_b = testutil::random_tensor<float>(rng, {1, 16, 16});
  const Heatmap<float> heat = uniform_heat(4, 16);
  const Box box_a{3, 5, 6, 4};
  const Box box_b{0, 0, 9, 11};
  const VirtualSample<float> vs = snapmix_compose(img_a, 1, img_b, 1, heat, heat, box_a, box_b);
  for (size_t y = 0; y < 16; ++y)
    for (size_t x = 0; x < 16; ++x) {
      const bool in_a = y >= box_a.top && y < box_a.top + box_a.height && x >= box_a.left &&
                        x < box_a.left + box_a.width;
      if (!in_a) CHECK(vs.image(0, y, x) == img_a(0, y, x));
    }
}

TEST_CASE("pasted region is the resized box_b content") {
  // constant source region survives resizing exactly
  Tensor<float> img_a = Tensor<float>::zeros({1, 16, 16});
  Tensor<float> img_b = Tensor<float>::full({1, 16, 16}, 2.5f);
  const Heatmap<float> heat = uniform_heat(4, 16);
  const Box box_a{1, 2, 5, 7};
  const Box box_b{8, 8, 3, 3};
  const VirtualSample<float> vs = snapmix_compose(img_a, 0, img_b, 1, heat, heat, box_a, box_b);
  for (size_t y = box_a.top; y < box_a.top + box_a.height; ++y)
    for (size_t x = box_a.left; x < box_a.left + box_a.width; ++x)
      CHECK(vs.image(0, y, x) == doctest::Approx(2.5f));
}

TEST_CASE("mismatched image sizes are rejected") {
  Tensor<float> img_a({1, 16, 16});
  Tensor<float> img_b({1, 8, 8});
  const Heatmap<float> heat = uniform_heat(4, 16);
  Rng rng(6);
  CHECK_THROWS_AS(snapmix(img_a, 1, img_b, 0, heat, heat, rng, 1.0), ContractError);
}

TEST_CASE("full snapmix keeps rho in range and respects the weight contract") {
  Rng rng(7);
  Tensor<float> img_a = testutil::random_tensor<float>(rng, {1, 32, 32});
  Tensor<float> img_b = testutil::random_tensor<float>(rng, {1, 32, 32});
  Tensor<float> grid_a({4, 4}), grid_b({4, 4});
  for (int round = 0; round < 200; ++round) {
    for (float& v : grid_a.data) v = static_cast<float>(rng.normal());
    for (float& v : grid_b.data) v = static_cast<float>(rng.normal());
    const Heatmap<float> ha = heat_from_grid(grid_a, 32);
    const Heatmap<float> hb = heat_from_grid(grid_b, 32);
    const VirtualSample<float> vs = snapmix(img_a, 1, img_b, 0, ha, hb, rng, 1.0);
    CHECK(vs.rho_a >= 0.0);
    CHECK(vs.rho_a <= 1.0);
    CHECK(vs.rho_b >= 0.0);
    CHECK(vs.rho_b <= 1.0);
    CHECK(vs.weight_a >= 0.0);
    CHECK(vs.weight_a <= 1.0);
    CHECK(vs.weight_b >= 0.0);
    CHECK(vs.weight_b <= 1.0);
  }
}

TEST_CASE("mixed bce: degenerate weights reduce to plain bce") {
  VirtualSample<float> vs;
  vs.label_a = 1;
  vs.label_b = 0;
  vs.weight_a = 1.0;
  vs.weight_b = 0.0;
  for (double z : {-3.0, 0.0, 1.7}) {
    CHECK(mixed_bce_loss(z, vs) == doctest::Approx(ops::bce_with_logit(z, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("mixed bce: same-class mix behaves like the common label") {
  VirtualSample<float> vs;
  vs.label_a = 1;
  vs.label_b = 1;
  vs.weight_a = 0.6;
  vs.weight_b = 0.4;
  for (double z : {-1.0, 0.25, 4.0})
    CHECK(mixed_bce_loss(z, vs) == doctest::Approx(ops::bce_with_logit(z, 1.0)).epsilon(1e-12));
}

TEST_CASE("mixed bce frozen value: logit 0, labels (1,0), weights (0.75, 0.5)") {
  VirtualSample<float> vs;
  vs.label_a = 1;
  vs.label_b = 0;
  vs.weight_a = 0.75;
  vs.weight_b = 0.5;
  // 0.75*ln2 + 0.5*ln2 = 1.25*ln2
  CHECK(mixed_bce_loss(0.0, vs) == doctest::Approx(1.25 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("identity sample carries weights (1,0)") {
  Tensor<float> img = Tensor<float>::full({1, 4, 4}, 0.5f);
  const VirtualSample<float> vs = identity_sample(img, 1);
  CHECK(vs.weight_a == 1.0);
  CHECK(vs.weight_b == 0.0);
  CHECK(vs.image.data == img.data);
}
