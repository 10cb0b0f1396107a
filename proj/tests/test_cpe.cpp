#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "camcls/autodiff.hpp"
#include "camcls/cpe.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace camcls;
using testutil::rel_err;

TEST_CASE("selection on strictly descending scores takes the ends") {
  Tensor<float> scores({3, 3});
  for (size_t i = 0; i < 9; ++i) scores.data[i] = static_cast<float>(9 - i);
  const SelectedCells c = select_cells(scores);
  CHECK(c.u1 == GridCell{0, 0});
  CHECK(c.u2 == GridCell{0, 1});
  CHECK(c.v1 == GridCell{2, 2});
  CHECK(c.v2 == GridCell{2, 1});
}

TEST_CASE("tie break: all-equal scores resolve by row-major rule") {
  Tensor<float> scores = Tensor<float>::full({4, 4}, 1.0f);
  const SelectedCells c = select_cells(scores);
  CHECK(c.u1 == GridCell{0, 0});
  CHECK(c.u2 == GridCell{0, 1});
  CHECK(c.v1 == GridCell{3, 3});
  CHECK(c.v2 == GridCell{3, 2});
}

TEST_CASE("selection matches the full-sort oracle on random scores") {
  Rng rng(17);
  for (int round = 0; round < 300; ++round) {
    const size_t g = 2 + rng.integer(6);
    Tensor<float> scores({g, g});
    for (float& v : scores.data)
      v = static_cast<float>(rng.integer(5));  // coarse values force ties
    const SelectedCells c = select_cells(scores);
    std::vector<double> flat(scores.data.begin(), scores.data.end());
    const std::vector<size_t> want = oracle::sort_select(flat);
    CHECK(c.u1.first * g + c.u1.second == want[0]);
    CHECK(c.u2.first * g + c.u2.second == want[1]);
    CHECK(c.v1.first * g + c.v1.second == want[2]);
    CHECK(c.v2.first * g + c.v2.second == want[3]);
  }
}

TEST_CASE("selection contract: four distinct cells, ordered scores") {
  Rng rng(18);
  Tensor<float> feature = testutil::random_tensor<float>(rng, {8, 3, 3});
  Tensor<float> scores({3, 3});
  for (float& v : scores.data) v = static_cast<float>(rng.normal());
  const PatchSelection<float> sel = select_patches(feature, scores);
  auto flat = [&](GridCell c) { return c.first * 3 + c.second; };
  CHECK(flat(sel.cells.u1) != flat(sel.cells.u2));
  CHECK(flat(sel.cells.u1) != flat(sel.cells.v1));
  CHECK(flat(sel.cells.u1) != flat(sel.cells.v2));
  CHECK(flat(sel.cells.u2) != flat(sel.cells.v1));
  CHECK(flat(sel.cells.u2) != flat(sel.cells.v2));
  CHECK(flat(sel.cells.v1) != flat(sel.cells.v2));
  const float su1 = scores(sel.cells.u1.first, sel.cells.u1.second);
  const float su2 = scores(sel.cells.u2.first, sel.cells.u2.second);
  const float sv1 = scores(sel.cells.v1.first, sel.cells.v1.second);
  const float sv2 = scores(sel.cells.v2.first, sel.cells.v2.second);
  CHECK(su1 >= su2);
  CHECK(sv2 >= sv1);
  for (size_t i = 0; i < 9; ++i) {
    bool selected = false;
    for (GridCell c : {sel.cells.u1, sel.cells.u2, sel.cells.v1, sel.cells.v2})
      if (flat(c) == i) selected = true;
    if (!selected) {
      CHECK(scores.data[i] <= su2);
      CHECK(scores.data[i] >= sv2);
    }
  }
  // embedding vectors really are the feature columns
  for (size_t k = 0; k < 8; ++k)
    CHECK(sel.u1.data[k] == feature(k, sel.cells.u1.first, sel.cells.u1.second));
}

TEST_CASE("grids smaller than four cells are rejected") {
  Tensor<float> tiny = Tensor<float>::full({1, 3}, 1.0f);
  CHECK_THROWS_AS(select_cells(tiny), ContractError);
}

TEST_CASE("all-zero vectors give exactly 2 ln 5") {
  Tensor<float> z = Tensor<float>::zeros({16});
  CHECK(std::abs(cpe_loss(z, z, z, z) - 2.0 * std::log(5.0)) < 1e-9);
}

TEST_CASE("orthogonal pairs give exactly 2 ln(1 + 4/e)") {
  Tensor<float> u({2}, std::vector<float>{1.0f, 0.0f});
  Tensor<float> v({2}, std::vector<float>{0.0f, 1.0f});
  const double expected = 2.0 * std::log(1.0 + 4.0 / std::exp(1.0));
  CHECK(std::abs(cpe_loss(u, u, v, v) - expected) < 1e-9);
}

TEST_CASE("scaling separated pairs drives the loss monotonically to zero") {
  double prev = 1e9;
  for (double t : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    Tensor<float> u({2}, std::vector<float>{static_cast<float>(t), 0.0f});
    Tensor<float> v({2}, std::vector<float>{0.0f, static_cast<float>(t)});
    const double loss = cpe_loss(u, u, v, v);
    CHECK(loss > 0.0);
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-9);
}

TEST_CASE("loss is positive and finite for random inputs, even large ones") {
  Rng rng(20);
  for (int round = 0; round < 100; ++round) {
    const double scale = round % 2 == 0 ? 1.0 : 40.0;  // exercise the lse stabilization
    Tensor<float> u1 = testutil::random_tensor<float>(rng, {8}, scale);
    Tensor<float> u2 = testutil::random_tensor<float>(rng, {8}, scale);
    Tensor<float> v1 = testutil::random_tensor<float>(rng, {8}, scale);
    Tensor<float> v2 = testutil::random_tensor<float>(rng, {8}, scale);
    const double loss = cpe_loss(u1, u2, v1, v2);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
  }
}

TEST_CASE("swapping within a pair leaves the loss unchanged") {
  Rng rng(21);
  Tensor<float> u1 = testutil::random_tensor<float>(rng, {6});
  Tensor<float> u2 = testutil::random_tensor<float>(rng, {6});
  Tensor<float> v1 = testutil::random_tensor<float>(rng, {6});
  Tensor<float> v2 = testutil::random_tensor<float>(rng, {6});
  const double base = cpe_loss(u1, u2, v1, v2);
  CHECK(cpe_loss(u2, u1, v1, v2) == doctest::Approx(base).epsilon(1e-12));
  CHECK(cpe_loss(u1, u2, v2, v1) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("non-finite vectors are a contract error") {
  Tensor<float> ok = Tensor<float>::zeros({4});
  Tensor<float> bad = ok;
  bad.data[2] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(cpe_loss(ok, ok, ok, bad), ContractError);
}

TEST_CASE("tape form agrees with the value form and passes gradient checks") {
  Rng rng(22);
  std::vector<Tensor<double>> leaves = {
      testutil::random_tensor<double>(rng, {5}), testutil::random_tensor<double>(rng, {5}),
      testutil::random_tensor<double>(rng, {5}), testutil::random_tensor<double>(rng, {5})};

  Tape<double> tape;
  std::vector<int> ids;
  for (auto& leaf : leaves) ids.push_back(tape.leaf(leaf));
  const int loss = cpe_loss_node(tape, ids[0], ids[1], ids[2], ids[3]);
  const double direct = cpe_loss(leaves[0], leaves[1], leaves[2], leaves[3]);
  CHECK(tape.value(loss).data[0] == doctest::Approx(direct).epsilon(1e-12));

  tape.backward(loss);
  auto eval = [&]() {
    Tape<double> t;
    std::vector<int> id;
    for (auto& leaf : leaves) id.push_back(t.leaf(leaf));
    return t.value(cpe_loss_node(t, id[0], id[1], id[2], id[3])).data[0];
  };
  for (size_t l = 0; l < leaves.size(); ++l) {
    const std::vector<double> fd = oracle::fd_gradient(eval, leaves[l], 1e-5);
    for (size_t i = 0; i < fd.size(); ++i)
      CHECK(rel_err(tape.grad(ids[l]).data[i], fd[i]) < 1e-4);
  }
}
