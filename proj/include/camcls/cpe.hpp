#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "camcls/autodiff.hpp"
#include "camcls/tensor.hpp"

namespace camcls {

using GridCell = std::pair<size_t, size_t>;

// The four cells feeding the contrastive patch term: two with the highest
// activation sums (u), two with the lowest (v).
struct SelectedCells {
  GridCell u1, u2, v1, v2;
};

template <typename T>
struct PatchSelection {
  Tensor<T> u1, u2, v1, v2;  // C vectors
  SelectedCells cells;
};

// Ties break on row-major cell index: lower index wins on the high side,
// higher index wins on the low side, making the selection deterministic.
template <typename T>
SelectedCells select_cells(const Tensor<T>& scores) {
  if (scores.rank() != 2) throw DimensionError("select_cells: expected a 2-d score grid");
  const size_t n = scores.numel();
  if (n < 4) throw ContractError("select_cells: need at least 4 cells");
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (scores.data[a] != scores.data[b]) return scores.data[a] > scores.data[b];
    return a < b;
  });
  const size_t cols = scores.dim(1);
  auto cell = [cols](size_t flat) { return GridCell{flat / cols, flat % cols}; };
  SelectedCells out;
  out.u1 = cell(idx[0]);
  out.u2 = cell(idx[1]);
  out.v1 = cell(idx[n - 1]);
  out.v2 = cell(idx[n - 2]);
  return out;
}

template <typename T>
PatchSelection<T> select_patches(const Tensor<T>& feature, const Tensor<T>& scores) {
  if (feature.rank() != 3) throw DimensionError("select_patches: expected CxGxG feature");
  const SelectedCells cells = select_cells(scores);
  const size_t c = feature.dim(0);
  auto vec = [&](GridCell cell) {
    Tensor<T> v({c});
    for (size_t k = 0; k < c; ++k) v.data[k] = feature(k, cell.first, cell.second);
    return v;
  };
  PatchSelection<T> sel;
  sel.cells = cells;
  sel.u1 = vec(cells.u1);
  sel.u2 = vec(cells.u2);
  sel.v1 = vec(cells.v1);
  sel.v2 = vec(cells.v2);
  return sel;
}

namespace detail {

// ln(e^anchor + sum e^cross) - anchor, max-shifted.
inline double lse_term(double anchor, const std::array<double, 4>& cross) {
  double m = anchor;
  for (double c : cross) m = std::max(m, c);
  double acc = std::exp(anchor - m);
  for (double c : cross) acc += std::exp(c - m);
  return m + std::log(acc) - anchor;
}

}  // namespace detail

// Contrastive patch embedding loss over raw dot products, no temperature,
// no normalization. Always positive; approaches 0 only when both
// within-pair products dominate every cross product.
template <typename T>
double cpe_loss(const Tensor<T>& u1, const Tensor<T>& u2, const Tensor<T>& v1,
                const Tensor<T>& v2) {
  for (const Tensor<T>* t : {&u1, &u2, &v1, &v2})
    if (!t->all_finite()) throw ContractError("cpe_loss: non-finite input vector");
  auto d = [](const Tensor<T>& a, const Tensor<T>& b) {
    if (a.numel() != b.numel()) throw DimensionError("cpe_loss: vector length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i)
      s += static_cast<double>(a.data[i]) * static_cast<double>(b.data[i]);
    return s;
  };
  const std::array<double, 4> cross = {d(u1, v1), d(u1, v2), d(u2, v1), d(u2, v2)};
  return detail::lse_term(d(u1, u2), cross) + detail::lse_term(d(v1, v2), cross);
}

template <typename T>
double cpe_loss(const PatchSelection<T>& sel) {
  return cpe_loss(sel.u1, sel.u2, sel.v1, sel.v2);
}

// Differentiable tape form, composed from dot products and the stabilized
// softmax rejection terms.
template <typename T>
int cpe_loss_node(Tape<T>& tape, int u1, int u2, int v1, int v2) {
  const int a = tape.dot(u1, u2);
  const int b = tape.dot(v1, v2);
  const std::vector<int> cross = {tape.dot(u1, v1), tape.dot(u1, v2), tape.dot(u2, v1),
                                  tape.dot(u2, v2)};
  const int term_u = tape.neg_log_softmax(a, cross);
  const int term_v = tape.neg_log_softmax(b, cross);
  return tape.add(term_u, term_v);
}

}  // namespace camcls
