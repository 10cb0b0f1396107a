#include "oracles.hpp"

#include <algorithm>
#include <numeric>

namespace camcls::oracle {

double fd_coordinate(const std::function<double()>& eval, double* coord, double step) {
  const double saved = *coord;
  *coord = saved + step;
  const double hi = eval();
  *coord = saved - step;
  const double lo = eval();
  *coord = saved;
  return (hi - lo) / (2.0 * step);
}

std::vector<double> fd_gradient(const std::function<double()>& eval, Tensor<double>& param,
                                double step) {
  std::vector<double> g(param.numel());
  for (size_t i = 0; i < param.numel(); ++i)
    g[i] = fd_coordinate(eval, &param.data[i], step);
  return g;
}

std::vector<size_t> sort_select(const std::vector<double>& scores) {
  std::vector<size_t> high(scores.size());
  std::iota(high.begin(), high.end(), size_t{0});
  std::vector<size_t> low = high;
  std::sort(high.begin(), high.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::sort(low.begin(), low.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a > b;
  });
  return {high[0], high[1], low[0], low[1]};
}

BruteVote brute_vote(double original_prob, const std::vector<double>& masked_probs, double theta) {
  const int original_label = original_prob > 0.5 ? 1 : 0;
  size_t not_supporting = 0;
  for (double p : masked_probs) {
    bool supporting;
    if (original_label == 1)
      supporting = p >= theta;
    else
      supporting = p <= 1.0 - theta;
    if (!supporting) ++not_supporting;
  }
  const bool flip =
      static_cast<double>(not_supporting) > static_cast<double>(masked_probs.size()) / 2.0;
  return BruteVote{flip, flip ? 1 - original_label : original_label};
}

}  // namespace camcls::oracle
