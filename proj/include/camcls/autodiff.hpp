#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "camcls/ops.hpp"
#include "camcls/tensor.hpp"

namespace camcls {

// Reverse-mode tape over a fixed op vocabulary. Nodes are appended in
// forward (topological) order; backward() walks them once in reverse.
// One training step owns one tape.
template <typename T>
class Tape {
 public:
  using NodeId = int;

  NodeId leaf(Tensor<T> value) { return push(std::move(value), {}); }

  const Tensor<T>& value(NodeId id) const { return nodes_[check(id)].value; }
  const Tensor<T>& grad(NodeId id) const { return nodes_[check(id)].grad; }
  size_t size() const { return nodes_.size(); }

  NodeId conv2d(NodeId x, NodeId k, size_t stride, size_t pad) {
    Tensor<T> y = ops::conv2d(value(x), value(k), stride, pad);
    return push(std::move(y), [x, k, stride, pad](Tape& t, NodeId self) {
      ops::conv2d_backward(t.value(x), t.value(k), stride, pad, t.grad(self), t.grad_mut(x),
                           t.grad_mut(k));
    });
  }

  NodeId add_channel_bias(NodeId x, NodeId b) {
    Tensor<T> y = ops::add_channel_bias(value(x), value(b));
    return push(std::move(y), [x, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gx = t.grad_mut(x);
      Tensor<T>& gb = t.grad_mut(b);
      const size_t n = g.dim(0), c = g.dim(1), hw = g.dim(2) * g.dim(3);
      for (size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
      for (size_t in = 0; in < n; ++in)
        for (size_t ic = 0; ic < c; ++ic) {
          const T* gp = &g.data[(in * c + ic) * hw];
          T s = 0;
          for (size_t i = 0; i < hw; ++i) s += gp[i];
          gb.data[ic] += s;
        }
    });
  }

  NodeId relu(NodeId x) {
    return push(ops::relu(value(x)), [x](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& xv = t.value(x);
      Tensor<T>& gx = t.grad_mut(x);
      for (size_t i = 0; i < g.numel(); ++i)
        if (xv.data[i] > T(0)) gx.data[i] += g.data[i];
    });
  }

  NodeId sigmoid(NodeId x) {
    return push(ops::sigmoid(value(x)), [x](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& y = t.value(self);
      Tensor<T>& gx = t.grad_mut(x);
      for (size_t i = 0; i < g.numel(); ++i)
        gx.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
    });
  }

  NodeId avgpool2(NodeId x) {
    return push(ops::avgpool2(value(x)), [x](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gx = t.grad_mut(x);
      const size_t n = g.dim(0), c = g.dim(1), ho = g.dim(2), wo = g.dim(3);
      for (size_t in = 0; in < n; ++in)
        for (size_t ic = 0; ic < c; ++ic)
          for (size_t oy = 0; oy < ho; ++oy)
            for (size_t ox = 0; ox < wo; ++ox) {
              const T q = g(in, ic, oy, ox) / T(4);
              gx(in, ic, 2 * oy, 2 * ox) += q;
              gx(in, ic, 2 * oy, 2 * ox + 1) += q;
              gx(in, ic, 2 * oy + 1, 2 * ox) += q;
              gx(in, ic, 2 * oy + 1, 2 * ox + 1) += q;
            }
    });
  }

  NodeId add(NodeId a, NodeId b) {
    return push(ops::add(value(a), value(b)), [a, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& ga = t.grad_mut(a);
      Tensor<T>& gb = t.grad_mut(b);
      for (size_t i = 0; i < g.numel(); ++i) {
        ga.data[i] += g.data[i];
        gb.data[i] += g.data[i];
      }
    });
  }

  NodeId sub(NodeId a, NodeId b) {
    return push(ops::sub(value(a), value(b)), [a, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& ga = t.grad_mut(a);
      Tensor<T>& gb = t.grad_mut(b);
      for (size_t i = 0; i < g.numel(); ++i) {
        ga.data[i] += g.data[i];
        gb.data[i] -= g.data[i];
      }
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    return push(ops::mul(value(a), value(b)), [a, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& av = t.value(a);
      const Tensor<T>& bv = t.value(b);
      Tensor<T>& ga = t.grad_mut(a);
      Tensor<T>& gb = t.grad_mut(b);
      for (size_t i = 0; i < g.numel(); ++i) {
        ga.data[i] += g.data[i] * bv.data[i];
        gb.data[i] += g.data[i] * av.data[i];
      }
    });
  }

  NodeId scale(NodeId x, T c) {
    return push(ops::scale(value(x), c), [x, c](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gx = t.grad_mut(x);
      for (size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i] * c;
    });
  }

  NodeId sum(NodeId x) {
    Tensor<T> y({1});
    y.data[0] = ops::sum(value(x));
    return push(std::move(y), [x](Tape& t, NodeId self) {
      const T g = t.grad(self).data[0];
      Tensor<T>& gx = t.grad_mut(x);
      for (T& v : gx.data) v += g;
    });
  }

  NodeId mean(NodeId x) {
    Tensor<T> y({1});
    y.data[0] = ops::mean(value(x));
    const T inv = T(1) / static_cast<T>(value(x).numel());
    return push(std::move(y), [x, inv](Tape& t, NodeId self) {
      const T g = t.grad(self).data[0] * inv;
      Tensor<T>& gx = t.grad_mut(x);
      for (T& v : gx.data) v += g;
    });
  }

  NodeId gap(NodeId x) {
    return push(ops::gap(value(x)), [x](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gx = t.grad_mut(x);
      const size_t n = gx.dim(0), c = gx.dim(1), hw = gx.dim(2) * gx.dim(3);
      const T inv = T(1) / static_cast<T>(hw);
      for (size_t in = 0; in < n; ++in)
        for (size_t ic = 0; ic < c; ++ic) {
          const T q = g(in, ic) * inv;
          T* gp = &gx.data[(in * c + ic) * hw];
          for (size_t i = 0; i < hw; ++i) gp[i] += q;
        }
    });
  }

  NodeId linear(NodeId x, NodeId w, NodeId b) {
    return push(ops::linear(value(x), value(w), value(b)), [x, w, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& xv = t.value(x);
      const Tensor<T>& wv = t.value(w);
      Tensor<T>& gx = t.grad_mut(x);
      Tensor<T>& gw = t.grad_mut(w);
      Tensor<T>& gb = t.grad_mut(b);
      const size_t n = xv.dim(0), i = xv.dim(1), o = wv.dim(0);
      for (size_t in = 0; in < n; ++in)
        for (size_t io = 0; io < o; ++io) {
          const T go = g(in, io);
          gb.data[io] += go;
          for (size_t ii = 0; ii < i; ++ii) {
            gx(in, ii) += go * wv(io, ii);
            gw(io, ii) += go * xv(in, ii);
          }
        }
    });
  }

  NodeId dot(NodeId u, NodeId v) {
    Tensor<T> y({1});
    y.data[0] = ops::dot(value(u), value(v));
    return push(std::move(y), [u, v](Tape& t, NodeId self) {
      const T g = t.grad(self).data[0];
      const Tensor<T>& uv = t.value(u);
      const Tensor<T>& vv = t.value(v);
      Tensor<T>& gu = t.grad_mut(u);
      Tensor<T>& gv = t.grad_mut(v);
      for (size_t i = 0; i < uv.numel(); ++i) {
        gu.data[i] += g * vv.data[i];
        gv.data[i] += g * uv.data[i];
      }
    });
  }

  // Extracts the C-vector at grid cell (i, j) of a 1xCxGxG feature map.
  NodeId cell_vector(NodeId feature, size_t i, size_t j) {
    const Tensor<T>& f = value(feature);
    if (f.rank() != 4 || f.dim(0) != 1) throw DimensionError("cell_vector: expected 1xCxGxG");
    if (i >= f.dim(2) || j >= f.dim(3)) throw ContractError("cell_vector: cell out of range");
    const size_t c = f.dim(1);
    Tensor<T> y({c});
    for (size_t ic = 0; ic < c; ++ic) y.data[ic] = f(0, ic, i, j);
    return push(std::move(y), [feature, i, j, c](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gf = t.grad_mut(feature);
      for (size_t ic = 0; ic < c; ++ic) gf(0, ic, i, j) += g.data[ic];
    });
  }

  // Binary cross entropy against a constant target; parent must be scalar.
  NodeId bce_with_logit(NodeId z, double target) {
    if (value(z).numel() != 1) throw ContractError("bce: logit node must be scalar");
    if (target < 0.0 || target > 1.0) throw ContractError("bce: target outside [0,1]");
    Tensor<T> y({1});
    y.data[0] = static_cast<T>(ops::bce_with_logit(static_cast<double>(value(z).data[0]), target));
    return push(std::move(y), [z, target](Tape& t, NodeId self) {
      const double g = static_cast<double>(t.grad(self).data[0]);
      const double zv = static_cast<double>(t.value(z).data[0]);
      t.grad_mut(z).data[0] += static_cast<T>(g * ops::bce_with_logit_grad(zv, target));
    });
  }

  // -ln softmax(anchor | {anchor} ∪ negatives) over scalar nodes,
  // computed with max-shifted log-sum-exp.
  NodeId neg_log_softmax(NodeId anchor, std::vector<NodeId> negatives) {
    if (value(anchor).numel() != 1) throw ContractError("neg_log_softmax: anchor must be scalar");
    double m = static_cast<double>(value(anchor).data[0]);
    for (NodeId n : negatives) {
      if (value(n).numel() != 1) throw ContractError("neg_log_softmax: negatives must be scalar");
      m = std::max(m, static_cast<double>(value(n).data[0]));
    }
    const double a = static_cast<double>(value(anchor).data[0]);
    double acc = std::exp(a - m);
    for (NodeId n : negatives) acc += std::exp(static_cast<double>(value(n).data[0]) - m);
    const double lse = m + std::log(acc);
    Tensor<T> y({1});
    y.data[0] = static_cast<T>(lse - a);
    return push(std::move(y), [anchor, negatives = std::move(negatives), lse](Tape& t, NodeId self) {
      const double g = static_cast<double>(t.grad(self).data[0]);
      const double pa = std::exp(static_cast<double>(t.value(anchor).data[0]) - lse);
      t.grad_mut(anchor).data[0] += static_cast<T>(g * (pa - 1.0));
      for (NodeId n : negatives) {
        const double pn = std::exp(static_cast<double>(t.value(n).data[0]) - lse);
        t.grad_mut(n).data[0] += static_cast<T>(g * pn);
      }
    });
  }

  // sum_i coeff_i * scalar_i
  NodeId combine(std::vector<NodeId> terms, std::vector<T> coeffs) {
    if (terms.size() != coeffs.size() || terms.empty())
      throw ContractError("combine: need matching, nonempty term/coeff lists");
    Tensor<T> y({1});
    T acc = 0;
    for (size_t i = 0; i < terms.size(); ++i) {
      if (value(terms[i]).numel() != 1) throw ContractError("combine: terms must be scalar");
      acc += coeffs[i] * value(terms[i]).data[0];
    }
    y.data[0] = acc;
    return push(std::move(y),
                [terms = std::move(terms), coeffs = std::move(coeffs)](Tape& t, NodeId self) {
                  const T g = t.grad(self).data[0];
                  for (size_t i = 0; i < terms.size(); ++i)
                    t.grad_mut(terms[i]).data[0] += g * coeffs[i];
                });
  }

  // Seeds d(loss)/d(loss) = 1 and visits every node at most once, in
  // reverse insertion order (reverse topological order by construction).
  void backward(NodeId loss) {
    if (value(loss).numel() != 1) throw ContractError("backward: loss node must be scalar");
    grad_mut(loss).data[0] = T(1);
    for (int i = loss; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this, i);
  }

  Tensor<T>& grad_mut(NodeId id) { return nodes_[check(id)].grad; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&, NodeId)> back;
  };

  NodeId push(Tensor<T> value, std::function<void(Tape&, NodeId)> back) {
    Node n;
    n.grad = Tensor<T>::zeros(value.shape);
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  NodeId check(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
      throw ContractError("tape: bad node id");
    return id;
  }

  std::vector<Node> nodes_;
};

}  // namespace camcls
