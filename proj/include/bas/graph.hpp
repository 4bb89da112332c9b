#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bas/kernels.hpp"
#include "bas/tensor.hpp"

namespace bas {

// Reverse-mode autodiff over an append-only op record. Nodes are appended
// strictly after their inputs, so insertion order is a topological order and
// backward() is a single reverse sweep. A graph is confined to one thread;
// parallelism happens across independent graphs (one per sample) and inside
// the conv kernels.
//
// Gradients accumulate in the value precision with a fixed left-to-right
// order; backward() re-zeroes every buffer first, so repeated sweeps over the
// same graph are bit-identical. Edges wrapped in stop_gradient() contribute
// exactly zero, which is how the frozen branch of the background pass is
// realized.
template <typename T>
class Graph {
 public:
  enum class Op {
    kInput,
    kStopGrad,
    kConv2d,
    kRelu,
    kSigmoid,
    kGap,
    kMaskMul,
    kSliceChannel,
    kComplement,
    kAdd,
    kScale,
    kSelect,
    kSum,
    kMeanAll,
    kSoftmaxCe,
    kMultiLabelCe,
    kBasRatio,
  };

  struct Node {
    Op op;
    int in0 = -1, in1 = -1, in2 = -1;
    Tensor<T> value;
    Tensor<T> grad;  // sized lazily by backward()
    bool requires_grad = false;
    int stride = 1, pad = 0;
    int index = -1;  // channel / class / vector index ops
    T scalar = T(0);
    std::vector<int> class_set;  // positives of the multi-label loss
  };

  int input(Tensor<T> v, bool requires_grad = false) {
    Node n;
    n.op = Op::kInput;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  // Value pass-through whose backward contributes exactly zero upstream.
  int stop_gradient(int x) {
    const Node& xn = node(x);
    Node n;
    n.op = Op::kStopGrad;
    n.in0 = x;
    n.value = xn.value;
    n.requires_grad = false;
    return push(std::move(n));
  }

  int conv2d(int x, int w, int bias /* -1 for none */, int stride, int pad) {
    const Node& xn = node(x);
    const Node& wn = node(w);
    auto d = kernels::conv2d_dims(xn.value.shape, wn.value.shape, stride, pad);
    const Tensor<T>* bp = nullptr;
    if (bias >= 0) {
      const Node& bn = node(bias);
      if (bn.value.shape != std::vector<int>{d.c_out})
        throw std::invalid_argument("conv2d: bias extent " + bn.value.shape_str() +
                                    " does not match output channel extent " +
                                    std::to_string(d.c_out));
      bp = &bn.value;
    }
    Node n;
    n.op = Op::kConv2d;
    n.in0 = x;
    n.in1 = w;
    n.in2 = bias;
    n.stride = stride;
    n.pad = pad;
    n.value = Tensor<T>({d.c_out, d.h_out, d.w_out});
    kernels::conv2d_forward(xn.value, wn.value, bp, d, n.value);
    n.requires_grad = xn.requires_grad || wn.requires_grad || (bias >= 0 && node(bias).requires_grad);
    return push(std::move(n));
  }

  int relu(int x) {
    const Node& xn = node(x);
    Node n;
    n.op = Op::kRelu;
    n.in0 = x;
    n.value = Tensor<T>(xn.value.shape);
    for (size_t i = 0; i < xn.value.numel(); ++i)
      n.value.data[i] = xn.value.data[i] > T(0) ? xn.value.data[i] : T(0);
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  // Numerically stable logistic, clamped into the open interval (0,1) so the
  // map-valued outputs keep their strict bounds even where the exact value
  // would round to 0 or 1.
  int sigmoid(int x) {
    const Node& xn = node(x);
    Node n;
    n.op = Op::kSigmoid;
    n.in0 = x;
    n.value = Tensor<T>(xn.value.shape);
    const T lo = std::numeric_limits<T>::min();
    const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
    for (size_t i = 0; i < xn.value.numel(); ++i) {
      T v = xn.value.data[i];
      T s;
      if (v >= T(0)) {
        s = T(1) / (T(1) + std::exp(-v));
      } else {
        T e = std::exp(v);
        s = e / (T(1) + e);
      }
      n.value.data[i] = std::min(hi, std::max(lo, s));
    }
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  // Per-channel mean of a [C,H,W] tensor. The sum runs in a wider accumulator
  // so a constant channel pools to that constant exactly.
  int gap(int x) {
    const Node& xn = node(x);
    require_rank(xn, 3, "global_avg_pool");
    Node n;
    n.op = Op::kGap;
    n.in0 = x;
    const int c = xn.value.shape[0], h = xn.value.shape[1], w = xn.value.shape[2];
    n.value = Tensor<T>({c});
    const size_t hw = size_t(h) * w;
    for (int ch = 0; ch < c; ++ch) {
      long double acc = 0;
      const T* p = xn.value.data.data() + size_t(ch) * hw;
      for (size_t i = 0; i < hw; ++i) acc += (long double)p[i];
      n.value.data[size_t(ch)] = T(acc / (long double)hw);
    }
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  // Broadcast product of [C,H,W] features with a [1,H,W] mask.
  int mask_mul(int x, int m) {
    const Node& xn = node(x);
    const Node& mn = node(m);
    require_rank(xn, 3, "mask_mul");
    require_rank(mn, 3, "mask_mul");
    if (mn.value.shape[0] != 1)
      throw std::invalid_argument("mask_mul: mask channel extent must be 1, got " +
                                  std::to_string(mn.value.shape[0]));
    if (mn.value.shape[1] != xn.value.shape[1] || mn.value.shape[2] != xn.value.shape[2])
      throw std::invalid_argument("mask_mul: mask spatial extents " + mn.value.shape_str() +
                                  " do not match feature spatial extents " + xn.value.shape_str());
    Node n;
    n.op = Op::kMaskMul;
    n.in0 = x;
    n.in1 = m;
    n.value = Tensor<T>(xn.value.shape);
    const int c = xn.value.shape[0];
    const size_t hw = size_t(xn.value.shape[1]) * xn.value.shape[2];
    for (int ch = 0; ch < c; ++ch)
      for (size_t i = 0; i < hw; ++i)
        n.value.data[size_t(ch) * hw + i] = xn.value.data[size_t(ch) * hw + i] * mn.value.data[i];
    n.requires_grad = xn.requires_grad || mn.requires_grad;
    return push(std::move(n));
  }

  int slice_channel(int x, int channel) {
    const Node& xn = node(x);
    require_rank(xn, 3, "slice_channel");
    if (channel < 0 || channel >= xn.value.shape[0])
      throw std::invalid_argument("slice_channel: channel " + std::to_string(channel) +
                                  " out of range for extent " + std::to_string(xn.value.shape[0]));
    Node n;
    n.op = Op::kSliceChannel;
    n.in0 = x;
    n.index = channel;
    const size_t hw = size_t(xn.value.shape[1]) * xn.value.shape[2];
    n.value = Tensor<T>({1, xn.value.shape[1], xn.value.shape[2]});
    std::copy_n(xn.value.data.data() + size_t(channel) * hw, hw, n.value.data.data());
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  // Elementwise 1 - x; this is how the background map is coupled to the
  // foreground map.
  int complement(int x) {
    const Node& xn = node(x);
    Node n;
    n.op = Op::kComplement;
    n.in0 = x;
    n.value = Tensor<T>(xn.value.shape);
    for (size_t i = 0; i < xn.value.numel(); ++i) n.value.data[i] = T(1) - xn.value.data[i];
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  int add(int a, int b) {
    const Node& an = node(a);
    const Node& bn = node(b);
    if (!an.value.same_shape(bn.value))
      throw std::invalid_argument("add: shapes " + an.value.shape_str() + " and " +
                                  bn.value.shape_str() + " differ");
    Node n;
    n.op = Op::kAdd;
    n.in0 = a;
    n.in1 = b;
    n.value = Tensor<T>(an.value.shape);
    for (size_t i = 0; i < an.value.numel(); ++i)
      n.value.data[i] = an.value.data[i] + bn.value.data[i];
    n.requires_grad = an.requires_grad || bn.requires_grad;
    return push(std::move(n));
  }

  int scale(int x, T s) {
    const Node& xn = node(x);
    Node n;
    n.op = Op::kScale;
    n.in0 = x;
    n.scalar = s;
    n.value = Tensor<T>(xn.value.shape);
    for (size_t i = 0; i < xn.value.numel(); ++i) n.value.data[i] = s * xn.value.data[i];
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  int select(int x, int index) {
    const Node& xn = node(x);
    require_rank(xn, 1, "select");
    if (index < 0 || index >= xn.value.shape[0])
      throw std::invalid_argument("select: index " + std::to_string(index) +
                                  " out of range for extent " + std::to_string(xn.value.shape[0]));
    Node n;
    n.op = Op::kSelect;
    n.in0 = x;
    n.index = index;
    n.value = Tensor<T>({1});
    n.value.data[0] = xn.value.data[size_t(index)];
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  int sum(int x) {
    const Node& xn = node(x);
    Node n;
    n.op = Op::kSum;
    n.in0 = x;
    n.value = Tensor<T>({1});
    T acc = 0;
    for (size_t i = 0; i < xn.value.numel(); ++i) acc += xn.value.data[i];
    n.value.data[0] = acc;
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  // Mean over all elements (the area constraint). Wider accumulator for the
  // same exactness reason as gap().
  int mean_all(int x) {
    const Node& xn = node(x);
    Node n;
    n.op = Op::kMeanAll;
    n.in0 = x;
    n.value = Tensor<T>({1});
    long double acc = 0;
    for (size_t i = 0; i < xn.value.numel(); ++i) acc += (long double)xn.value.data[i];
    n.value.data[0] = T(acc / (long double)xn.value.numel());
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  // Max-shifted softmax + negative log-likelihood of the target class.
  int softmax_cross_entropy(int logits, int target) {
    const Node& xn = node(logits);
    require_rank(xn, 1, "softmax_cross_entropy");
    const int c = xn.value.shape[0];
    if (c < 2)
      throw std::invalid_argument("softmax_cross_entropy: need at least 2 classes, got " +
                                  std::to_string(c));
    if (target < 0 || target >= c)
      throw std::invalid_argument("softmax_cross_entropy: target " + std::to_string(target) +
                                  " out of range for " + std::to_string(c) + " classes");
    Node n;
    n.op = Op::kSoftmaxCe;
    n.in0 = logits;
    n.index = target;
    n.value = Tensor<T>({1});
    n.value.data[0] = log_sum_exp(xn.value.data, [](int) { return true; }, c) -
                      xn.value.data[size_t(target)];
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  // Multi-label classification loss: each positive class competes only
  // against the negative classes and itself.
  int multilabel_cross_entropy(int logits, std::vector<int> positives) {
    const Node& xn = node(logits);
    require_rank(xn, 1, "multilabel_cross_entropy");
    const int c = xn.value.shape[0];
    if (positives.empty())
      throw std::invalid_argument("multilabel_cross_entropy: positive class set is empty");
    std::vector<char> is_pos(size_t(c), 0);
    for (int p : positives) {
      if (p < 0 || p >= c)
        throw std::invalid_argument("multilabel_cross_entropy: class " + std::to_string(p) +
                                    " out of range for " + std::to_string(c) + " classes");
      is_pos[size_t(p)] = 1;
    }
    Node n;
    n.op = Op::kMultiLabelCe;
    n.in0 = logits;
    n.class_set = std::move(positives);
    n.value = Tensor<T>({1});
    T total = 0;
    for (int p : n.class_set) {
      auto in_denom = [&](int j) { return !is_pos[size_t(j)] || j == p; };
      total += log_sum_exp(xn.value.data, in_denom, c) - xn.value.data[size_t(p)];
    }
    n.value.data[0] = total;
    n.requires_grad = xn.requires_grad;
    return push(std::move(n));
  }

  // min(1, s_bkg / (s + eps)). Inputs must be non-negative post-ReLU scalars;
  // the clamped region passes zero gradient.
  int bas_ratio(int s, int s_bkg, T eps) {
    const Node& sn = node(s);
    const Node& bn = node(s_bkg);
    require_scalar(sn, "bas_ratio");
    require_scalar(bn, "bas_ratio");
    if (sn.value.data[0] < T(0) || bn.value.data[0] < T(0))
      throw std::invalid_argument("bas_ratio: activation values must be non-negative, got s=" +
                                  std::to_string(double(sn.value.data[0])) + " s_bkg=" +
                                  std::to_string(double(bn.value.data[0])));
    Node n;
    n.op = Op::kBasRatio;
    n.in0 = s;
    n.in1 = s_bkg;
    n.scalar = eps;
    n.value = Tensor<T>({1});
    const T raw = bn.value.data[0] / (sn.value.data[0] + eps);
    n.value.data[0] = std::min(T(1), raw);
    n.requires_grad = sn.requires_grad || bn.requires_grad;
    return push(std::move(n));
  }

  void backward(int loss) {
    if (loss < 0 || loss >= int(nodes_.size()))
      throw std::invalid_argument("backward: node " + std::to_string(loss) + " is not in this graph");
    if (nodes_[size_t(loss)].value.numel() != 1)
      throw std::invalid_argument("backward: loss node must be scalar, has shape " +
                                  nodes_[size_t(loss)].value.shape_str());
    // Fresh zero buffers each sweep make repeated backward() calls
    // bit-identical.
    for (auto& n : nodes_) n.grad = Tensor<T>(n.value.shape);
    nodes_[size_t(loss)].grad.data[0] = T(1);
    for (int id = loss; id >= 0; --id) backstep(id);
  }

  const Tensor<T>& value(int id) const { return node(id).value; }
  const Tensor<T>& grad(int id) const { return node(id).grad; }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;

  Node& node(int id) {
    if (id < 0 || id >= int(nodes_.size()))
      throw std::out_of_range("graph: node id " + std::to_string(id) + " out of range");
    return nodes_[size_t(id)];
  }
  const Node& node(int id) const {
    if (id < 0 || id >= int(nodes_.size()))
      throw std::out_of_range("graph: node id " + std::to_string(id) + " out of range");
    return nodes_[size_t(id)];
  }

  int push(Node n) {
#ifndef NDEBUG
    // Forward ops on finite inputs must stay finite.
    if (!n.value.all_finite())
      throw std::runtime_error("graph: non-finite value produced by forward op");
#endif
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  static void require_rank(const Node& n, int rank, const char* what) {
    if (n.value.rank() != rank)
      throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) +
                                  ", got shape " + n.value.shape_str());
  }

  static void require_scalar(const Node& n, const char* what) {
    if (n.value.numel() != 1)
      throw std::invalid_argument(std::string(what) + ": expected scalar, got shape " +
                                  n.value.shape_str());
  }

  template <typename Pred>
  static T log_sum_exp(const std::vector<T>& v, Pred in_set, int c) {
    T m = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < c; ++j)
      if (in_set(j)) m = std::max(m, v[size_t(j)]);
    T acc = 0;
    for (int j = 0; j < c; ++j)
      if (in_set(j)) acc += std::exp(v[size_t(j)] - m);
    return m + std::log(acc);
  }

  void backstep(int id) {
    Node& n = nodes_[size_t(id)];
    if (!n.requires_grad) return;
    const Tensor<T>& go = n.grad;
    switch (n.op) {
      case Op::kInput:
      case Op::kStopGrad:
        break;
      case Op::kConv2d: {
        Node& xn = nodes_[size_t(n.in0)];
        Node& wn = nodes_[size_t(n.in1)];
        auto d = kernels::conv2d_dims(xn.value.shape, wn.value.shape, n.stride, n.pad);
        if (xn.requires_grad) kernels::conv2d_backward_input(go, wn.value, d, xn.grad);
        if (wn.requires_grad || (n.in2 >= 0 && nodes_[size_t(n.in2)].requires_grad)) {
          Tensor<T>* gb = nullptr;
          Tensor<T> scratch;
          if (n.in2 >= 0 && nodes_[size_t(n.in2)].requires_grad) gb = &nodes_[size_t(n.in2)].grad;
          if (wn.requires_grad) {
            kernels::conv2d_backward_weights(go, xn.value, d, wn.grad, gb);
          } else if (gb) {
            scratch = Tensor<T>(wn.value.shape);
            kernels::conv2d_backward_weights(go, xn.value, d, scratch, gb);
          }
        }
        break;
      }
      case Op::kRelu: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        for (size_t i = 0; i < go.numel(); ++i)
          if (xn.value.data[i] > T(0)) xn.grad.data[i] += go.data[i];
        break;
      }
      case Op::kSigmoid: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        for (size_t i = 0; i < go.numel(); ++i) {
          const T s = n.value.data[i];
          xn.grad.data[i] += go.data[i] * s * (T(1) - s);
        }
        break;
      }
      case Op::kGap: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        const int c = xn.value.shape[0];
        const size_t hw = size_t(xn.value.shape[1]) * xn.value.shape[2];
        const T inv = T(1) / T(hw);
        for (int ch = 0; ch < c; ++ch) {
          const T g = go.data[size_t(ch)] * inv;
          T* p = xn.grad.data.data() + size_t(ch) * hw;
          for (size_t i = 0; i < hw; ++i) p[i] += g;
        }
        break;
      }
      case Op::kMaskMul: {
        Node& xn = nodes_[size_t(n.in0)];
        Node& mn = nodes_[size_t(n.in1)];
        const int c = xn.value.shape[0];
        const size_t hw = size_t(xn.value.shape[1]) * xn.value.shape[2];
        if (xn.requires_grad)
          for (int ch = 0; ch < c; ++ch)
            for (size_t i = 0; i < hw; ++i)
              xn.grad.data[size_t(ch) * hw + i] += go.data[size_t(ch) * hw + i] * mn.value.data[i];
        if (mn.requires_grad)
          for (int ch = 0; ch < c; ++ch)
            for (size_t i = 0; i < hw; ++i)
              mn.grad.data[i] += go.data[size_t(ch) * hw + i] * xn.value.data[size_t(ch) * hw + i];
        break;
      }
      case Op::kSliceChannel: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        const size_t hw = go.numel();
        T* p = xn.grad.data.data() + size_t(n.index) * hw;
        for (size_t i = 0; i < hw; ++i) p[i] += go.data[i];
        break;
      }
      case Op::kComplement: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        for (size_t i = 0; i < go.numel(); ++i) xn.grad.data[i] -= go.data[i];
        break;
      }
      case Op::kAdd: {
        Node& an = nodes_[size_t(n.in0)];
        Node& bn = nodes_[size_t(n.in1)];
        if (an.requires_grad)
          for (size_t i = 0; i < go.numel(); ++i) an.grad.data[i] += go.data[i];
        if (bn.requires_grad)
          for (size_t i = 0; i < go.numel(); ++i) bn.grad.data[i] += go.data[i];
        break;
      }
      case Op::kScale: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        for (size_t i = 0; i < go.numel(); ++i) xn.grad.data[i] += n.scalar * go.data[i];
        break;
      }
      case Op::kSelect: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        xn.grad.data[size_t(n.index)] += go.data[0];
        break;
      }
      case Op::kSum: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        for (size_t i = 0; i < xn.grad.numel(); ++i) xn.grad.data[i] += go.data[0];
        break;
      }
      case Op::kMeanAll: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        const T g = go.data[0] / T(xn.grad.numel());
        for (size_t i = 0; i < xn.grad.numel(); ++i) xn.grad.data[i] += g;
        break;
      }
      case Op::kSoftmaxCe: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        const int c = xn.value.shape[0];
        std::vector<T> p = softmax(xn.value.data, [](int) { return true; }, c);
        for (int j = 0; j < c; ++j) {
          T g = p[size_t(j)] - (j == n.index ? T(1) : T(0));
          xn.grad.data[size_t(j)] += go.data[0] * g;
        }
        break;
      }
      case Op::kMultiLabelCe: {
        Node& xn = nodes_[size_t(n.in0)];
        if (!xn.requires_grad) break;
        const int c = xn.value.shape[0];
        std::vector<char> is_pos(size_t(c), 0);
        for (int q : n.class_set) is_pos[size_t(q)] = 1;
        for (int pcls : n.class_set) {
          auto in_denom = [&](int j) { return !is_pos[size_t(j)] || j == pcls; };
          std::vector<T> p = softmax(xn.value.data, in_denom, c);
          for (int j = 0; j < c; ++j)
            if (in_denom(j)) xn.grad.data[size_t(j)] += go.data[0] * p[size_t(j)];
          xn.grad.data[size_t(pcls)] -= go.data[0];
        }
        break;
      }
      case Op::kBasRatio: {
        Node& sn = nodes_[size_t(n.in0)];
        Node& bn = nodes_[size_t(n.in1)];
        const T denom = sn.value.data[0] + n.scalar;
        const T raw = bn.value.data[0] / denom;
        if (raw < T(1)) {
          if (sn.requires_grad) sn.grad.data[0] += go.data[0] * (-bn.value.data[0] / (denom * denom));
          if (bn.requires_grad) bn.grad.data[0] += go.data[0] / denom;
        }
        break;
      }
    }
  }

  template <typename Pred>
  static std::vector<T> softmax(const std::vector<T>& v, Pred in_set, int c) {
    T m = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < c; ++j)
      if (in_set(j)) m = std::max(m, v[size_t(j)]);
    std::vector<T> p(size_t(c), T(0));
    T z = 0;
    for (int j = 0; j < c; ++j)
      if (in_set(j)) {
        p[size_t(j)] = std::exp(v[size_t(j)] - m);
        z += p[size_t(j)];
      }
    for (int j = 0; j < c; ++j) p[size_t(j)] /= z;
    return p;
  }
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace bas
