#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bas {

// Dense row-major tensor. Shapes use the [C,H,W] convention for spatial data;
// scalars are shape {1}. Values are float in the product path, double in the
// gradient-check path.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), T(0));
  }

  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape product " +
                                  std::to_string(numel_of(shape)));
  }

  static Tensor full(std::vector<int> s, T v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int e : s) {
      if (e <= 0) throw std::invalid_argument("tensor: non-positive extent " + std::to_string(e));
      n *= size_t(e);
    }
    return n;
  }

  size_t numel() const { return data.size(); }
  int rank() const { return int(shape.size()); }
  int extent(int i) const { return shape[size_t(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // Element access for rank-3 [C,H,W] tensors.
  T& at(int c, int y, int x) {
    return data[(size_t(c) * shape[1] + y) * shape[2] + x];
  }
  T at(int c, int y, int x) const {
    return data[(size_t(c) * shape[1] + y) * shape[2] + x];
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
Tensor<double> widen(const Tensor<T>& t) {
  Tensor<double> out(t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = double(t.data[i]);
  return out;
}

inline TensorF narrow(const TensorD& t) {
  TensorF out(t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = float(t.data[i]);
  return out;
}

}  // namespace bas
