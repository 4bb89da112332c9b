#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>

#include "bas/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bas::kernels {

// Runtime switch between the OpenMP kernels and the serial reference ones.
// Both produce bit-identical results: every output element is accumulated by
// exactly one thread in the same fixed order as the serial loop, so the switch
// only affects throughput. The serial versions stay as the reference the tests
// and the kernel benchmark compare against.
bool parallel_enabled();
void set_parallel(bool on);

struct Conv2dDims {
  int c_in, h, w;
  int c_out, k;
  int stride, pad;
  int h_out, w_out;
};

inline Conv2dDims conv2d_dims(const std::vector<int>& in_shape, const std::vector<int>& w_shape,
                              int stride, int pad) {
  if (in_shape.size() != 3)
    throw std::invalid_argument("conv2d: input must be rank 3 [C,H,W], got rank " +
                                std::to_string(in_shape.size()));
  if (w_shape.size() != 4)
    throw std::invalid_argument("conv2d: weights must be rank 4 [Cout,Cin,k,k], got rank " +
                                std::to_string(w_shape.size()));
  Conv2dDims d;
  d.c_in = in_shape[0];
  d.h = in_shape[1];
  d.w = in_shape[2];
  d.c_out = w_shape[0];
  d.k = w_shape[2];
  d.stride = stride;
  d.pad = pad;
  if (w_shape[1] != d.c_in)
    throw std::invalid_argument("conv2d: weight input-channel extent " + std::to_string(w_shape[1]) +
                                " does not match input channel extent " + std::to_string(d.c_in));
  if (w_shape[2] != w_shape[3])
    throw std::invalid_argument("conv2d: kernel must be square, got " + std::to_string(w_shape[2]) +
                                "x" + std::to_string(w_shape[3]));
  if (d.k % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd, got " + std::to_string(d.k));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive, got " + std::to_string(stride));
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be non-negative, got " + std::to_string(pad));
  d.h_out = (d.h + 2 * pad - d.k) / stride + 1;
  d.w_out = (d.w + 2 * pad - d.k) / stride + 1;
  if (d.h + 2 * pad < d.k || d.w + 2 * pad < d.k || d.h_out < 1 || d.w_out < 1)
    throw std::invalid_argument("conv2d: output spatial extent would be empty for input " +
                                std::to_string(d.h) + "x" + std::to_string(d.w) + ", kernel " +
                                std::to_string(d.k) + ", pad " + std::to_string(pad));
  return d;
}

namespace detail {

// Output-column range [lo, hi) whose sampled input column stays in frame for
// a given kernel column; hoisting this keeps the hot loops branch-free.
struct XRange {
  int lo, hi;
};

inline XRange ox_range(int kx, int pad, int stride, int w, int w_out) {
  int lo = kx >= pad ? 0 : (pad - kx + stride - 1) / stride;
  int top = w - 1 - kx + pad;
  int hi = top < 0 ? 0 : std::min(w_out, top / stride + 1);
  return {lo, hi};
}

// One output row: out[ox] (+)= sum over taps. The (ci,ky,kx) accumulation
// order is the contract every variant of these kernels shares.
template <typename T>
inline void conv_row_accumulate(T* __restrict__ orow, const T* __restrict__ ip,
                                const T* __restrict__ wbase, const Conv2dDims& d, int oy) {
  for (int ci = 0; ci < d.c_in; ++ci) {
    for (int ky = 0; ky < d.k; ++ky) {
      const int iy = oy * d.stride + ky - d.pad;
      if (iy < 0 || iy >= d.h) continue;
      const T* irow = ip + (size_t(ci) * d.h + iy) * d.w;
      const T* wrow = wbase + (size_t(ci) * d.k + ky) * d.k;
      for (int kx = 0; kx < d.k; ++kx) {
        const T wv = wrow[kx];
        const XRange r = ox_range(kx, d.pad, d.stride, d.w, d.w_out);
        const int x0 = kx - d.pad;
        if (d.stride == 1) {
          const T* __restrict__ src = irow + x0;
          for (int ox = r.lo; ox < r.hi; ++ox) orow[ox] += wv * src[ox];
        } else {
          for (int ox = r.lo; ox < r.hi; ++ox) orow[ox] += wv * irow[ox * d.stride + x0];
        }
      }
    }
  }
}

template <typename T>
inline void conv_forward_channel(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias,
                                 const Conv2dDims& d, Tensor<T>& out, int co) {
  const T b = bias ? bias->data[size_t(co)] : T(0);
  const T* wbase = w.data.data() + size_t(co) * d.c_in * d.k * d.k;
  for (int oy = 0; oy < d.h_out; ++oy) {
    T* orow = out.data.data() + (size_t(co) * d.h_out + oy) * d.w_out;
    for (int ox = 0; ox < d.w_out; ++ox) orow[ox] = b;
    conv_row_accumulate(orow, in.data.data(), wbase, d, oy);
  }
}

// Gradient w.r.t. one input channel; accumulation order over (co,ky,kx,oy,ox)
// is fixed.
template <typename T>
inline void conv_backward_input_channel(const Tensor<T>& go, const Tensor<T>& w,
                                        const Conv2dDims& d, Tensor<T>& gin, int ci) {
  T* __restrict__ xbase = gin.data.data() + size_t(ci) * d.h * d.w;
  for (int co = 0; co < d.c_out; ++co) {
    const T* gbase = go.data.data() + size_t(co) * d.h_out * d.w_out;
    const T* wchan = w.data.data() + (size_t(co) * d.c_in + ci) * d.k * d.k;
    for (int ky = 0; ky < d.k; ++ky) {
      for (int kx = 0; kx < d.k; ++kx) {
        const T wv = wchan[size_t(ky) * d.k + kx];
        const XRange r = ox_range(kx, d.pad, d.stride, d.w, d.w_out);
        const int x0 = kx - d.pad;
        for (int oy = 0; oy < d.h_out; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          const T* __restrict__ grow = gbase + size_t(oy) * d.w_out;
          T* __restrict__ xrow = xbase + size_t(iy) * d.w;
          if (d.stride == 1) {
            T* __restrict__ dst = xrow + x0;
            for (int ox = r.lo; ox < r.hi; ++ox) dst[ox] += wv * grow[ox];
          } else {
            for (int ox = r.lo; ox < r.hi; ++ox) xrow[ox * d.stride + x0] += wv * grow[ox];
          }
        }
      }
    }
  }
}

// Gradient w.r.t. the weights (and bias) of one output channel. The per-tap
// sum runs left to right over (oy,ox); it is a strict-order reduction, so it
// stays scalar.
template <typename T>
inline void conv_backward_weights_channel(const Tensor<T>& go, const Tensor<T>& in,
                                          const Conv2dDims& d, Tensor<T>& gw, Tensor<T>* gb,
                                          int co) {
  const T* gbase = go.data.data() + size_t(co) * d.h_out * d.w_out;
  for (int ci = 0; ci < d.c_in; ++ci) {
    const T* ibase = in.data.data() + size_t(ci) * d.h * d.w;
    for (int ky = 0; ky < d.k; ++ky) {
      T* wrow = gw.data.data() + ((size_t(co) * d.c_in + ci) * d.k + ky) * d.k;
      for (int kx = 0; kx < d.k; ++kx) {
        const XRange r = ox_range(kx, d.pad, d.stride, d.w, d.w_out);
        const int x0 = kx - d.pad;
        T acc = 0;
        for (int oy = 0; oy < d.h_out; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          const T* grow = gbase + size_t(oy) * d.w_out;
          const T* irow = ibase + size_t(iy) * d.w;
          if (d.stride == 1) {
            const T* src = irow + x0;
            for (int ox = r.lo; ox < r.hi; ++ox) acc += grow[ox] * src[ox];
          } else {
            for (int ox = r.lo; ox < r.hi; ++ox) acc += grow[ox] * irow[ox * d.stride + x0];
          }
        }
        wrow[kx] += acc;
      }
    }
  }
  if (gb) {
    T acc = 0;
    for (int i = 0; i < d.h_out * d.w_out; ++i) acc += gbase[i];
    gb->data[size_t(co)] += acc;
  }
}

}  // namespace detail

// Cross-correlation.
template <typename T>
void conv2d_forward_serial(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias,
                           const Conv2dDims& d, Tensor<T>& out) {
  for (int co = 0; co < d.c_out; ++co) detail::conv_forward_channel(in, w, bias, d, out, co);
}

template <typename T>
void conv2d_forward_parallel(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias,
                             const Conv2dDims& d, Tensor<T>& out) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < d.c_out; ++co) detail::conv_forward_channel(in, w, bias, d, out, co);
}

template <typename T>
void conv2d_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias,
                    const Conv2dDims& d, Tensor<T>& out) {
  if (parallel_enabled())
    conv2d_forward_parallel(in, w, bias, d, out);
  else
    conv2d_forward_serial(in, w, bias, d, out);
}

template <typename T>
void conv2d_backward_input_serial(const Tensor<T>& go, const Tensor<T>& w, const Conv2dDims& d,
                                  Tensor<T>& gin) {
  for (int ci = 0; ci < d.c_in; ++ci) detail::conv_backward_input_channel(go, w, d, gin, ci);
}

template <typename T>
void conv2d_backward_input_parallel(const Tensor<T>& go, const Tensor<T>& w, const Conv2dDims& d,
                                    Tensor<T>& gin) {
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < d.c_in; ++ci) detail::conv_backward_input_channel(go, w, d, gin, ci);
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& go, const Tensor<T>& w, const Conv2dDims& d,
                           Tensor<T>& gin) {
  if (parallel_enabled())
    conv2d_backward_input_parallel(go, w, d, gin);
  else
    conv2d_backward_input_serial(go, w, d, gin);
}

template <typename T>
void conv2d_backward_weights_serial(const Tensor<T>& go, const Tensor<T>& in, const Conv2dDims& d,
                                    Tensor<T>& gw, Tensor<T>* gb) {
  for (int co = 0; co < d.c_out; ++co)
    detail::conv_backward_weights_channel(go, in, d, gw, gb, co);
}

template <typename T>
void conv2d_backward_weights_parallel(const Tensor<T>& go, const Tensor<T>& in, const Conv2dDims& d,
                                      Tensor<T>& gw, Tensor<T>* gb) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < d.c_out; ++co)
    detail::conv_backward_weights_channel(go, in, d, gw, gb, co);
}

template <typename T>
void conv2d_backward_weights(const Tensor<T>& go, const Tensor<T>& in, const Conv2dDims& d,
                             Tensor<T>& gw, Tensor<T>* gb) {
  if (parallel_enabled())
    conv2d_backward_weights_parallel(go, in, d, gw, gb);
  else
    conv2d_backward_weights_serial(go, in, d, gw, gb);
}

}  // namespace bas::kernels
