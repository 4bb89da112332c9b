// Times the OpenMP conv kernels against the serial reference on the shapes
// the training loop actually runs, and checks the two paths stay
// bit-identical while at it.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "bas/kernels.hpp"
#include "bas/rng.hpp"
#include "bas/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using bas::Rng;
using bas::TensorF;
namespace kn = bas::kernels;

namespace {

struct Case {
  const char* name;
  int c_in, h, w, c_out, k, stride, pad;
};

TensorF random_tensor(Rng& rng, std::vector<int> shape) {
  TensorF t(std::move(shape));
  for (auto& v : t.data) v = float(rng.uniform(-1.0, 1.0));
  return t;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 20;
  const Case cases[] = {
      {"trunk 3->16 s2 64x64", 3, 64, 64, 16, 3, 2, 1},
      {"trunk 16->32 s2 32x32", 16, 32, 32, 32, 3, 2, 1},
      {"trunk 32->64 16x16", 32, 16, 16, 64, 3, 1, 1},
      {"tail 64->64 16x16", 64, 16, 16, 64, 3, 1, 1},
      {"tail 64->64 32x32", 64, 32, 32, 64, 3, 1, 1},
  };

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (built without OpenMP)\n");
#endif
  std::printf("%-24s %12s %12s %8s  %12s %12s %8s\n", "case", "fwd ser ms", "fwd par ms", "speedup",
              "bwd ser ms", "bwd par ms", "speedup");

  Rng rng(7);
  for (const Case& c : cases) {
    TensorF in = random_tensor(rng, {c.c_in, c.h, c.w});
    TensorF w = random_tensor(rng, {c.c_out, c.c_in, c.k, c.k});
    auto d = kn::conv2d_dims(in.shape, w.shape, c.stride, c.pad);
    TensorF out({d.c_out, d.h_out, d.w_out});
    TensorF out2({d.c_out, d.h_out, d.w_out});
    TensorF go = random_tensor(rng, {d.c_out, d.h_out, d.w_out});
    TensorF gin(in.shape), gin2(in.shape), gw(w.shape), gw2(w.shape);

    const TensorF* no_bias = nullptr;
    double fs = time_ms([&] { kn::conv2d_forward_serial(in, w, no_bias, d, out); }, reps);
    double fp = time_ms([&] { kn::conv2d_forward_parallel(in, w, no_bias, d, out2); }, reps);
    if (std::memcmp(out.data.data(), out2.data.data(), out.numel() * 4) != 0) {
      std::printf("MISMATCH in forward results for %s\n", c.name);
      return 1;
    }

    double bs = time_ms(
        [&] {
          std::fill(gin.data.begin(), gin.data.end(), 0.f);
          std::fill(gw.data.begin(), gw.data.end(), 0.f);
          kn::conv2d_backward_input_serial(go, w, d, gin);
          kn::conv2d_backward_weights_serial<float>(go, in, d, gw, nullptr);
        },
        reps);
    double bp = time_ms(
        [&] {
          std::fill(gin2.data.begin(), gin2.data.end(), 0.f);
          std::fill(gw2.data.begin(), gw2.data.end(), 0.f);
          kn::conv2d_backward_input_parallel(go, w, d, gin2);
          kn::conv2d_backward_weights_parallel<float>(go, in, d, gw2, nullptr);
        },
        reps);
    if (std::memcmp(gin.data.data(), gin2.data.data(), gin.numel() * 4) != 0 ||
        std::memcmp(gw.data.data(), gw2.data.data(), gw.numel() * 4) != 0) {
      std::printf("MISMATCH in backward results for %s\n", c.name);
      return 1;
    }

    std::printf("%-24s %12.3f %12.3f %7.2fx  %12.3f %12.3f %7.2fx\n", c.name, fs, fp, fs / fp, bs,
                bp, bs / bp);
  }
  return 0;
}
