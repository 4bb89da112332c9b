#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bas/tensor.hpp"

namespace bas {

// Axis-aligned pixel box, half-open on the max side: a single pixel (x,y)
// is the box (x, y, x+1, y+1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return (long long)width() * height(); }
  bool valid() const { return x1 > x0 && y1 > y0; }
  bool operator==(const Box&) const = default;
};

struct BinaryMask {
  int h = 0, w = 0;
  std::vector<uint8_t> v;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(int height, int width) : h(height), w(width), v(size_t(height) * width, 0) {}

  uint8_t at(int y, int x) const { return v[size_t(y) * w + x]; }
  uint8_t& at(int y, int x) { return v[size_t(y) * w + x]; }
  size_t area() const {
    size_t n = 0;
    for (uint8_t b : v) n += b;
    return n;
  }
  bool operator==(const BinaryMask&) const = default;
};

// Single-channel float map, the working currency of the metric suite.
struct Map2D {
  int h = 0, w = 0;
  std::vector<float> v;

  Map2D() = default;
  Map2D(int height, int width) : h(height), w(width), v(size_t(height) * width, 0.f) {}

  float at(int y, int x) const { return v[size_t(y) * w + x]; }
  float& at(int y, int x) { return v[size_t(y) * w + x]; }
};

inline Map2D channel_as_map(const TensorF& t, int c) {
  Map2D m(t.shape[1], t.shape[2]);
  const size_t hw = m.v.size();
  std::copy_n(t.data.data() + size_t(c) * hw, hw, m.v.data());
  return m;
}

inline TensorF mask_as_tensor(const BinaryMask& m) {
  TensorF t({1, m.h, m.w});
  for (size_t i = 0; i < m.v.size(); ++i) t.data[i] = float(m.v[i]);
  return t;
}

// Tight bounding box over all set pixels; empty masks yield nothing.
std::optional<Box> tight_box(const BinaryMask& m);

// 8-bit binary PGM (P5, values 0/255).
void write_pgm(const std::string& path, const BinaryMask& m);
BinaryMask read_pgm(const std::string& path);

}  // namespace bas
