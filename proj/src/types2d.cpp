#include "bas/types2d.hpp"

#include <fstream>
#include <stdexcept>

namespace bas {

std::optional<Box> tight_box(const BinaryMask& m) {
  int x0 = m.w, y0 = m.h, x1 = -1, y1 = -1;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.at(y, x)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return std::nullopt;
  return Box{x0, y0, x1 + 1, y1 + 1};
}

void write_pgm(const std::string& path, const BinaryMask& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("pgm: cannot open for writing: " + path);
  os << "P5\n" << m.w << " " << m.h << "\n255\n";
  std::vector<unsigned char> row(size_t(m.w));
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) row[size_t(x)] = m.at(y, x) ? 255 : 0;
    os.write(reinterpret_cast<const char*>(row.data()), m.w);
  }
  if (!os) throw std::runtime_error("pgm: write failed: " + path);
}

BinaryMask read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("pgm: cannot open: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("pgm: bad header in " + path);
  is.get();  // single whitespace after the header
  BinaryMask m(h, w);
  std::vector<unsigned char> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    if (!is.read(reinterpret_cast<char*>(row.data()), w))
      throw std::runtime_error("pgm: truncated file: " + path);
    for (int x = 0; x < w; ++x) m.at(y, x) = row[size_t(x)] >= 128 ? 1 : 0;
  }
  return m;
}

}  // namespace bas
