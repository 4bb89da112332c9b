#include "bas/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bas {

namespace {

void put_u32le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("tns: truncated file: " + path);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

}  // namespace

void write_tns(const std::string& path, const TensorF& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("tns: cannot open for writing: " + path);
  os.write("TNS1", 4);
  put_u32le(os, uint32_t(t.shape.size()));
  for (int e : t.shape) put_u32le(os, uint32_t(e));
  for (float v : t.data) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32le(os, bits);
  }
  if (!os) throw std::runtime_error("tns: write failed: " + path);
}

TensorF read_tns(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("tns: cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "TNS1", 4) != 0)
    throw std::runtime_error("tns: bad magic in " + path);
  uint32_t rank = get_u32le(is, path);
  if (rank > 8) throw std::runtime_error("tns: implausible rank in " + path);
  std::vector<int> shape(rank);
  size_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    uint32_t e = get_u32le(is, path);
    if (e == 0 || e > (1u << 24)) throw std::runtime_error("tns: bad extent in " + path);
    shape[i] = int(e);
    numel *= e;
  }
  TensorF t(shape);
  for (size_t i = 0; i < numel; ++i) {
    uint32_t bits = get_u32le(is, path);
    std::memcpy(&t.data[i], &bits, 4);
  }
  return t;
}

}  // namespace bas
