#include "bas/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace bas {

namespace {

constexpr char kMagic[8] = {'B', 'A', 'S', 'C', 'K', 'P', 'T', '1'};

void put_u16le(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u16le(std::istream& is, uint16_t& v) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) return false;
  v = uint16_t(b[0]) | uint16_t(b[1]) << 8;
  return true;
}

uint32_t get_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint: truncated file: " + path);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const BasNet& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 8);
  net.for_each_param([&](const std::string& name, const TensorF& t) {
    put_u16le(os, uint16_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    os.put(char(t.rank()));
    for (int e : t.shape) put_u32le(os, uint32_t(e));
    for (float v : t.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32le(os, bits);
    }
  });
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, BasNet& net) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);

  std::map<std::string, TensorF*> params;
  net.for_each_param([&](const std::string& name, TensorF& t) { params[name] = &t; });

  size_t loaded = 0;
  uint16_t name_len;
  while (get_u16le(is, name_len)) {
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("checkpoint: truncated file: " + path);
    int rank = is.get();
    if (rank < 0) throw std::runtime_error("checkpoint: truncated file: " + path);
    std::vector<int> shape(static_cast<size_t>(rank));
    size_t numel = 1;
    for (int i = 0; i < rank; ++i) {
      uint32_t e = get_u32le(is, path);
      if (e == 0 || e > (1u << 24)) throw std::runtime_error("checkpoint: bad extent in " + path);
      shape[size_t(i)] = int(e);
      numel *= e;
    }
    auto it = params.find(name);
    if (it == params.end())
      throw std::runtime_error("checkpoint: unknown parameter \"" + name + "\" in " + path);
    if (it->second->shape != shape)
      throw std::runtime_error("checkpoint: parameter \"" + name + "\" has shape " +
                               TensorF(shape).shape_str() + " but the model expects " +
                               it->second->shape_str());
    for (size_t i = 0; i < numel; ++i) {
      uint32_t bits = get_u32le(is, path);
      std::memcpy(&it->second->data[i], &bits, 4);
    }
    ++loaded;
  }
  if (loaded != params.size())
    throw std::runtime_error("checkpoint: " + path + " holds " + std::to_string(loaded) +
                             " parameters, the model expects " + std::to_string(params.size()));
}

}  // namespace bas
