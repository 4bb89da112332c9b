#pragma once

#include <string>

#include "bas/tensor.hpp"

namespace bas {

// Binary ".tns" container: magic "TNS1", u32-LE rank, rank x u32-LE extents,
// then row-major f32-LE values. Round-trips are bit-exact.
void write_tns(const std::string& path, const TensorF& t);
TensorF read_tns(const std::string& path);

}  // namespace bas
