#pragma once

#include <string>

#include "bas/model.hpp"

namespace bas {

// Checkpoint container: magic "BASCKPT1", then per parameter in walk order:
// u16-LE name length, UTF-8 name, u8 rank, rank x u32-LE extents, f32-LE
// data. Loading rejects unknown names and shape mismatches.
void save_checkpoint(const std::string& path, const BasNet& net);
void load_checkpoint(const std::string& path, BasNet& net);

}  // namespace bas
