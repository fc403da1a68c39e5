#pragma once

#include <string>

#include "attnviz/network.hpp"

// Flat binary checkpoint, little-endian:
//   magic   "AVZC" (4 bytes)
//   u32     version (= 1)
//   u32     parameter count
//   per parameter, in the network's canonical order:
//     u32 name length, name bytes,
//     u32 ndim, u32 dims[ndim],
//     f32 raw values (row-major)

namespace attnviz {

void save_checkpoint(const std::string& path, const Network<float>& net);

// Loads into an already-built network. Throws CheckpointError on bad magic or
// version, on an unknown parameter name, and on the first shape mismatch
// (naming the parameter).
void load_checkpoint(const std::string& path, Network<float>& net);

}  // namespace attnviz
