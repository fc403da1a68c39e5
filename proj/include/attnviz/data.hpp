#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "attnviz/cifar10.hpp"
#include "attnviz/rng.hpp"
#include "attnviz/tensor.hpp"

namespace attnviz {

// Per-channel normalization applied after scaling bytes to [0,1]:
// value = (byte/255 - mean[c]) / std[c].
struct Normalization {
  std::array<double, 3> mean;
  std::array<double, 3> stddev;
};

// Frozen constants measured once over the bundled default training split
// (synthetic generator, seed 7, 10000 images). Override in the run config
// when training on other data.
Normalization default_normalization();

// Recomputes per-channel mean/stddev of a dataset (byte values scaled to
// [0,1]); used to derive constants for new data and by the tests.
Normalization measure_normalization(const Cifar10Dataset& ds);

// Raw image bytes (count x 3072, plane layout) -> [count,3,32,32] tensor.
TensorF preprocess(const std::uint8_t* images, std::size_t count,
                   const Normalization& norm);

struct AugmentConfig {
  bool flip = true;
  int pad_crop = 4;
};

// In-place horizontal flip of one 3072-byte image (involution).
void hflip_image(std::uint8_t* img);

// Training-time augmentation over raw bytes. Per image, in batch order:
// one flip draw (probability 0.5, only when enabled), then a row offset and
// a column offset draw for the zero-pad-then-crop (only when pad_crop > 0).
std::vector<std::uint8_t> augment(const std::uint8_t* images, std::size_t count,
                                  const AugmentConfig& cfg, Rng& rng);

}  // namespace attnviz
