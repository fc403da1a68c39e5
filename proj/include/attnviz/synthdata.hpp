#pragma once

#include <cstdint>

#include "attnviz/cifar10.hpp"

namespace attnviz {

// Deterministic synthetic dataset in CIFAR-10 binary layout, for desk-scale
// runs where the real batches are not available. Ten procedurally distinct
// texture/shape classes (stripes, checkers, disks, rings, crosses, blobs, ...)
// rendered in random colors with per-pixel noise; labels are assigned
// round-robin, so any prefix whose length is a multiple of 10 is exactly
// class-balanced.
Cifar10Dataset make_synthetic_cifar(std::uint64_t seed, int count,
                                    std::string split_tag = "train");

}  // namespace attnviz
