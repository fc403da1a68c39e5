#include "attnviz/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "attnviz/rng.hpp"

namespace attnviz {

namespace {

constexpr int kSide = Cifar10Dataset::kSide;

double class_pattern(int label, int x, int y, const double* p) {
  // p: up to six per-image shape parameters drawn before the pixel loop
  const double fx = x, fy = y;
  switch (label) {
    case 0:  // horizontal stripes
      return 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * p[0] * fy / kSide + p[1]));
    case 1:  // vertical stripes
      return 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * p[0] * fx / kSide + p[1]));
    case 2:  // diagonal stripes
      return 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * p[0] * (fx + fy) / kSide + p[1]));
    case 3: {  // checkerboard
      const int c = static_cast<int>(p[0]);
      return ((x + static_cast<int>(p[1])) / c + (y + static_cast<int>(p[2])) / c) % 2;
    }
    case 4: {  // filled disk
      const double d = std::hypot(fx - p[0], fy - p[1]);
      return d <= p[2] ? 1.0 : 0.0;
    }
    case 5: {  // ring
      const double d = std::hypot(fx - p[0], fy - p[1]);
      return std::abs(d - p[2]) <= 2.0 ? 1.0 : 0.0;
    }
    case 6: {  // cross
      return (std::abs(fx - p[0]) <= p[2] || std::abs(fy - p[1]) <= p[2]) ? 1.0 : 0.0;
    }
    case 7: {  // corner block
      const bool left = p[0] < 0.5, top = p[1] < 0.5;
      const double b = p[2];
      const bool in_x = left ? fx < b : fx >= kSide - b;
      const bool in_y = top ? fy < b : fy >= kSide - b;
      return (in_x && in_y) ? 1.0 : 0.0;
    }
    case 8: {  // radial gradient
      return std::clamp(std::hypot(fx - p[0], fy - p[1]) / 23.0, 0.0, 1.0);
    }
    default: {  // three soft blobs
      double acc = 0;
      for (int i = 0; i < 3; ++i) {
        const double dx = fx - p[2 * i], dy = fy - p[2 * i + 1];
        acc += std::exp(-(dx * dx + dy * dy) / (2.0 * 4.0 * 4.0));
      }
      return std::clamp(acc, 0.0, 1.0);
    }
  }
}

}  // namespace

Cifar10Dataset make_synthetic_cifar(std::uint64_t seed, int count,
                                    std::string split_tag) {
  Cifar10Dataset ds;
  ds.split = std::move(split_tag);
  ds.labels.reserve(static_cast<std::size_t>(count));
  ds.images.resize(static_cast<std::size_t>(count) * Cifar10Dataset::kImageBytes);
  Rng rng(substream_seed(seed, "synth." + ds.split));

  for (int i = 0; i < count; ++i) {
    const int label = i % 10;
    ds.labels.push_back(label);

    double ca[3], cb[3];
    for (double& v : ca) v = rng.uniform(0, 255);
    for (double& v : cb) v = rng.uniform(0, 255);

    double p[6] = {};
    switch (label) {
      case 0:
      case 1:
      case 2:
        p[0] = 2.0 + rng.below(3);            // frequency 2..4
        p[1] = rng.uniform(0, 2 * std::numbers::pi);
        break;
      case 3:
        p[0] = 3.0 + rng.below(3);            // cell 3..5
        p[1] = rng.below(6);
        p[2] = rng.below(6);
        break;
      case 4:
      case 5:
      case 6:
        p[0] = rng.uniform(10, 22);           // center x
        p[1] = rng.uniform(10, 22);           // center y
        p[2] = label == 6 ? rng.uniform(2, 4) : rng.uniform(6, 10);
        break;
      case 7:
        p[0] = rng.uniform();
        p[1] = rng.uniform();
        p[2] = rng.uniform(12, 20);
        break;
      case 8:
        p[0] = rng.uniform(8, 24);
        p[1] = rng.uniform(8, 24);
        break;
      default:
        for (int j = 0; j < 6; ++j) p[j] = rng.uniform(4, 28);
        break;
    }

    std::uint8_t* img = ds.image(static_cast<std::size_t>(i));
    for (int y = 0; y < kSide; ++y)
      for (int x = 0; x < kSide; ++x) {
        const double v = class_pattern(label, x, y, p);
        for (int c = 0; c < 3; ++c) {
          const double noisy = ca[c] + (cb[c] - ca[c]) * v + rng.normal(0.0, 20.0);
          img[c * kSide * kSide + y * kSide + x] =
              static_cast<std::uint8_t>(std::clamp(noisy, 0.0, 255.0));
        }
      }
  }
  return ds;
}

}  // namespace attnviz
