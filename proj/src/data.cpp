#include "attnviz/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace attnviz {

namespace {
constexpr int kSide = Cifar10Dataset::kSide;
constexpr int kPlane = kSide * kSide;
}  // namespace

Normalization default_normalization() {
  // measured over make_synthetic_cifar(seed 7, 10000, "train"); see README
  return Normalization{{0.496915, 0.498534, 0.496774},
                       {0.276229, 0.276223, 0.275951}};
}

Normalization measure_normalization(const Cifar10Dataset& ds) {
  Normalization n{{0, 0, 0}, {0, 0, 0}};
  const std::size_t per_channel = ds.size() * static_cast<std::size_t>(kPlane);
  for (int c = 0; c < 3; ++c) {
    double acc = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::uint8_t* plane = ds.image(i) + c * kPlane;
      for (int j = 0; j < kPlane; ++j) acc += plane[j] / 255.0;
    }
    n.mean[static_cast<std::size_t>(c)] = acc / static_cast<double>(per_channel);
  }
  for (int c = 0; c < 3; ++c) {
    double acc = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::uint8_t* plane = ds.image(i) + c * kPlane;
      for (int j = 0; j < kPlane; ++j) {
        const double d = plane[j] / 255.0 - n.mean[static_cast<std::size_t>(c)];
        acc += d * d;
      }
    }
    n.stddev[static_cast<std::size_t>(c)] =
        std::sqrt(acc / static_cast<double>(per_channel));
  }
  return n;
}

TensorF preprocess(const std::uint8_t* images, std::size_t count,
                   const Normalization& norm) {
  TensorF out(Shape{static_cast<int>(count), 3, kSide, kSide});
  float* op = out.data();
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* img = images + i * Cifar10Dataset::kImageBytes;
    for (int c = 0; c < 3; ++c) {
      const float mean = static_cast<float>(norm.mean[static_cast<std::size_t>(c)]);
      const float inv_std =
          static_cast<float>(1.0 / norm.stddev[static_cast<std::size_t>(c)]);
      const std::uint8_t* plane = img + c * kPlane;
      float* dst = op + (i * 3 + static_cast<std::size_t>(c)) * kPlane;
      for (int j = 0; j < kPlane; ++j)
        dst[j] = (plane[j] * (1.0f / 255.0f) - mean) * inv_std;
    }
  }
  return out;
}

void hflip_image(std::uint8_t* img) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kSide; ++y) {
      std::uint8_t* row = img + c * kPlane + y * kSide;
      std::reverse(row, row + kSide);
    }
}

std::vector<std::uint8_t> augment(const std::uint8_t* images, std::size_t count,
                                  const AugmentConfig& cfg, Rng& rng) {
  std::vector<std::uint8_t> out(images,
                                images + count * Cifar10Dataset::kImageBytes);
  const int pad = cfg.pad_crop;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint8_t* img = out.data() + i * Cifar10Dataset::kImageBytes;
    if (cfg.flip && rng.uniform() < 0.5) hflip_image(img);
    if (pad > 0) {
      const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1)));
      const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1)));
      std::uint8_t cropped[Cifar10Dataset::kImageBytes];
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < kSide; ++y)
          for (int x = 0; x < kSide; ++x) {
            const int sy = y + oy - pad, sx = x + ox - pad;
            cropped[c * kPlane + y * kSide + x] =
                (sy >= 0 && sy < kSide && sx >= 0 && sx < kSide)
                    ? img[c * kPlane + sy * kSide + sx]
                    : 0;
          }
      std::memcpy(img, cropped, Cifar10Dataset::kImageBytes);
    }
  }
  return out;
}

}  // namespace attnviz
