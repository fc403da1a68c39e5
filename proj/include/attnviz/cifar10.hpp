#pragma once

#include <cstdint>
#include <string>
#include <vector>

// CIFAR-10 binary batch format, bit-exact:
//   one record = 3073 bytes: label byte (0..9), then 1024 bytes red plane
//   (row-major 32x32), 1024 green, 1024 blue.

namespace attnviz {

struct Cifar10Dataset {
  static constexpr int kSide = 32;
  static constexpr int kImageBytes = 3 * kSide * kSide;  // 3072
  static constexpr int kRecordBytes = kImageBytes + 1;   // 3073

  std::vector<std::uint8_t> images;  // size() * 3072, plane layout as on disk
  std::vector<int> labels;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  const std::uint8_t* image(std::size_t i) const {
    return images.data() + i * kImageBytes;
  }
  std::uint8_t* image(std::size_t i) { return images.data() + i * kImageBytes; }
};

// Concatenates the records of all files, in order. Throws DataError when a
// file cannot be read, FormatError (with the byte offset) when a file length
// is not a multiple of 3073 or a label byte is out of range.
Cifar10Dataset load_cifar10(const std::vector<std::string>& paths,
                            std::string split_tag = "train");

// Writes the dataset back out in the same binary format.
void save_cifar10(const Cifar10Dataset& ds, const std::string& path);

// First n records (or the whole set if n >= size).
Cifar10Dataset subset(const Cifar10Dataset& ds, std::size_t n);

}  // namespace attnviz
