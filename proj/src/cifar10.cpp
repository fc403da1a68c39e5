#include "attnviz/cifar10.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "attnviz/errors.hpp"

namespace attnviz {

Cifar10Dataset load_cifar10(const std::vector<std::string>& paths,
                            std::string split_tag) {
  Cifar10Dataset ds;
  ds.split = std::move(split_tag);
  for (const std::string& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open data file '" + path + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    if (bytes.size() % Cifar10Dataset::kRecordBytes != 0) {
      const std::size_t offset =
          (bytes.size() / Cifar10Dataset::kRecordBytes) * Cifar10Dataset::kRecordBytes;
      throw FormatError("'" + path + "': length " + std::to_string(bytes.size()) +
                        " is not a multiple of 3073; truncated record at byte offset " +
                        std::to_string(offset));
    }
    const std::size_t records = bytes.size() / Cifar10Dataset::kRecordBytes;
    ds.images.reserve(ds.images.size() + records * Cifar10Dataset::kImageBytes);
    ds.labels.reserve(ds.labels.size() + records);
    for (std::size_t r = 0; r < records; ++r) {
      const std::size_t offset = r * Cifar10Dataset::kRecordBytes;
      const auto label = static_cast<std::uint8_t>(bytes[offset]);
      if (label >= 10)
        throw FormatError("'" + path + "': label byte " + std::to_string(label) +
                          " out of range at byte offset " + std::to_string(offset));
      ds.labels.push_back(label);
      const auto* px = reinterpret_cast<const std::uint8_t*>(bytes.data()) + offset + 1;
      ds.images.insert(ds.images.end(), px, px + Cifar10Dataset::kImageBytes);
    }
  }
  return ds;
}

void save_cifar10(const Cifar10Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write data file '" + path + "'");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const char label = static_cast<char>(ds.labels[i]);
    out.write(&label, 1);
    out.write(reinterpret_cast<const char*>(ds.image(i)), Cifar10Dataset::kImageBytes);
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

Cifar10Dataset subset(const Cifar10Dataset& ds, std::size_t n) {
  if (n >= ds.size()) return ds;
  Cifar10Dataset out;
  out.split = ds.split;
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(n));
  out.images.assign(ds.images.begin(),
                    ds.images.begin() + static_cast<std::ptrdiff_t>(n * Cifar10Dataset::kImageBytes));
  return out;
}

}  // namespace attnviz
