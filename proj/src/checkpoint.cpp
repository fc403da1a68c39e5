#include "attnviz/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace attnviz {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'Z', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw CheckpointError("'" + path + "': truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const Network<float>& net) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(net.params().size()));
  for (const auto& [name, t] : net.params()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

void load_checkpoint(const std::string& path, Network<float>& net) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("'" + path + "': bad magic bytes");
  if (get_u32(in, path) != kVersion)
    throw CheckpointError("'" + path + "': unsupported version");
  const std::uint32_t count = get_u32(in, path);
  std::set<std::string> seen;
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = get_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw CheckpointError("'" + path + "': truncated checkpoint");
    const std::uint32_t ndim = get_u32(in, path);
    Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d)
      shape[d] = static_cast<int>(get_u32(in, path));
    if (!net.has_param(name))
      throw CheckpointError("'" + path + "': parameter '" + name +
                            "' not present in the model spec");
    TensorF& t = net.param(name);
    if (t.shape() != shape)
      throw CheckpointError("'" + path + "': parameter '" + name +
                            "' has shape " + shape_str(shape) +
                            ", model expects " + shape_str(t.shape()));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw CheckpointError("'" + path + "': truncated checkpoint");
    seen.insert(name);
  }
  if (seen.size() != net.params().size())
    throw CheckpointError("'" + path + "': checkpoint covers " +
                          std::to_string(seen.size()) + " of " +
                          std::to_string(net.params().size()) + " parameters");
}

}  // namespace attnviz
