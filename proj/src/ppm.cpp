#include "attnviz/ppm.hpp"

#include <fstream>
#include <sstream>

#include "attnviz/errors.hpp"

namespace attnviz {

std::string ppm_bytes(const RgbImage& img) {
  if (img.h < 1 || img.w < 1 ||
      img.px.size() != static_cast<std::size_t>(img.h) * img.w * 3)
    throw UsageError("write_ppm: empty or inconsistent image");
  std::ostringstream os;
  os << "P6\n" << img.w << ' ' << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.px.data()),
           static_cast<std::streamsize>(img.px.size()));
  return os.str();
}

void write_ppm(const RgbImage& img, const std::string& path) {
  const std::string bytes = ppm_bytes(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

RgbImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path + "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w < 1 || h < 1 || maxval != 255)
    throw FormatError("'" + path + "': not a P6/255 PPM");
  in.get();  // single whitespace after the header
  RgbImage img;
  img.w = w;
  img.h = h;
  img.px.resize(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(img.px.data()),
          static_cast<std::streamsize>(img.px.size()));
  if (!in) throw FormatError("'" + path + "': truncated pixel data");
  return img;
}

}  // namespace attnviz
