#pragma once

#include <string>

#include "attnviz/heatmap.hpp"

namespace attnviz {

// Binary P6 PPM: header "P6\n<W> <H>\n255\n" then W*H*3 raw bytes, row-major.
// Bit-exact format of record for all image outputs.
void write_ppm(const RgbImage& img, const std::string& path);
std::string ppm_bytes(const RgbImage& img);

// Strict reader for the writer's dialect (test fixture / round-trips).
RgbImage read_ppm(const std::string& path);

}  // namespace attnviz
