#include "attnviz/heatmap.hpp"

#include <algorithm>

namespace attnviz {

Heatmap resize_heatmap(const Heatmap& hm, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw UsageError("resize_heatmap: target size must be >= 1");
  Heatmap out;
  out.h = out_h;
  out.w = out_w;
  out.source = hm.source;
  out.aggregation = hm.aggregation;
  out.values.resize(static_cast<std::size_t>(out_h) * out_w);
  const double sy_scale = static_cast<double>(hm.h) / out_h;
  const double sx_scale = static_cast<double>(hm.w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    const double sy = (oy + 0.5) * sy_scale - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const double ty = sy - y0;
    const int y0c = std::clamp(y0, 0, hm.h - 1);
    const int y1c = std::clamp(y0 + 1, 0, hm.h - 1);
    for (int ox = 0; ox < out_w; ++ox) {
      const double sx = (ox + 0.5) * sx_scale - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const double tx = sx - x0;
      const int x0c = std::clamp(x0, 0, hm.w - 1);
      const int x1c = std::clamp(x0 + 1, 0, hm.w - 1);
      const double top = (1 - tx) * hm.at(y0c, x0c) + tx * hm.at(y0c, x1c);
      const double bot = (1 - tx) * hm.at(y1c, x0c) + tx * hm.at(y1c, x1c);
      const double v = (1 - ty) * top + ty * bot;
      out.values[static_cast<std::size_t>(oy) * out_w + ox] =
          static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

namespace {

std::uint8_t jet_byte(double t, double center) {
  const double c = std::clamp(1.5 - std::abs(4.0 * t - center), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * c));
}

}  // namespace

RgbImage colormap_jet(const Heatmap& hm) {
  RgbImage img;
  img.h = hm.h;
  img.w = hm.w;
  img.px.resize(static_cast<std::size_t>(hm.h) * hm.w * 3);
  for (std::size_t i = 0; i < hm.values.size(); ++i) {
    const double t = std::clamp(static_cast<double>(hm.values[i]), 0.0, 1.0);
    img.px[i * 3 + 0] = jet_byte(t, 3.0);
    img.px[i * 3 + 1] = jet_byte(t, 2.0);
    img.px[i * 3 + 2] = jet_byte(t, 1.0);
  }
  return img;
}

RgbImage grayscale(const Heatmap& hm) {
  RgbImage img;
  img.h = hm.h;
  img.w = hm.w;
  img.px.resize(static_cast<std::size_t>(hm.h) * hm.w * 3);
  for (std::size_t i = 0; i < hm.values.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(
        std::lround(255.0 * std::clamp(static_cast<double>(hm.values[i]), 0.0, 1.0)));
    img.px[i * 3 + 0] = v;
    img.px[i * 3 + 1] = v;
    img.px[i * 3 + 2] = v;
  }
  return img;
}

RgbImage overlay(const RgbImage& base, const RgbImage& top, float alpha) {
  if (base.h != top.h || base.w != top.w)
    throw UsageError("overlay: dimension mismatch " + std::to_string(base.w) + "x" +
                     std::to_string(base.h) + " vs " + std::to_string(top.w) + "x" +
                     std::to_string(top.h));
  if (!(alpha >= 0.0f && alpha <= 1.0f))
    throw UsageError("overlay: alpha must be in [0,1]");
  RgbImage out;
  out.h = base.h;
  out.w = base.w;
  out.px.resize(base.px.size());
  const double a = alpha;
  for (std::size_t i = 0; i < base.px.size(); ++i)
    out.px[i] = static_cast<std::uint8_t>(
        std::lround((1.0 - a) * base.px[i] + a * top.px[i]));
  return out;
}

NoiseMetrics noise_metrics(const Heatmap& hm) {
  NoiseMetrics m;
  const std::size_t n = hm.values.size();
  double total = 0;
  for (float v : hm.values) total += static_cast<double>(v);
  if (total <= 0.0) {
    m.undefined = true;
    m.entropy = std::log(static_cast<double>(n));  // uniform fallback
    m.top_decile_energy = 0.0;
    return m;
  }
  double entropy = 0;
  for (float v : hm.values) {
    if (v <= 0.0f) continue;
    const double p = static_cast<double>(v) / total;
    entropy -= p * std::log(p);
  }
  m.entropy = std::max(0.0, entropy);

  const std::size_t top = (n + 9) / 10;  // ceil(0.1 * H * W)
  std::vector<float> sorted(hm.values);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(top - 1),
                   sorted.end(), std::greater<float>());
  double top_sum = 0;
  for (std::size_t i = 0; i < top; ++i) top_sum += static_cast<double>(sorted[i]);
  m.top_decile_energy = top_sum / total;
  return m;
}

}  // namespace attnviz
