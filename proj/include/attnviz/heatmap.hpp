#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "attnviz/errors.hpp"
#include "attnviz/tensor.hpp"

namespace attnviz {

// H x W saliency map, values in [0,1], plus where it came from.
struct Heatmap {
  int h = 0, w = 0;
  std::vector<float> values;  // row-major
  std::string source;         // tap id / layer description
  std::string aggregation;

  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }
};

struct RgbImage {
  int h = 0, w = 0;
  std::vector<std::uint8_t> px;  // interleaved R,G,B, row-major

  std::uint8_t* pixel(int y, int x) { return px.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
  const std::uint8_t* pixel(int y, int x) const {
    return px.data() + (static_cast<std::size_t>(y) * w + x) * 3;
  }
};

enum class Aggregation { mean_abs, max_abs, channel };

inline const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::mean_abs: return "mean_abs";
    case Aggregation::max_abs: return "max_abs";
    default: return "channel";
  }
}

// Aggregates a single-image activation [1,C,H,W] into an H x W map and
// min-max normalizes it. Aggregation and normalization run in double so the
// float32 result is positively scale-invariant; a constant map normalizes to
// all zeros rather than inventing saliency.
template <class S>
Heatmap extract_heatmap(const Tensor<S>& act, Aggregation agg, int channel = -1,
                        std::string source = "") {
  if (act.ndim() != 4 || act.dim(0) != 1)
    throw UsageError("extract_heatmap: need a single-image [1,C,H,W] activation, got " +
                     shape_str(act.shape()));
  const int chans = act.dim(1), h = act.dim(2), w = act.dim(3);
  if (agg == Aggregation::channel && (channel < 0 || channel >= chans))
    throw UsageError("extract_heatmap: channel " + std::to_string(channel) +
                     " out of range [0," + std::to_string(chans) + ")");

  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> agg_map(hw, 0.0);
  const S* ap = act.data();
  for (std::size_t i = 0; i < hw; ++i) {
    double v = 0;
    switch (agg) {
      case Aggregation::mean_abs: {
        double acc = 0;
        for (int c = 0; c < chans; ++c)
          acc += std::abs(static_cast<double>(ap[static_cast<std::size_t>(c) * hw + i]));
        v = acc / chans;
        break;
      }
      case Aggregation::max_abs: {
        double best = 0;
        for (int c = 0; c < chans; ++c)
          best = std::max(best, std::abs(static_cast<double>(ap[static_cast<std::size_t>(c) * hw + i])));
        v = best;
        break;
      }
      default:
        v = static_cast<double>(ap[static_cast<std::size_t>(channel) * hw + i]);
        break;
    }
    agg_map[i] = v;
  }

  double lo = agg_map[0], hi = agg_map[0];
  for (double v : agg_map) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  Heatmap out;
  out.h = h;
  out.w = w;
  out.source = std::move(source);
  out.aggregation = to_string(agg);
  if (agg == Aggregation::channel) out.aggregation += ":" + std::to_string(channel);
  out.values.resize(hw);
  if (hi > lo) {
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < hw; ++i)
      out.values[i] = static_cast<float>((agg_map[i] - lo) * inv);
  }  // degenerate constant map stays all zeros
  return out;
}

// Bilinear resize (half-pixel centers, clamped borders), re-clamped to [0,1].
Heatmap resize_heatmap(const Heatmap& hm, int out_h, int out_w);

// Jet palette fixed by closed form, per channel c(t):
//   r = clamp(1.5 - |4t-3|, 0, 1), g = clamp(1.5 - |4t-2|, 0, 1),
//   b = clamp(1.5 - |4t-1|, 0, 1),  byte = round(255 c).
RgbImage colormap_jet(const Heatmap& hm);

// Grayscale rendering of the raw map (r = g = b = round(255 v)).
RgbImage grayscale(const Heatmap& hm);

// out = round((1-alpha) * base + alpha * top) per byte.
RgbImage overlay(const RgbImage& base, const RgbImage& top, float alpha);

struct NoiseMetrics {
  double entropy = 0;            // nats, of the map normalized to a distribution
  double top_decile_energy = 0;  // mass of the ceil(0.1*H*W) largest cells
  std::optional<double> mask_mean;
  bool undefined = false;        // set for an all-zero map
};

// Quantifies how concentrated a heatmap is. For an all-zero map the
// distribution is taken as uniform (entropy ln(H*W)), top_decile_energy is
// reported as 0 and `undefined` is set.
NoiseMetrics noise_metrics(const Heatmap& hm);

template <class S>
NoiseMetrics noise_metrics(const Heatmap& hm, const Tensor<S>& mask) {
  NoiseMetrics m = noise_metrics(hm);
  double acc = 0;
  for (std::size_t i = 0; i < mask.numel(); ++i)
    acc += static_cast<double>(mask[i]);
  m.mask_mean = acc / static_cast<double>(mask.numel());
  return m;
}

}  // namespace attnviz
