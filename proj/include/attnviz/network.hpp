#pragma once

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "attnviz/ops.hpp"
#include "attnviz/rng.hpp"

// Mini inception-style classifier with an optional shared bottom-up/top-down
// attention module. The attention module is one hourglass body (maxpool x d,
// 3x3 conv bottleneck, nearest upsample, 3x3 conv) shared by K mask heads;
// each head is two 1x1 convs followed by a sigmoid and gates the feature map
// it is attached to.

namespace attnviz {

enum class StagePlacement { early, middle, later };
enum class MaskMode { multiply, residual };

inline const char* to_string(StagePlacement s) {
  switch (s) {
    case StagePlacement::early: return "early";
    case StagePlacement::middle: return "middle";
    default: return "later";
  }
}

inline const char* to_string(MaskMode m) {
  return m == MaskMode::multiply ? "multiply" : "residual";
}

inline StagePlacement stage_from_string(const std::string& s) {
  if (s == "early") return StagePlacement::early;
  if (s == "middle") return StagePlacement::middle;
  if (s == "later") return StagePlacement::later;
  throw ConfigError("unknown stage '" + s + "' (expected early|middle|later)");
}

inline MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "multiply") return MaskMode::multiply;
  if (s == "residual") return MaskMode::residual;
  throw ConfigError("unknown mask mode '" + s + "' (expected multiply|residual)");
}

// ---------------------------------------------------------------------------
// specs
// ---------------------------------------------------------------------------

struct StemSpec {
  int out_channels = 16;
  int kernel = 3;
};

// Branch widths of one mini-inception block: 1x1, (1x1 -> 3x3), a dilated
// 3x3 standing in for the 5x5 branch (1x1 to w5pre, then 3x3 dilation 2 to
// w5), and (3x3 maxpool -> 1x1). Output channels = w1 + w3 + w5 + wpool.
struct BlockSpec {
  int w1 = 8, w3 = 8, w5pre = 4, w5 = 4, wpool = 4;
  int out_channels() const { return w1 + w3 + w5 + wpool; }
};

struct MaskHeadSpec {
  int hidden = 0;     // 0 = auto: max(4, C/2)
  int downscale = 0;  // extra maxpool levels before the head; mask upsampled back
};

struct AttentionModuleSpec {
  int pool_depth = 2;
  int body_channels = 0;  // 0 = same as gated feature channels
  std::vector<MaskHeadSpec> heads{MaskHeadSpec{}};
  MaskMode mode = MaskMode::multiply;
  bool spatial_only = false;  // channel-mean before sigmoid, one spatial map
};

struct NetworkSpec {
  StemSpec stem;
  std::array<BlockSpec, 3> blocks{BlockSpec{8, 8, 4, 4, 4},
                                  BlockSpec{8, 12, 6, 8, 4},
                                  BlockSpec{16, 16, 8, 8, 8}};
  std::optional<StagePlacement> attention_stage;
  AttentionModuleSpec attention;
  int classes = 10;
  int input_channels = 3;
  int input_hw = 32;

  int block_out(int i) const { return blocks[static_cast<std::size_t>(i)].out_channels(); }

  // Spatial size at the output of block i (2x2 maxpool between blocks).
  int stage_hw(int i) const { return input_hw >> i; }

  int stage_index(StagePlacement s) const {
    return s == StagePlacement::early ? 0 : s == StagePlacement::middle ? 1 : 2;
  }

  void validate() const {
    if (input_channels < 1 || input_hw < 4)
      throw ConfigError("network: bad input geometry");
    if (input_hw % 4 != 0)
      throw ConfigError("network: input size must be divisible by 4 for the inter-block pools");
    if (stem.out_channels < 1) throw ConfigError("network: stem channels must be positive");
    if (stem.kernel < 1 || stem.kernel % 2 == 0)
      throw ConfigError("network: stem kernel must be odd");
    for (int i = 0; i < 3; ++i) {
      const BlockSpec& b = blocks[static_cast<std::size_t>(i)];
      if (b.w1 < 1 || b.w3 < 1 || b.w5pre < 1 || b.w5 < 1 || b.wpool < 1)
        throw ConfigError("network: block " + std::to_string(i + 1) +
                          " has a non-positive branch width");
    }
    if (classes < 2) throw ConfigError("network: need at least 2 classes");
    if (attention_stage) {
      const AttentionModuleSpec& a = attention;
      if (a.pool_depth < 1) throw ConfigError("attention: pool depth must be >= 1");
      if (a.heads.empty()) throw ConfigError("attention: need at least one mask head");
      const int hw = stage_hw(stage_index(*attention_stage));
      if (hw % (1 << a.pool_depth) != 0)
        throw ConfigError("attention: stage size " + std::to_string(hw) +
                          " not divisible by 2^" + std::to_string(a.pool_depth));
      for (const MaskHeadSpec& h : a.heads) {
        if (h.hidden < 0 || h.downscale < 0)
          throw ConfigError("attention: negative head field");
        if (hw % (1 << h.downscale) != 0)
          throw ConfigError("attention: head downscale does not divide stage size " +
                            std::to_string(hw));
      }
    }
  }
};

inline NetworkSpec place_attention(NetworkSpec spec, StagePlacement stage,
                                   AttentionModuleSpec attn) {
  if (spec.attention_stage)
    throw ConfigError("attention already placed at stage '" +
                      std::string(to_string(*spec.attention_stage)) + "'");
  spec.attention_stage = stage;
  spec.attention = std::move(attn);
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// layer parameter bundles + forward building blocks
// ---------------------------------------------------------------------------

template <class S>
struct ConvParams {
  Tensor<S> w, b;
};

template <class S>
struct BlockParams {
  ConvParams<S> b1, b3r, b3, b5r, b5, bp;
};

template <class S>
struct HourglassParams {
  ConvParams<S> body1, body2;  // 3x3 bottleneck conv, 3x3 restore conv
  int pool_depth = 2;
};

template <class S>
struct MaskHeadParams {
  ConvParams<S> c1, c2;  // 1x1 C->h, 1x1 h->C (or h->1 when spatial_only)
  int downscale = 0;
  bool spatial_only = false;
};

template <class S>
Tensor<S> mini_inception_block(const Tensor<S>& x, const BlockParams<S>& p) {
  Tensor<S> b1 = relu(conv2d(x, p.b1.w, p.b1.b));
  Tensor<S> b3 = relu(conv2d(relu(conv2d(x, p.b3r.w, p.b3r.b)), p.b3.w, p.b3.b, 1, 1));
  Tensor<S> b5 = relu(conv2d(relu(conv2d(x, p.b5r.w, p.b5r.b)), p.b5.w, p.b5.b, 1, 2, 2));
  Tensor<S> bp = relu(conv2d(pool2d(x, PoolKind::max, 3, 1, 1), p.bp.w, p.bp.b));
  return concat_channels<S>({b1, b3, b5, bp});
}

// Bottom-up (maxpool x d), 3x3 conv bottleneck, top-down (nearest upsample),
// 3x3 conv back at full resolution. Output shape equals input shape.
template <class S>
Tensor<S> hourglass_shared(const Tensor<S>& x, const HourglassParams<S>& p) {
  const int d = p.pool_depth;
  if (x.dim(2) % (1 << d) != 0 || x.dim(3) % (1 << d) != 0)
    throw ConfigError("hourglass: input " + shape_str(x.shape()) +
                      " not divisible by 2^" + std::to_string(d));
  Tensor<S> t = x;
  for (int i = 0; i < d; ++i) t = pool2d(t, PoolKind::max, 2, 2);
  t = relu(conv2d(t, p.body1.w, p.body1.b, 1, 1));
  t = upsample(t, 1 << d, UpsampleMode::nearest);
  return relu(conv2d(t, p.body2.w, p.body2.b, 1, 1));
}

// Two 1x1 convs + sigmoid on the shared body output. Every element of the
// returned mask is strictly inside (0,1): finite-precision sigmoid rounds to
// exactly 0 or 1 once |z| is large, so saturated values are pinned one ulp
// inside the interval (the true sigmoid gradient there is ~0 either way).
template <class S>
Tensor<S> mask_head(const Tensor<S>& s, const MaskHeadParams<S>& p, int target_channels) {
  Tensor<S> t = s;
  for (int i = 0; i < p.downscale; ++i) t = pool2d(t, PoolKind::max, 2, 2);
  t = relu(conv2d(t, p.c1.w, p.c1.b));
  t = conv2d(t, p.c2.w, p.c2.b);
  if (p.spatial_only) t = channel_mean(t);
  Tensor<S> m = sigmoid(t);
  const S lo = std::numeric_limits<S>::denorm_min();
  const S hi = std::nextafter(S(1), S(0));
  for (auto& v : m.vec()) v = std::min(std::max(v, lo), hi);
  if (p.downscale > 0) m = upsample(m, 1 << p.downscale, UpsampleMode::nearest);
  if (p.spatial_only) m = broadcast_channels(m, target_channels);
  return m;
}

template <class S>
Tensor<S> apply_attention(const Tensor<S>& f, const Tensor<S>& m, MaskMode mode) {
  if (f.shape() != m.shape())
    throw ShapeError("apply_attention: feature " + shape_str(f.shape()) +
                     " vs mask " + shape_str(m.shape()));
  if (mode == MaskMode::multiply) return mul(m, f);
  return add(f, mul(m, f));
}

// ---------------------------------------------------------------------------
// network
// ---------------------------------------------------------------------------

template <class S>
struct ActivationRecord {
  std::map<std::string, Tensor<S>> features;  // tap id -> detached snapshot
  std::vector<Tensor<S>> masks;               // detached, one per head
  Tensor<S> attention_input;                  // feature map before gating
  Tensor<S> attention_output;                 // feature map after gating
};

inline const std::set<std::string>& all_taps() {
  static const std::set<std::string> taps{"early", "middle", "later"};
  return taps;
}

template <class S>
class Network {
 public:
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const NetworkSpec& spec() const { return spec_; }

  Tensor<S>& add_param(const std::string& name, Tensor<S> t) {
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back({name, std::move(t)});
    return params_.back().second;
  }

  Tensor<S>& param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
    return params_[it->second].second;
  }
  const Tensor<S>& param(const std::string& name) const {
    return const_cast<Network*>(this)->param(name);
  }
  bool has_param(const std::string& name) const { return index_.count(name) > 0; }

  // Canonical order: construction order, stable across runs.
  const std::vector<std::pair<std::string, Tensor<S>>>& params() const { return params_; }
  std::vector<std::pair<std::string, Tensor<S>>>& params() { return params_; }

  std::size_t param_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  Tensor<S> forward(const Tensor<S>& batch) const {
    return forward(batch, {}, nullptr);
  }

  // Taps are side-effect free: logits are identical whether or not a record
  // is requested. Snapshots are deep copies detached from the tape.
  Tensor<S> forward(const Tensor<S>& batch, const std::set<std::string>& taps,
                    ActivationRecord<S>* rec) const {
    for (const std::string& t : taps)
      if (!all_taps().count(t)) throw UsageError("unknown tap id '" + t + "'");
    if (batch.ndim() != 4 || batch.dim(1) != spec_.input_channels)
      throw ShapeError("network: expected [N," + std::to_string(spec_.input_channels) +
                       ",H,W] batch, got " + shape_str(batch.shape()));

    const int stem_pad = (spec_.stem.kernel - 1) / 2;
    Tensor<S> x = relu(conv2d(batch, param("stem.w"), param("stem.b"), 1, stem_pad));
    for (int i = 0; i < 3; ++i) {
      x = mini_inception_block(x, block_params(i));
      if (spec_.attention_stage &&
          spec_.stage_index(*spec_.attention_stage) == i) {
        if (rec) rec->attention_input = x.detached();
        x = attention_forward(x, rec);
        if (rec) rec->attention_output = x.detached();
      }
      const char* tap = i == 0 ? "early" : i == 1 ? "middle" : "later";
      if (rec && taps.count(tap)) rec->features[tap] = x.detached();
      if (i < 2) x = pool2d(x, PoolKind::max, 2, 2);
    }
    return dense(global_avg_pool(x), param("head.w"), param("head.b"));
  }

  BlockParams<S> block_params(int i) const {
    const std::string p = "block" + std::to_string(i + 1) + ".";
    auto cp = [&](const std::string& n) {
      return ConvParams<S>{param(p + n + ".w"), param(p + n + ".b")};
    };
    return BlockParams<S>{cp("b1"), cp("b3r"), cp("b3"), cp("b5r"), cp("b5"), cp("bp")};
  }

  HourglassParams<S> hourglass_params() const {
    return HourglassParams<S>{{param("attn.body1.w"), param("attn.body1.b")},
                              {param("attn.body2.w"), param("attn.body2.b")},
                              spec_.attention.pool_depth};
  }

  MaskHeadParams<S> head_params(int k) const {
    const std::string p = "attn.head" + std::to_string(k) + ".";
    const MaskHeadSpec& hs = spec_.attention.heads[static_cast<std::size_t>(k)];
    return MaskHeadParams<S>{{param(p + "c1.w"), param(p + "c1.b")},
                             {param(p + "c2.w"), param(p + "c2.b")},
                             hs.downscale,
                             spec_.attention.spatial_only};
  }

 private:
  Tensor<S> attention_forward(const Tensor<S>& f, ActivationRecord<S>* rec) const {
    const int chans = f.dim(1);
    Tensor<S> s = hourglass_shared(f, hourglass_params());
    Tensor<S> out = f;
    for (int k = 0; k < static_cast<int>(spec_.attention.heads.size()); ++k) {
      Tensor<S> m = mask_head(s, head_params(k), chans);
      if (rec) rec->masks.push_back(m.detached());
      out = apply_attention(out, m, spec_.attention.mode);
    }
    return out;
  }

  NetworkSpec spec_;
  std::vector<std::pair<std::string, Tensor<S>>> params_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// deterministic construction
// ---------------------------------------------------------------------------

namespace detail {

// He fan-in initialization. Each parameter draws from its own named
// substream, so networks built from the same seed share every layer they
// have in common regardless of which other layers exist (this is what makes
// the attention-free twin of an attended network exactly comparable).
template <class S>
void init_conv(Network<S>& net, std::uint64_t seed, const std::string& name,
               int c_out, int c_in, int k_h, int k_w) {
  Rng rng(substream_seed(seed, name));
  const double stddev = std::sqrt(2.0 / (static_cast<double>(c_in) * k_h * k_w));
  Tensor<S> w(Shape{c_out, c_in, k_h, k_w});
  for (std::size_t i = 0; i < w.numel(); ++i)
    w[i] = static_cast<S>(rng.normal(0.0, stddev));
  net.add_param(name + ".w", std::move(w));
  net.add_param(name + ".b", Tensor<S>(Shape{c_out}));
}

template <class S>
void init_dense(Network<S>& net, std::uint64_t seed, const std::string& name,
                int in_dim, int out_dim) {
  Rng rng(substream_seed(seed, name));
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
  Tensor<S> w(Shape{in_dim, out_dim});
  for (std::size_t i = 0; i < w.numel(); ++i)
    w[i] = static_cast<S>(rng.normal(0.0, stddev));
  net.add_param(name + ".w", std::move(w));
  net.add_param(name + ".b", Tensor<S>(Shape{out_dim}));
}

}  // namespace detail

inline int resolved_head_hidden(const MaskHeadSpec& h, int chans) {
  return h.hidden > 0 ? h.hidden : std::max(4, chans / 2);
}

inline int resolved_body_channels(const AttentionModuleSpec& a, int chans) {
  return a.body_channels > 0 ? a.body_channels : chans;
}

template <class S>
Network<S> build_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network<S> net(spec);
  detail::init_conv(net, seed, "stem", spec.stem.out_channels, spec.input_channels,
                    spec.stem.kernel, spec.stem.kernel);
  int chans = spec.stem.out_channels;
  for (int i = 0; i < 3; ++i) {
    const BlockSpec& b = spec.blocks[static_cast<std::size_t>(i)];
    const std::string p = "block" + std::to_string(i + 1) + ".";
    detail::init_conv(net, seed, p + "b1", b.w1, chans, 1, 1);
    detail::init_conv(net, seed, p + "b3r", b.w3, chans, 1, 1);
    detail::init_conv(net, seed, p + "b3", b.w3, b.w3, 3, 3);
    detail::init_conv(net, seed, p + "b5r", b.w5pre, chans, 1, 1);
    detail::init_conv(net, seed, p + "b5", b.w5, b.w5pre, 3, 3);
    detail::init_conv(net, seed, p + "bp", b.wpool, chans, 1, 1);
    chans = b.out_channels();
  }
  if (spec.attention_stage) {
    const int fc = spec.block_out(spec.stage_index(*spec.attention_stage));
    const int bc = resolved_body_channels(spec.attention, fc);
    detail::init_conv(net, seed, "attn.body1", bc, fc, 3, 3);
    detail::init_conv(net, seed, "attn.body2", fc, bc, 3, 3);
    for (std::size_t k = 0; k < spec.attention.heads.size(); ++k) {
      const int hidden = resolved_head_hidden(spec.attention.heads[k], fc);
      const std::string p = "attn.head" + std::to_string(k) + ".";
      detail::init_conv(net, seed, p + "c1", hidden, fc, 1, 1);
      detail::init_conv(net, seed, p + "c2", fc, hidden, 1, 1);
    }
  }
  detail::init_dense(net, seed, "head", chans, spec.classes);
  return net;
}

}  // namespace attnviz
