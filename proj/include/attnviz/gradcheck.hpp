#pragma once

#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "attnviz/network.hpp"
#include "attnviz/rng.hpp"

// Finite-difference gradient verification. Runs in double precision only:
// central differences are not trustworthy in float.

namespace attnviz {

using TamperFn = std::function<void(std::vector<std::vector<double>>&)>;

// Compares the tape's gradients of f (a scalar-valued tensor function) against
// central differences (f(x+eps) - f(x-eps)) / (2 eps), coordinate by
// coordinate, over every input that tracks gradients. Returns the maximum
// relative error  |a - n| / max(|a|, |n|, 1e-8).
//
// `tamper` is a fault-injection hook for harness tests: it may corrupt the
// analytic gradients before comparison, so the reporting path can be checked
// against a gradient that is genuinely wrong.
inline double grad_check(const std::function<TensorD(std::vector<TensorD>&)>& f,
                         std::vector<TensorD> inputs, double eps = 1e-4,
                         const TamperFn& tamper = {}) {
  std::vector<std::vector<double>> analytic(inputs.size());
  {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    for (auto& t : inputs) t.zero_grad();
    TensorD loss = f(inputs);
    tape.backward(loss);
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (inputs[i].requires_grad()) analytic[i] = inputs[i].grad();
  }
  if (tamper) tamper(analytic);

  double max_rel = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    TensorD& t = inputs[i];
    for (std::size_t j = 0; j < t.numel(); ++j) {
      const double orig = t[j];
      t[j] = orig + eps;
      const double fp = f(inputs)[0];
      t[j] = orig - eps;
      const double fm = f(inputs)[0];
      t[j] = orig;
      const double num = (fp - fm) / (2.0 * eps);
      const double a = analytic[i][j];
      const double rel = std::abs(a - num) /
                         std::max({std::abs(a), std::abs(num), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// instance generators
// ---------------------------------------------------------------------------

namespace gcheck {

inline TensorD rand_tensor(Rng& rng, Shape shape, double lo = -1.0,
                           double hi = 1.0, bool grad = true) {
  TensorD t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  if (grad) t.set_requires_grad(true);
  return t;
}

// Push values away from 0 so ReLU finite differences never straddle the kink.
inline void avoid_zero(TensorD& t, double margin) {
  for (std::size_t i = 0; i < t.numel(); ++i)
    if (std::abs(t[i]) < margin) t[i] = t[i] < 0 ? t[i] - margin : t[i] + margin;
}

// Values evenly spaced in (-1,1) in a random order: every pairwise gap is
// at least 2/numel, which keeps max-pool argmaxes stable under +-eps probes.
inline TensorD well_separated(Rng& rng, Shape shape, bool grad = true) {
  TensorD t(std::move(shape));
  const std::size_t n = t.numel();
  std::vector<double> keys(n);
  for (auto& k : keys) k = rng.uniform();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  for (std::size_t rank = 0; rank < n; ++rank)
    t[order[rank]] = -1.0 + (rank + 0.5) * (2.0 / static_cast<double>(n));
  if (grad) t.set_requires_grad(true);
  return t;
}

// True when every pooling window's top value beats the runner-up by at least
// `margin` (makes the window argmax stable under finite differencing).
inline bool pool_windows_separated(const TensorD& x, int k, int stride, int pad,
                                   double margin) {
  const int n_batch = x.dim(0), chans = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  const int out_h = (in_h + 2 * pad - k) / stride + 1;
  const int out_w = (in_w + 2 * pad - k) / stride + 1;
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < chans; ++c)
      for (int oh = 0; oh < out_h; ++oh)
        for (int ow = 0; ow < out_w; ++ow) {
          double best = 0, second = 0;
          int count = 0;
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int h = oh * stride - pad + kh, w = ow * stride - pad + kw;
              if (h < 0 || h >= in_h || w < 0 || w >= in_w) continue;
              const double v = x[idx4(chans, in_h, in_w, n, c, h, w)];
              if (count == 0 || v > best) {
                second = count == 0 ? v : best;
                best = v;
              } else if (count == 1 || v > second) {
                second = v;
              }
              ++count;
            }
          if (count >= 2 && best - second < margin) return false;
        }
  return true;
}

inline double min_abs(const TensorD& t) {
  double m = std::abs(t[0]);
  for (std::size_t i = 1; i < t.numel(); ++i) m = std::min(m, std::abs(t[i]));
  return m;
}

// Scalar loss: sum(y * r) with fixed random weights r (no gradient on r),
// so vector-valued ops reduce to one differentiable scalar.
inline TensorD weighted(const TensorD& y, const TensorD& r) { return sum(mul(y, r)); }

}  // namespace gcheck

// ---------------------------------------------------------------------------
// the op suite
// ---------------------------------------------------------------------------

struct OpCheckResult {
  std::string op;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradSuiteOptions {
  int trials = 100;
  double eps = 1e-4;
  double tolerance = 1e-6;
  std::uint64_t seed = 2024;
  std::string fault_op;  // test hook: corrupt this op's analytic gradients
};

namespace gcheck {

// One randomized trial per op. Returns nullopt when the drawn instance is
// unsuitable for finite differencing (near-tie in a pool window, activation
// too close to a ReLU kink); the harness then redraws deterministically.
inline std::optional<double> trial_for_op(const std::string& op, Rng& rng,
                                          int trial, double eps,
                                          const TamperFn& tamper) {
  using namespace gcheck;

  if (op == "conv2d") {
    struct Cfg { int kh, kw, stride, pad, dil; };
    static const Cfg cfgs[] = {{3, 3, 1, 1, 1}, {1, 1, 1, 0, 1}, {3, 3, 2, 1, 1},
                               {3, 3, 1, 2, 2}, {2, 2, 1, 0, 1}, {3, 3, 2, 2, 2}};
    const Cfg c = cfgs[trial % 6];
    TensorD x = rand_tensor(rng, {2, 2, 6, 7});
    TensorD w = rand_tensor(rng, {3, 2, c.kh, c.kw});
    TensorD b = rand_tensor(rng, {3});
    TensorD probe = conv2d(x, w, b, c.stride, c.pad, c.dil);
    TensorD r = rand_tensor(rng, probe.shape(), -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) {
          return weighted(conv2d(in[0], in[1], in[2], c.stride, c.pad, c.dil), r);
        },
        {x, w, b}, eps, tamper);
  }

  if (op == "pool_max" || op == "pool_avg") {
    struct Cfg { int k, stride, pad, hw; };
    static const Cfg cfgs[] = {{2, 2, 0, 6}, {3, 3, 0, 6}, {3, 1, 1, 5}, {2, 1, 0, 5}};
    const Cfg c = cfgs[trial % 4];
    const PoolKind kind = op == "pool_max" ? PoolKind::max : PoolKind::avg;
    TensorD x = kind == PoolKind::max ? well_separated(rng, {2, 2, c.hw, c.hw})
                                      : rand_tensor(rng, {2, 2, c.hw, c.hw});
    TensorD probe = pool2d(x, kind, c.k, c.stride, c.pad);
    TensorD r = rand_tensor(rng, probe.shape(), -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) {
          return weighted(pool2d(in[0], kind, c.k, c.stride, c.pad), r);
        },
        {x}, eps, tamper);
  }

  if (op == "upsample_nearest" || op == "upsample_bilinear") {
    const UpsampleMode mode = op == "upsample_nearest" ? UpsampleMode::nearest
                                                       : UpsampleMode::bilinear;
    const int factor = 1 + trial % 3;
    TensorD x = rand_tensor(rng, {1, 2, 3, 4});
    TensorD probe = upsample(x, factor, mode);
    TensorD r = rand_tensor(rng, probe.shape(), -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) { return weighted(upsample(in[0], factor, mode), r); },
        {x}, eps, tamper);
  }

  if (op == "relu") {
    TensorD x = rand_tensor(rng, {3, 5});
    avoid_zero(x, 1e-2);
    TensorD r = rand_tensor(rng, x.shape(), -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) { return weighted(relu(in[0]), r); }, {x},
        eps, tamper);
  }

  if (op == "sigmoid") {
    TensorD x = rand_tensor(rng, {3, 5}, -3, 3);
    TensorD r = rand_tensor(rng, x.shape(), -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) { return weighted(sigmoid(in[0]), r); },
        {x}, eps, tamper);
  }

  if (op == "add" || op == "mul") {
    const EwKind kind = op == "add" ? EwKind::add : EwKind::mul;
    TensorD a = rand_tensor(rng, {2, 3, 4, 4});
    TensorD b;
    switch (trial % 3) {
      case 0: b = rand_tensor(rng, {2, 3, 4, 4}); break;        // equal shapes
      case 1: b = rand_tensor(rng, {1}); break;                 // scalar
      default: b = rand_tensor(rng, {3, 4, 4}); break;          // CHW over batch
    }
    TensorD r = rand_tensor(rng, a.shape(), -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) {
          return weighted(elementwise(kind, in[0], in[1]), r);
        },
        {a, b}, eps, tamper);
  }

  if (op == "dense") {
    TensorD x = rand_tensor(rng, {3, 4});
    TensorD w = rand_tensor(rng, {4, 5});
    TensorD b = rand_tensor(rng, {5});
    TensorD r = rand_tensor(rng, {3, 5}, -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) { return weighted(dense(in[0], in[1], in[2]), r); },
        {x, w, b}, eps, tamper);
  }

  if (op == "global_avg_pool") {
    TensorD x = rand_tensor(rng, {2, 3, 4, 4});
    TensorD r = rand_tensor(rng, {2, 3}, -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) { return weighted(global_avg_pool(in[0]), r); },
        {x}, eps, tamper);
  }

  if (op == "concat_channels") {
    TensorD a = rand_tensor(rng, {2, 1, 3, 3});
    TensorD b = rand_tensor(rng, {2, 2, 3, 3});
    TensorD c = rand_tensor(rng, {2, 3, 3, 3});
    TensorD r = rand_tensor(rng, {2, 6, 3, 3}, -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) {
          return weighted(concat_channels<double>({in[0], in[1], in[2]}), r);
        },
        {a, b, c}, eps, tamper);
  }

  if (op == "slice_channels") {
    TensorD x = rand_tensor(rng, {2, 5, 3, 3});
    TensorD r = rand_tensor(rng, {2, 3, 3, 3}, -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) { return weighted(slice_channels(in[0], 1, 4), r); },
        {x}, eps, tamper);
  }

  if (op == "reshape") {
    TensorD x = rand_tensor(rng, {2, 3, 4});
    TensorD r = rand_tensor(rng, {4, 6}, -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) { return weighted(reshape(in[0], {4, 6}), r); },
        {x}, eps, tamper);
  }

  if (op == "channel_mean") {
    TensorD x = rand_tensor(rng, {2, 4, 3, 3});
    TensorD r = rand_tensor(rng, {2, 1, 3, 3}, -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) { return weighted(channel_mean(in[0]), r); },
        {x}, eps, tamper);
  }

  if (op == "broadcast_channels") {
    TensorD x = rand_tensor(rng, {2, 1, 3, 3});
    TensorD r = rand_tensor(rng, {2, 4, 3, 3}, -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) { return weighted(broadcast_channels(in[0], 4), r); },
        {x}, eps, tamper);
  }

  if (op == "sum") {
    TensorD x = rand_tensor(rng, {7});
    return grad_check([&](std::vector<TensorD>& in) { return sum(in[0]); }, {x},
                      eps, tamper);
  }

  if (op == "softmax_cross_entropy") {
    TensorD logits = rand_tensor(rng, {4, 6}, -2, 2);
    std::vector<int> labels(4);
    for (auto& l : labels) l = static_cast<int>(rng.below(6));
    return grad_check(
        [&](std::vector<TensorD>& in) { return softmax_cross_entropy(in[0], labels); },
        {logits}, eps, tamper);
  }

  if (op == "hourglass") {
    HourglassParams<double> p;
    p.pool_depth = 2;
    TensorD x = well_separated(rng, {1, 2, 8, 8});
    p.body1 = {rand_tensor(rng, {2, 2, 3, 3}), rand_tensor(rng, {2})};
    p.body2 = {rand_tensor(rng, {2, 2, 3, 3}), rand_tensor(rng, {2})};
    // FD validity: both ReLU pre-activations clear of the kink
    TensorD t = x;
    for (int i = 0; i < 2; ++i) t = pool2d(t, PoolKind::max, 2, 2);
    TensorD pre1 = conv2d(t, p.body1.w, p.body1.b, 1, 1);
    if (min_abs(pre1) < 5e-3) return std::nullopt;
    TensorD pre2 = conv2d(upsample(relu(pre1), 4, UpsampleMode::nearest),
                          p.body2.w, p.body2.b, 1, 1);
    if (min_abs(pre2) < 5e-3) return std::nullopt;
    TensorD r = rand_tensor(rng, x.shape(), -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) {
          HourglassParams<double> q{{in[1], in[2]}, {in[3], in[4]}, 2};
          return weighted(hourglass_shared(in[0], q), r);
        },
        {x, p.body1.w, p.body1.b, p.body2.w, p.body2.b}, eps, tamper);
  }

  if (op == "mask_head") {
    const int variant = trial % 3;  // plain, downscaled, spatial-only
    MaskHeadParams<double> p;
    p.downscale = variant == 1 ? 1 : 0;
    p.spatial_only = variant == 2;
    TensorD s = p.downscale ? well_separated(rng, {1, 3, 4, 4})
                            : rand_tensor(rng, {1, 3, 4, 4});
    p.c1 = {rand_tensor(rng, {2, 3, 1, 1}), rand_tensor(rng, {2})};
    p.c2 = {rand_tensor(rng, {3, 2, 1, 1}), rand_tensor(rng, {3})};
    TensorD probe_in = s;
    for (int i = 0; i < p.downscale; ++i) probe_in = pool2d(probe_in, PoolKind::max, 2, 2);
    TensorD pre1 = conv2d(probe_in, p.c1.w, p.c1.b);
    if (min_abs(pre1) < 5e-3) return std::nullopt;
    TensorD probe = mask_head(s, p, 3);
    TensorD r = rand_tensor(rng, probe.shape(), -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) {
          MaskHeadParams<double> q{{in[1], in[2]}, {in[3], in[4]},
                                   p.downscale, p.spatial_only};
          return weighted(mask_head(in[0], q, 3), r);
        },
        {s, p.c1.w, p.c1.b, p.c2.w, p.c2.b}, eps, tamper);
  }

  if (op == "apply_attention") {
    const MaskMode mode = trial % 2 ? MaskMode::residual : MaskMode::multiply;
    TensorD f = rand_tensor(rng, {2, 3, 4, 4});
    TensorD m = rand_tensor(rng, {2, 3, 4, 4}, 0.05, 0.95);
    TensorD r = rand_tensor(rng, f.shape(), -1, 1, false);
    return grad_check(
        [&](std::vector<TensorD>& in) {
          return weighted(apply_attention(in[0], in[1], mode), r);
        },
        {f, m}, eps, tamper);
  }

  throw UsageError("gradcheck: unknown op '" + op + "'");
}

}  // namespace gcheck

inline const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops{
      "conv2d",          "pool_max",        "pool_avg",
      "upsample_nearest", "upsample_bilinear", "relu",
      "sigmoid",         "add",             "mul",
      "dense",           "global_avg_pool", "concat_channels",
      "slice_channels",  "reshape",         "channel_mean",
      "broadcast_channels", "sum",          "softmax_cross_entropy",
      "hourglass",       "mask_head",       "apply_attention"};
  return ops;
}

// Runs `trials` randomized instances per registered differentiable op.
// Instances rejected as FD-unfriendly are redrawn deterministically.
inline std::vector<OpCheckResult> run_gradcheck_suite(const GradSuiteOptions& opt = {}) {
  std::vector<OpCheckResult> results;
  for (const std::string& op : gradcheck_ops()) {
    TamperFn tamper;
    if (op == opt.fault_op)
      tamper = [](std::vector<std::vector<double>>& grads) {
        for (auto& g : grads)
          for (auto& v : g) v *= 1.01;
      };
    OpCheckResult res{op, 0.0, true};
    for (int trial = 0; trial < opt.trials; ++trial) {
      std::optional<double> rel;
      for (int attempt = 0; attempt < 64 && !rel; ++attempt) {
        Rng rng(substream_seed(opt.seed, op + "#" + std::to_string(trial) +
                                             "." + std::to_string(attempt)));
        rel = gcheck::trial_for_op(op, rng, trial, opt.eps, tamper);
      }
      if (!rel) throw UsageError("gradcheck: no FD-friendly instance for " + op);
      res.max_rel_err = std::max(res.max_rel_err, *rel);
    }
    res.pass = res.max_rel_err <= opt.tolerance;
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace attnviz
