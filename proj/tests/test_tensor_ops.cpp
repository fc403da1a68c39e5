#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "attnviz/gradcheck.hpp"
#include "attnviz/ops.hpp"
#include "attnviz/rng.hpp"
#include "oracles.hpp"

using namespace attnviz;

namespace {

TensorF randf(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  TensorF t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

std::vector<double> to_double(const TensorF& t) {
  return std::vector<double>(t.data(), t.data() + t.numel());
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

TEST_CASE("conv2d: 1x1 identity kernel is the identity map, bit-exact") {
  Rng rng(7);
  TensorF x = randf(rng, {2, 1, 3, 3});
  TensorF w = TensorF::from_data({1, 1, 1, 1}, {1.0f});
  TensorF b(Shape{1});
  TensorF y = conv2d(x, w, b);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d: all-zero weights and bias give all-zero output") {
  Rng rng(8);
  TensorF x = randf(rng, {1, 2, 4, 4});
  TensorF w(Shape{3, 2, 3, 3});
  TensorF b(Shape{3});
  TensorF y = conv2d(x, w, b, 1, 1);
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0f);
}

TEST_CASE("conv2d: 3x3 input, 2x2 difference kernel (frozen from the loop oracle)") {
  TensorF x = TensorF::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  TensorF w = TensorF::from_data({1, 1, 2, 2}, {1, 0, 0, -1});
  TensorF b(Shape{1});
  TensorF y = conv2d(x, w, b);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  // x[i][j] - x[i+1][j+1] over the four window positions
  const float expected[4] = {-4, -4, -4, -4};
  for (int i = 0; i < 4; ++i) CHECK(y[i] == expected[i]);

  int oh, ow;
  auto ref = oracle::conv2d(to_double(x), 1, 1, 3, 3, to_double(w), 1, 2, 2,
                            to_double(b), 1, 0, 1, oh, ow);
  for (int i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(ref[i]));
}

TEST_CASE("conv2d: random instances match the loop oracle (stride/pad/dilation)") {
  Rng rng(21);
  struct Cfg { int kh, kw, stride, pad, dil; };
  const Cfg cfgs[] = {{3, 3, 1, 1, 1}, {3, 3, 2, 0, 1}, {3, 3, 1, 2, 2},
                      {1, 1, 1, 0, 1}, {2, 3, 2, 1, 1}, {3, 3, 2, 2, 2}};
  for (const Cfg& c : cfgs) {
    TensorF x = randf(rng, {2, 3, 7, 8});
    TensorF w = randf(rng, {4, 3, c.kh, c.kw});
    TensorF b = randf(rng, {4});
    TensorF y = conv2d(x, w, b, c.stride, c.pad, c.dil);
    int oh, ow;
    auto ref = oracle::conv2d(to_double(x), 2, 3, 7, 8, to_double(w), 4, c.kh,
                              c.kw, to_double(b), c.stride, c.pad, c.dil, oh, ow);
    REQUIRE(y.shape() == Shape{2, 4, oh, ow});
    for (std::size_t i = 0; i < y.numel(); ++i)
      CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-4));
  }
}

TEST_CASE("conv2d: channel mismatch names both shapes") {
  TensorF x(Shape{1, 3, 4, 4});
  TensorF w(Shape{2, 4, 3, 3});
  TensorF b(Shape{2});
  try {
    conv2d(x, w, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,3,4,4]") != std::string::npos);
    CHECK(msg.find("[2,4,3,3]") != std::string::npos);
  }
}

TEST_CASE("conv2d: kernel span beyond padded input is rejected") {
  TensorF x(Shape{1, 1, 3, 3});
  TensorF w(Shape{1, 1, 3, 3});
  TensorF b(Shape{1});
  CHECK_THROWS_AS(conv2d(x, w, b, 1, 0, 2), ShapeError);  // span 5 > 3
}

// ---------------------------------------------------------------------------
// pool2d
// ---------------------------------------------------------------------------

TEST_CASE("pool2d: 2x2 trivial max and avg") {
  TensorF x = TensorF::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(pool2d(x, PoolKind::max, 2, 2)[0] == 4.0f);
  CHECK(pool2d(x, PoolKind::avg, 2, 2)[0] == 2.5f);
}

TEST_CASE("pool2d: 4x4 ramp, max k=2 stride 2 (frozen from window scan)") {
  std::vector<float> ramp(16);
  for (int i = 0; i < 16; ++i) ramp[static_cast<std::size_t>(i)] = static_cast<float>(i + 1);
  TensorF x = TensorF::from_data({1, 1, 4, 4}, ramp);
  TensorF y = pool2d(x, PoolKind::max, 2, 2);
  const float expected[4] = {6, 8, 14, 16};
  REQUIRE(y.numel() == 4);
  for (int i = 0; i < 4; ++i) CHECK(y[i] == expected[i]);
}

TEST_CASE("pool2d: random instances match the window-scan oracle") {
  Rng rng(31);
  struct Cfg { bool is_max; int k, stride, pad; };
  const Cfg cfgs[] = {{true, 2, 2, 0}, {true, 3, 1, 1}, {true, 3, 2, 0},
                      {false, 2, 2, 0}, {false, 3, 1, 1}};
  for (const Cfg& c : cfgs) {
    TensorF x = randf(rng, {2, 2, 6, 6});
    TensorF y = pool2d(x, c.is_max ? PoolKind::max : PoolKind::avg, c.k, c.stride, c.pad);
    int oh, ow;
    auto ref = oracle::pool2d(to_double(x), 2, 2, 6, 6, c.is_max, c.k, c.stride,
                              c.pad, oh, ow);
    REQUIRE(y.shape() == Shape{2, 2, oh, ow});
    for (std::size_t i = 0; i < y.numel(); ++i)
      CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("pool2d: max backward routes to the first argmax on ties") {
  TensorF x = TensorF::from_data({1, 1, 2, 2}, {5, 5, 1, 2});
  x.set_requires_grad(true);
  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  TensorF loss = sum(pool2d(x, PoolKind::max, 2, 2));
  tape.backward(loss);
  CHECK(x.grad()[0] == 1.0f);  // row-major first occurrence
  CHECK(x.grad()[1] == 0.0f);
  CHECK(x.grad()[2] == 0.0f);
  CHECK(x.grad()[3] == 0.0f);
}

TEST_CASE("pool2d: avg backward distributes uniformly") {
  TensorF x = TensorF::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  x.set_requires_grad(true);
  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  TensorF loss = sum(pool2d(x, PoolKind::avg, 2, 2));
  tape.backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(x.grad()[static_cast<std::size_t>(i)] == 0.25f);
}

TEST_CASE("pool2d: kernel larger than input is rejected") {
  TensorF x(Shape{1, 1, 2, 2});
  CHECK_THROWS_AS(pool2d(x, PoolKind::max, 3, 1), ShapeError);
}

// ---------------------------------------------------------------------------
// upsample
// ---------------------------------------------------------------------------

TEST_CASE("upsample: factor 1 is the identity (both modes)") {
  Rng rng(41);
  TensorF x = randf(rng, {1, 2, 3, 3});
  TensorF a = upsample(x, 1, UpsampleMode::nearest);
  TensorF b = upsample(x, 1, UpsampleMode::bilinear);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(a[i] == x[i]);
    CHECK(b[i] == x[i]);
  }
}

TEST_CASE("upsample: 1x1 nearest factor 2 replicates the value") {
  TensorF x = TensorF::from_data({1, 1, 1, 1}, {3.25f});
  TensorF y = upsample(x, 2, UpsampleMode::nearest);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(y[i] == 3.25f);
}

TEST_CASE("upsample: bilinear 2x2 -> 4x4 (frozen from the pointwise oracle)") {
  TensorF x = TensorF::from_data({1, 1, 2, 2}, {0, 1, 1, 0});
  TensorF y = upsample(x, 2, UpsampleMode::bilinear);
  const float expected[16] = {0,    0.25f,  0.75f,  1,     //
                              0.25f, 0.375f, 0.625f, 0.75f,  //
                              0.75f, 0.625f, 0.375f, 0.25f,  //
                              1,    0.75f,  0.25f,  0};
  REQUIRE(y.numel() == 16);
  for (int i = 0; i < 16; ++i)
    CHECK(y[i] == doctest::Approx(expected[i]).epsilon(1e-6));

  auto ref = oracle::upsample_bilinear({0, 1, 1, 0}, 2, 2, 2);
  for (int i = 0; i < 16; ++i) CHECK(y[i] == doctest::Approx(ref[i]));
}

TEST_CASE("upsample: random bilinear matches the pointwise oracle") {
  Rng rng(43);
  TensorF x = randf(rng, {1, 1, 3, 5});
  TensorF y = upsample(x, 3, UpsampleMode::bilinear);
  auto ref = oracle::upsample_bilinear(to_double(x), 3, 5, 3);
  for (std::size_t i = 0; i < y.numel(); ++i)
    CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-5));
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

TEST_CASE("activate: pinned values") {
  TensorF x = TensorF::from_data({4}, {0.0f, -3.0f, 3.0f, 1.0f});
  TensorF s = sigmoid(x);
  TensorF r = relu(x);
  CHECK(s[0] == 0.5f);
  CHECK(r[1] == 0.0f);
  CHECK(r[2] == 3.0f);
  CHECK(s[3] == doctest::Approx(0.7310585786300049).epsilon(1e-6));
}

TEST_CASE("activate: sigmoid is stable and bounded at extreme inputs") {
  TensorF x = TensorF::from_data({4}, {-1000.0f, 1000.0f, -88.0f, 88.0f});
  TensorF s = sigmoid(x);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::isfinite(s[i]));
    CHECK(s[i] >= 0.0f);
    CHECK(s[i] <= 1.0f);
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

TEST_CASE("elementwise: identity mask and zero addend leave the tensor unchanged") {
  Rng rng(51);
  TensorF f = randf(rng, {2, 3, 4, 4});
  TensorF ones(f.shape(), 1.0f);
  TensorF zeros(f.shape(), 0.0f);
  TensorF m = mul(f, ones);
  TensorF a = add(f, zeros);
  for (std::size_t i = 0; i < f.numel(); ++i) {
    CHECK(m[i] == f[i]);
    CHECK(a[i] == f[i]);
  }
}

TEST_CASE("elementwise: scalar and CHW broadcasts") {
  Rng rng(52);
  TensorF a = randf(rng, {2, 3, 2, 2});
  TensorF s = TensorF::from_data({1}, {2.5f});
  TensorF y = mul(a, s);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(y[i] == a[i] * 2.5f);

  TensorF chw = randf(rng, {3, 2, 2});
  TensorF z = add(a, chw);
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(z[i] == a[i] + chw[i % chw.numel()]);
}

TEST_CASE("elementwise: mul gradients match finite differences") {
  Rng rng(53);
  TensorD a = gcheck::rand_tensor(rng, {2, 2});
  TensorD b = gcheck::rand_tensor(rng, {2, 2});
  double err = grad_check(
      [](std::vector<TensorD>& in) { return sum(mul(in[0], in[1])); }, {a, b});
  CHECK(err <= 1e-6);
}

TEST_CASE("elementwise: incompatible shapes are rejected") {
  TensorF a(Shape{2, 3});
  TensorF b(Shape{3, 2});
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

TEST_CASE("dense: identity weight, zero bias") {
  Rng rng(61);
  TensorF x = randf(rng, {3, 4});
  TensorF w(Shape{4, 4});
  for (int i = 0; i < 4; ++i) w[static_cast<std::size_t>(i) * 4 + i] = 1.0f;
  TensorF b(Shape{4});
  TensorF y = dense(x, w, b);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("dense: zero input replicates the bias per row") {
  TensorF x(Shape{2, 3});
  TensorF w(Shape{3, 4});
  TensorF b = TensorF::from_data({4}, {1, 2, 3, 4});
  TensorF y = dense(x, w, b);
  for (int n = 0; n < 2; ++n)
    for (int k = 0; k < 4; ++k)
      CHECK(y[static_cast<std::size_t>(n) * 4 + k] == b[static_cast<std::size_t>(k)]);
}

TEST_CASE("dense: random product matches the naive matmul oracle") {
  Rng rng(62);
  TensorF x = randf(rng, {2, 3});
  TensorF w = randf(rng, {3, 2});
  TensorF b(Shape{2});
  TensorF y = dense(x, w, b);
  auto ref = oracle::matmul(to_double(x), 2, 3, to_double(w), 2);
  for (std::size_t i = 0; i < y.numel(); ++i)
    CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-5));
}

TEST_CASE("dense: inner dimension mismatch is rejected") {
  TensorF x(Shape{2, 3});
  TensorF w(Shape{4, 2});
  TensorF b(Shape{2});
  CHECK_THROWS_AS(dense(x, w, b), ShapeError);
}

// ---------------------------------------------------------------------------
// global_avg_pool / concat / slice
// ---------------------------------------------------------------------------

TEST_CASE("global_avg_pool: constants and the 2x2 example") {
  TensorF c(Shape{1, 2, 3, 3}, 4.5f);
  TensorF y = global_avg_pool(c);
  CHECK(y[0] == 4.5f);
  CHECK(y[1] == 4.5f);

  TensorF x = TensorF::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(global_avg_pool(x)[0] == 2.5f);
}

TEST_CASE("global_avg_pool: random map matches the summation oracle") {
  Rng rng(71);
  TensorF x = randf(rng, {2, 3, 5, 4});
  TensorF y = global_avg_pool(x);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      std::vector<double> plane;
      for (int i = 0; i < 20; ++i)
        plane.push_back(x[(static_cast<std::size_t>(n) * 3 + c) * 20 + i]);
      CHECK(y[static_cast<std::size_t>(n) * 3 + c] ==
            doctest::Approx(oracle::mean(plane)).epsilon(1e-5));
    }
}

TEST_CASE("concat_channels: single input unchanged, two inputs keep order") {
  Rng rng(81);
  TensorF a = randf(rng, {1, 1, 2, 2});
  TensorF b = randf(rng, {1, 1, 2, 2});
  TensorF y1 = concat_channels<float>({a});
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(y1[i] == a[i]);

  TensorF y2 = concat_channels<float>({a, b});
  REQUIRE(y2.shape() == Shape{1, 2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    CHECK(y2[static_cast<std::size_t>(i)] == a[static_cast<std::size_t>(i)]);
    CHECK(y2[static_cast<std::size_t>(4 + i)] == b[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("concat_channels then slice_channels round-trips bit-exactly") {
  Rng rng(82);
  TensorF a = randf(rng, {2, 2, 3, 3});
  TensorF b = randf(rng, {2, 3, 3, 3});
  TensorF cat = concat_channels<float>({a, b});
  TensorF sa = slice_channels(cat, 0, 2);
  TensorF sb = slice_channels(cat, 2, 5);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(sa[i] == a[i]);
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(sb[i] == b[i]);
}

TEST_CASE("concat_channels: spatial mismatch is rejected") {
  TensorF a(Shape{1, 1, 2, 2});
  TensorF b(Shape{1, 1, 3, 3});
  CHECK_THROWS_AS(concat_channels<float>({a, b}), ShapeError);
}

// ---------------------------------------------------------------------------
// softmax cross-entropy
// ---------------------------------------------------------------------------

TEST_CASE("softmax_cross_entropy: uniform logits give ln K") {
  TensorF logits(Shape{3, 10}, 0.7f);
  TensorF loss = softmax_cross_entropy(logits, {0, 5, 9});
  CHECK(loss[0] == doctest::Approx(std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("softmax_cross_entropy: +50 on the true class saturates to ~0") {
  TensorF logits(Shape{2, 4});
  logits[1] = 50.0f;
  logits[4 + 2] = 50.0f;
  TensorF loss = softmax_cross_entropy(logits, {1, 2});
  CHECK(loss[0] <= 1e-6f);
}

TEST_CASE("softmax_cross_entropy: gradient matches finite differences") {
  Rng rng(91);
  TensorD logits = gcheck::rand_tensor(rng, {2, 3}, -2, 2);
  double err = grad_check(
      [](std::vector<TensorD>& in) {
        return softmax_cross_entropy(in[0], {2, 0});
      },
      {logits});
  CHECK(err <= 1e-6);
}

TEST_CASE("softmax_cross_entropy: invariant to a constant shift per row") {
  Rng rng(92);
  TensorF logits = randf(rng, {4, 6}, -2, 2);
  std::vector<int> labels{1, 0, 5, 3};
  TensorF shifted = logits.detached();
  for (std::size_t i = 0; i < shifted.numel(); ++i) shifted[i] += 7.5f;
  TensorF l1 = softmax_cross_entropy(logits, labels);
  TensorF l2 = softmax_cross_entropy(shifted, labels);
  CHECK(std::abs(l1[0] - l2[0]) <= 1e-6f);
}

TEST_CASE("softmax_cross_entropy: out-of-range label is rejected") {
  TensorF logits(Shape{1, 3});
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}), UsageError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1}), UsageError);
}

// ---------------------------------------------------------------------------
// backward / tape
// ---------------------------------------------------------------------------

TEST_CASE("backward: d(sum(x*x))/dx = 2x and d(sum(x))/dx = 1") {
  Rng rng(101);
  TensorF x = randf(rng, {3, 3});
  x.set_requires_grad(true);
  {
    Tape<float> tape;
    Tape<float>::Scope scope(tape);
    TensorF loss = sum(mul(x, x));
    tape.backward(loss);
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(x.grad()[i] == doctest::Approx(2.0f * x[i]));
  }
  x.zero_grad();
  {
    Tape<float> tape;
    Tape<float>::Scope scope(tape);
    TensorF loss = sum(x);
    tape.backward(loss);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 1.0f);
  }
}

TEST_CASE("backward: gradients accumulate additively for reused tensors") {
  TensorF x = TensorF::from_data({2}, {1.0f, 2.0f});
  x.set_requires_grad(true);
  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  TensorF loss = sum(add(x, x));
  tape.backward(loss);
  CHECK(x.grad()[0] == 2.0f);
  CHECK(x.grad()[1] == 2.0f);
}

TEST_CASE("backward: non-scalar loss is a usage error") {
  TensorF x(Shape{2, 2});
  x.set_requires_grad(true);
  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  TensorF y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), UsageError);
}

TEST_CASE("backward: requires an active tape") {
  TensorF x(Shape{1});
  x.set_requires_grad(true);
  CHECK_THROWS_AS(backward(x), UsageError);
}

TEST_CASE("tape: recorded input ids precede their consumer (topological)") {
  Rng rng(102);
  TensorF x = randf(rng, {1, 2, 4, 4});
  x.set_requires_grad(true);
  TensorF w = randf(rng, {2, 2, 3, 3});
  w.set_requires_grad(true);
  TensorF b = randf(rng, {2});
  b.set_requires_grad(true);
  Tape<float> tape;
  {
    Tape<float>::Scope scope(tape);
    TensorF y = relu(conv2d(x, w, b, 1, 1));
    TensorF loss = sum(mul(y, y));
    for (std::size_t i = 0; i < tape.size(); ++i)
      for (std::int64_t in : tape.node(i).inputs) {
        CHECK(in < tape.node(i).output);
        CHECK(tape.node(i).output == static_cast<std::int64_t>(i));
      }
    tape.backward(loss);
  }
  CHECK(tape.size() == 0);  // cleared after backward
}

TEST_CASE("tape: clears after backward and leaves gradients in place") {
  TensorF x = TensorF::from_data({1}, {3.0f});
  x.set_requires_grad(true);
  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  TensorF loss = mul(x, x);
  tape.backward(loss);
  CHECK(x.grad()[0] == 6.0f);
  CHECK(tape.size() == 0);
}

// ---------------------------------------------------------------------------
// grad_check oracle behavior
// ---------------------------------------------------------------------------

TEST_CASE("grad_check: exact for linear functions") {
  Rng rng(111);
  TensorD x = gcheck::rand_tensor(rng, {5});
  double err = grad_check([](std::vector<TensorD>& in) { return sum(in[0]); }, {x});
  CHECK(err <= 1e-10);
}

TEST_CASE("grad_check: sigmoid composition within 1e-6") {
  Rng rng(112);
  TensorD x = gcheck::rand_tensor(rng, {3, 4}, -2, 2);
  TensorD r = gcheck::rand_tensor(rng, {3, 4}, -1, 1, false);
  double err = grad_check(
      [&](std::vector<TensorD>& in) {
        return sum(mul(sigmoid(sigmoid(in[0])), r));
      },
      {x});
  CHECK(err <= 1e-6);
}

TEST_CASE("grad_check: conv2d + max pool chain within 1e-6") {
  for (int attempt = 0; attempt < 32; ++attempt) {
    Rng rng(substream_seed(113, "chain." + std::to_string(attempt)));
    TensorD x = gcheck::rand_tensor(rng, {1, 2, 6, 6});
    TensorD w = gcheck::rand_tensor(rng, {2, 2, 3, 3});
    TensorD b = gcheck::rand_tensor(rng, {2});
    TensorD conv = conv2d(x, w, b, 1, 1);
    if (!gcheck::pool_windows_separated(conv, 2, 2, 0, 1e-2)) continue;
    TensorD r = gcheck::rand_tensor(rng, {1, 2, 3, 3}, -1, 1, false);
    double err = grad_check(
        [&](std::vector<TensorD>& in) {
          return sum(mul(pool2d(conv2d(in[0], in[1], in[2], 1, 1), PoolKind::max, 2, 2), r));
        },
        {x, w, b});
    CHECK(err <= 1e-6);
    return;
  }
  FAIL("no FD-friendly conv+pool instance found");
}

// ---------------------------------------------------------------------------
// forward finiteness
// ---------------------------------------------------------------------------

TEST_CASE("forward ops produce finite outputs on finite inputs") {
  Rng rng(121);
  for (int trial = 0; trial < 20; ++trial) {
    TensorF x = randf(rng, {2, 3, 8, 8}, -100, 100);
    TensorF w = randf(rng, {4, 3, 3, 3}, -10, 10);
    TensorF b = randf(rng, {4}, -10, 10);
    TensorF y = relu(conv2d(x, w, b, 1, 1));
    TensorF p = pool2d(y, PoolKind::max, 2, 2);
    TensorF u = upsample(p, 2, UpsampleMode::bilinear);
    TensorF s = sigmoid(u);
    TensorF g = global_avg_pool(s);
    for (std::size_t i = 0; i < g.numel(); ++i) CHECK(std::isfinite(g[i]));
    for (std::size_t i = 0; i < s.numel(); ++i) CHECK(std::isfinite(s[i]));
  }
}

// ---------------------------------------------------------------------------
// rng
// ---------------------------------------------------------------------------

TEST_CASE("rng: same seed gives the same sequence, different seeds differ") {
  Rng a(42), b(42), c(43);
  bool all_equal = true;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next(), vb = b.next(), vc = c.next();
    CHECK(va == vb);
    if (va != vc) all_equal = false;
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("rng: uniform in [0,1), below(n) in [0,n)") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(9) < 9);
  }
}

TEST_CASE("rng: normal consumes exactly two draws") {
  Rng a(5), b(5);
  a.normal();
  b.next();
  b.next();
  CHECK(a.next() == b.next());
}
