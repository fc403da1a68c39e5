#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "attnviz/checkpoint.hpp"
#include "attnviz/synthdata.hpp"
#include "attnviz/train.hpp"

using namespace attnviz;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "attnviz_train_tests";
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

NetworkSpec tiny_spec() {
  NetworkSpec spec;
  spec.stem = {6, 3};
  spec.blocks = {BlockSpec{2, 2, 1, 2, 2}, BlockSpec{3, 3, 2, 3, 3},
                 BlockSpec{4, 4, 2, 4, 4}};
  return spec;
}

std::vector<float> snapshot(const Network<float>& net) {
  std::vector<float> out;
  for (const auto& [name, t] : net.params())
    out.insert(out.end(), t.data(), t.data() + t.numel());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// sgd_momentum_step
// ---------------------------------------------------------------------------

TEST_CASE("sgd: zero momentum and decay reduce to plain gradient descent") {
  std::vector<float> p{1.0f, -2.0f}, g{0.5f, 0.25f}, v{0.0f, 0.0f};
  sgd_momentum_step(p, g, v, 0.1f, 0.0f, 0.0f);
  CHECK(p[0] == doctest::Approx(1.0f - 0.1f * 0.5f));
  CHECK(p[1] == doctest::Approx(-2.0f - 0.1f * 0.25f));
}

TEST_CASE("sgd: zero gradient, zero velocity, zero decay is a no-op") {
  std::vector<float> p{3.0f}, g{0.0f}, v{0.0f};
  sgd_momentum_step(p, g, v, 0.1f, 0.9f, 0.0f);
  CHECK(p[0] == 3.0f);
}

TEST_CASE("sgd: two steps on a 1-d quadratic match the hand recurrence") {
  // loss = 0.5 a p^2, grad = a p
  const float a = 2.0f, lr = 0.1f, mom = 0.9f, wd = 0.01f;
  float p = 1.0f, v = 0.0f;
  std::vector<float> pv{1.0f}, vv{0.0f};
  for (int step = 0; step < 2; ++step) {
    const float g = a * p;
    // hand recurrence
    v = mom * v + g + wd * p;
    p = p - lr * v;
    // implementation
    std::vector<float> gv{a * pv[0]};
    sgd_momentum_step(pv, gv, vv, lr, mom, wd);
  }
  CHECK(pv[0] == doctest::Approx(p));
  CHECK(vv[0] == doctest::Approx(v));
}

TEST_CASE("sgd: 100 steps on a convex quadratic decrease the loss monotonically") {
  const float a = 1.5f;
  // plain descent, and heavy-ball in its overdamped regime (lr*a <= (1-sqrt(m))^2)
  const struct { float lr, mom; } cases[] = {{0.1f, 0.0f}, {0.001f, 0.9f}};
  for (const auto& c : cases) {
    std::vector<float> p{4.0f}, v{0.0f};
    double prev = 0.5 * a * p[0] * p[0];
    for (int i = 0; i < 100; ++i) {
      std::vector<float> g{a * p[0]};
      sgd_momentum_step(p, g, v, c.lr, c.mom, 0.0f);
      const double loss = 0.5 * a * p[0] * p[0];
      CHECK(loss < prev);
      prev = loss;
    }
  }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

TEST_CASE("evaluate: constant logits on a balanced set give accuracy 0.1") {
  Network<float> net = build_network<float>(tiny_spec(), 1);
  for (auto& [name, t] : net.params())
    std::fill(t.vec().begin(), t.vec().end(), 0.0f);  // logits identically zero
  Cifar10Dataset ds = make_synthetic_cifar(21, 100, "test");
  const EvalResult r = evaluate(net, ds, default_normalization());
  CHECK(r.accuracy == doctest::Approx(0.1));
  CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-5));
}

TEST_CASE("evaluate: repeated calls are pure and identical") {
  Network<float> net = build_network<float>(tiny_spec(), 2);
  Cifar10Dataset ds = make_synthetic_cifar(22, 64, "test");
  const std::vector<float> before = snapshot(net);
  const EvalResult a = evaluate(net, ds, default_normalization());
  const EvalResult b = evaluate(net, ds, default_normalization());
  CHECK(a.loss == b.loss);
  CHECK(a.accuracy == b.accuracy);
  CHECK(snapshot(net) == before);
}

TEST_CASE("evaluate: accuracy equals a brute-force recount of predictions") {
  Network<float> net = build_network<float>(tiny_spec(), 3);
  Cifar10Dataset ds = make_synthetic_cifar(23, 80, "test");
  std::vector<int> preds;
  const EvalResult r = evaluate(net, ds, default_normalization(), 32, &preds);
  REQUIRE(preds.size() == ds.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == ds.labels[i]) ++correct;
  CHECK(r.accuracy ==
        doctest::Approx(static_cast<double>(correct) / static_cast<double>(ds.size())));
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TEST_CASE("train: zero epochs yield no rows and untouched parameters") {
  Network<float> net = build_network<float>(tiny_spec(), 4);
  Cifar10Dataset tr = make_synthetic_cifar(24, 32);
  Cifar10Dataset te = make_synthetic_cifar(25, 16, "test");
  const std::vector<float> before = snapshot(net);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto rows = train(net, tr, te, cfg, default_normalization());
  CHECK(rows.empty());
  CHECK(snapshot(net) == before);
}

TEST_CASE("train: lr = 0 keeps the train loss constant across epochs") {
  Network<float> net = build_network<float>(tiny_spec(), 5);
  Cifar10Dataset tr = make_synthetic_cifar(26, 64);
  Cifar10Dataset te = make_synthetic_cifar(27, 32, "test");
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 0.0f;
  cfg.augment = {false, 0};  // keep per-epoch batches identical
  auto rows = train(net, tr, te, cfg, default_normalization());
  REQUIRE(rows.size() == 3);
  CHECK(std::abs(rows[1].train_loss - rows[0].train_loss) <= 1e-6);
  CHECK(std::abs(rows[2].train_loss - rows[0].train_loss) <= 1e-6);
}

TEST_CASE("train: identical config and seed give identical metrics histories") {
  Cifar10Dataset tr = make_synthetic_cifar(28, 128);
  Cifar10Dataset te = make_synthetic_cifar(29, 64, "test");
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.record_timing = false;
  Network<float> a = build_network<float>(tiny_spec(), 6);
  Network<float> b = build_network<float>(tiny_spec(), 6);
  auto ra = train(a, tr, te, cfg, default_normalization());
  auto rb = train(b, tr, te, cfg, default_normalization());
  CHECK(metrics_csv_string(ra) == metrics_csv_string(rb));
  CHECK(snapshot(a) == snapshot(b));
}

TEST_CASE("train: a non-finite loss aborts naming epoch and batch") {
  Network<float> net = build_network<float>(tiny_spec(), 7);
  // poison a logit bias: a NaN in earlier layers would be masked by ReLU
  net.param("head.b")[0] = std::numeric_limits<float>::quiet_NaN();
  Cifar10Dataset tr = make_synthetic_cifar(30, 32);
  Cifar10Dataset te = make_synthetic_cifar(31, 16, "test");
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(net, tr, te, cfg, default_normalization());
    FAIL("expected NanLossError");
  } catch (const NanLossError& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.batch() == 0);
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("train: loss decreases on a small learnable subset") {
  Network<float> net = build_network<float>(tiny_spec(), 8);
  Cifar10Dataset tr = make_synthetic_cifar(7, 320);
  Cifar10Dataset te = make_synthetic_cifar(8, 80, "test");
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.lr = 0.02f;
  auto rows = train(net, tr, te, cfg, default_normalization());
  REQUIRE(rows.size() == 3);
  CHECK(rows.back().train_loss < rows.front().train_loss);
}

// ---------------------------------------------------------------------------
// metrics csv
// ---------------------------------------------------------------------------

TEST_CASE("metrics csv: exact header and %.6f formatting") {
  MetricsRow r;
  r.epoch = 1;
  r.train_loss = 2.3;
  r.train_acc = 0.125;
  r.test_loss = 2.25;
  r.test_acc = 0.1;
  r.wall_seconds = 0;
  CHECK(metrics_csv_string({r}) ==
        "epoch,train_loss,train_acc,test_loss,test_acc,wall_seconds\n"
        "1,2.300000,0.125000,2.250000,0.100000,0.000000\n");
  CHECK(metrics_csv_string({}) ==
        "epoch,train_loss,train_acc,test_loss,test_acc,wall_seconds\n");
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint: save/load round-trips parameters bit-exactly") {
  Network<float> a = build_network<float>(tiny_spec(), 9);
  const fs::path p = temp_dir() / "ckpt.bin";
  save_checkpoint(p.string(), a);
  Network<float> b = build_network<float>(tiny_spec(), 10);
  CHECK(snapshot(a) != snapshot(b));
  load_checkpoint(p.string(), b);
  CHECK(snapshot(a) == snapshot(b));
}

TEST_CASE("checkpoint: corrupted magic bytes are rejected") {
  Network<float> net = build_network<float>(tiny_spec(), 11);
  const fs::path p = temp_dir() / "bad_magic.bin";
  save_checkpoint(p.string(), net);
  {
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(p.string(), net), CheckpointError);
}

TEST_CASE("checkpoint: shape mismatch names the first offending parameter") {
  Network<float> a = build_network<float>(tiny_spec(), 12);
  const fs::path p = temp_dir() / "mismatch.bin";
  save_checkpoint(p.string(), a);
  NetworkSpec other = tiny_spec();
  other.stem.out_channels = 8;
  Network<float> b = build_network<float>(other, 12);
  try {
    load_checkpoint(p.string(), b);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("stem.w") != std::string::npos);
  }
}
