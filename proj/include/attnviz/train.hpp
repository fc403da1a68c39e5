#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "attnviz/cifar10.hpp"
#include "attnviz/data.hpp"
#include "attnviz/network.hpp"

namespace attnviz {

struct TrainConfig {
  std::uint64_t seed = 1;
  int epochs = 5;
  int batch_size = 64;
  float lr = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  AugmentConfig augment;
  std::optional<int> subset_size;        // training subset (first N records)
  std::optional<StagePlacement> stage;   // attention placement, if any
  MaskMode mask_mode = MaskMode::multiply;
  bool record_timing = true;             // false writes wall_seconds as 0 so
                                         // run outputs are byte-reproducible

  void validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lr < 0) throw ConfigError("train: lr must be >= 0");
    if (momentum < 0 || momentum >= 1)
      throw ConfigError("train: momentum must be in [0,1)");
    if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
    if (augment.pad_crop < 0) throw ConfigError("train: pad_crop must be >= 0");
  }
};

struct MetricsRow {
  int epoch = 0;
  double train_loss = 0, train_acc = 0;
  double test_loss = 0, test_acc = 0;
  double wall_seconds = 0;
};

// v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v
void sgd_momentum_step(std::span<float> param, std::span<const float> grad,
                       std::span<float> velocity, float lr, float momentum,
                       float weight_decay);

// Momentum buffers, one per parameter, zero-initialized on first use.
class SgdMomentum {
 public:
  void step(Network<float>& net, float lr, float momentum, float weight_decay);

 private:
  std::vector<std::vector<float>> velocity_;
};

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
};

// Batched forward pass, no augmentation, never touches parameters. Argmax
// ties break toward the lowest class index. Optionally reports per-sample
// predictions for recount-style verification.
EvalResult evaluate(const Network<float>& net, const Cifar10Dataset& ds,
                    const Normalization& norm, int batch_size = 100,
                    std::vector<int>* predictions = nullptr);

// Full training loop: deterministic per-epoch shuffle and augmentation from
// one stream seeded by config.seed, SGD with momentum, one MetricsRow per
// epoch. Throws NanLossError (naming epoch and batch) if the loss leaves the
// finite range.
std::vector<MetricsRow> train(Network<float>& net, const Cifar10Dataset& train_set,
                              const Cifar10Dataset& test_set,
                              const TrainConfig& cfg, const Normalization& norm,
                              std::ostream* log = nullptr);

// CSV with header epoch,train_loss,train_acc,test_loss,test_acc,wall_seconds
// and %.6f numeric formatting.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::string metrics_csv_string(const std::vector<MetricsRow>& rows);

}  // namespace attnviz
