#include "attnviz/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace attnviz {

void sgd_momentum_step(std::span<float> param, std::span<const float> grad,
                       std::span<float> velocity, float lr, float momentum,
                       float weight_decay) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw ShapeError("sgd_momentum_step: mismatched buffer sizes");
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

void SgdMomentum::step(Network<float>& net, float lr, float momentum,
                       float weight_decay) {
  auto& params = net.params();
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      velocity_[i].assign(params[i].second.numel(), 0.0f);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    TensorF& p = params[i].second;
    sgd_momentum_step({p.data(), p.numel()},
                      {p.grad().data(), p.grad().size()},
                      {velocity_[i].data(), velocity_[i].size()}, lr, momentum,
                      weight_decay);
  }
}

namespace {

int argmax_row(const float* row, int k) {
  int best = 0;
  for (int i = 1; i < k; ++i)
    if (row[i] > row[best]) best = i;  // ties keep the lowest index
  return best;
}

}  // namespace

EvalResult evaluate(const Network<float>& net, const Cifar10Dataset& ds,
                    const Normalization& norm, int batch_size,
                    std::vector<int>* predictions) {
  EvalResult res;
  if (predictions) predictions->clear();
  if (ds.size() == 0) return res;
  double loss_acc = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(static_cast<std::size_t>(batch_size), ds.size() - start);
    TensorF x = preprocess(ds.image(start), n, norm);
    std::vector<int> labels(ds.labels.begin() + static_cast<std::ptrdiff_t>(start),
                            ds.labels.begin() + static_cast<std::ptrdiff_t>(start + n));
    TensorF logits = net.forward(x);
    TensorF loss = softmax_cross_entropy(logits, labels);
    loss_acc += static_cast<double>(loss[0]) * static_cast<double>(n);
    const int k = logits.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      const int pred = argmax_row(logits.data() + i * static_cast<std::size_t>(k), k);
      if (pred == labels[i]) ++correct;
      if (predictions) predictions->push_back(pred);
    }
  }
  res.loss = loss_acc / static_cast<double>(ds.size());
  res.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  return res;
}

std::vector<MetricsRow> train(Network<float>& net, const Cifar10Dataset& train_set,
                              const Cifar10Dataset& test_set,
                              const TrainConfig& cfg, const Normalization& norm,
                              std::ostream* log) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("train: empty training set");

  const Cifar10Dataset& full = train_set;
  std::size_t n_train = full.size();
  if (cfg.subset_size) n_train = std::min(n_train, static_cast<std::size_t>(*cfg.subset_size));

  Rng rng(substream_seed(cfg.seed, "train.stream"));
  SgdMomentum opt;
  std::vector<MetricsRow> rows;
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Fisher-Yates from the run stream
    for (std::size_t i = n_train; i > 1; --i) {
      const std::size_t j = rng.below(i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_acc = 0;
    std::size_t correct = 0;
    int batch_index = 0;
    std::vector<std::uint8_t> raw;
    std::vector<int> labels;
    for (std::size_t start = 0; start < n_train;
         start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t n = std::min(static_cast<std::size_t>(cfg.batch_size), n_train - start);
      raw.assign(n * Cifar10Dataset::kImageBytes, 0);
      labels.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = order[start + i];
        std::copy(full.image(src), full.image(src) + Cifar10Dataset::kImageBytes,
                  raw.data() + i * Cifar10Dataset::kImageBytes);
        labels[i] = full.labels[src];
      }
      std::vector<std::uint8_t> aug = augment(raw.data(), n, cfg.augment, rng);
      TensorF x = preprocess(aug.data(), n, norm);

      Tape<float> tape;
      Tape<float>::Scope scope(tape);
      TensorF logits = net.forward(x);
      TensorF loss = softmax_cross_entropy(logits, labels);
      const float loss_v = loss[0];
      if (!std::isfinite(loss_v))
        throw NanLossError(epoch, batch_index,
                           "train: non-finite loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch_index));
      const int k = logits.dim(1);
      for (std::size_t i = 0; i < n; ++i)
        if (argmax_row(logits.data() + i * static_cast<std::size_t>(k), k) == labels[i])
          ++correct;
      net.zero_grads();
      tape.backward(loss);
      opt.step(net, cfg.lr, cfg.momentum, cfg.weight_decay);
      loss_acc += static_cast<double>(loss_v) * static_cast<double>(n);
    }

    const EvalResult ev = evaluate(net, test_set, norm, cfg.batch_size);
    MetricsRow row;
    row.epoch = epoch;
    row.train_loss = loss_acc / static_cast<double>(n_train);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(n_train);
    row.test_loss = ev.loss;
    row.test_acc = ev.accuracy;
    row.wall_seconds =
        cfg.record_timing
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
            : 0.0;
    rows.push_back(row);
    if (log)
      (*log) << "epoch " << epoch << ": train_loss=" << row.train_loss
             << " train_acc=" << row.train_acc << " test_loss=" << row.test_loss
             << " test_acc=" << row.test_acc << "\n";
  }
  return rows;
}

std::string metrics_csv_string(const std::vector<MetricsRow>& rows) {
  std::string out = "epoch,train_loss,train_acc,test_loss,test_acc,wall_seconds\n";
  char buf[256];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch,
                  r.train_loss, r.train_acc, r.test_loss, r.test_acc,
                  r.wall_seconds);
    out += buf;
  }
  return out;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write metrics file '" + path + "'");
  out << metrics_csv_string(rows);
  if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace attnviz
