#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurowave/model.hpp"

namespace neurowave {

struct TrainConfig {
  int epochs{100};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
  std::uint64_t seed{0};
  // Best checkpoint is persisted here on every strict validation improvement;
  // empty keeps it in memory only.
  std::string checkpoint_path;
};

struct EpochStats {
  int epoch{0};  // 1-based
  double train_accuracy{0.0};
  double val_accuracy{0.0};
  double mean_loss{0.0};
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch{0};
  double best_val_accuracy{0.0};
};

// Rows are true labels, columns predicted, both in negative/neutral/positive
// order.
struct ConfusionMatrix {
  Eigen::Matrix<std::int64_t, 3, 3> counts =
      Eigen::Matrix<std::int64_t, 3, 3>::Zero();

  std::int64_t total() const { return counts.sum(); }
};

struct MetricsReport {
  double accuracy{0.0};
  std::array<double, 3> precision{};
  std::array<double, 3> recall{};
  std::array<double, 3> f1{};
  double macro_f1{0.0};
  ConfusionMatrix confusion;
};

struct CheckpointMeta {
  ModelConfig config;
  int epoch{0};
  double val_accuracy{0.0};
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

struct TrainResult {
  Checkpoint best;
  TrainHistory history;
};

// Adam with bias correction. Step state is owned here so the update rule can
// be tested on arbitrary parameter sets.
class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParams& params, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step(ModelParams& params, double learning_rate);
  int steps_taken() const { return t_; }

 private:
  std::vector<Eigen::ArrayXd> m_;
  std::vector<Eigen::ArrayXd> v_;
  double beta1_, beta2_, eps_;
  int t_{0};
};

// Per epoch: seeded shuffle, minibatch Adam steps (last short batch kept),
// then a validation pass. The parameter state with the strictly best
// validation accuracy so far is checkpointed; first epoch wins ties.
TrainResult train(const ModelConfig& model_config, ModelParams& params,
                  const std::vector<FeatureTensor>& train_set,
                  const std::vector<FeatureTensor>& val_set,
                  const TrainConfig& train_config);

// Eval-mode predictions (argmax, lowest index on ties) -> metrics.
MetricsReport evaluate(const ModelParams& params,
                       const std::vector<FeatureTensor>& dataset);

MetricsReport metrics_from_confusion(const ConfusionMatrix& matrix);

// Checkpoint container format ("ECKP"): magic, version u16, u32-length JSON
// metadata (model_config, epoch, val_accuracy), then per parameter: name
// length u8 + bytes, rank u8, dims u32 each, float64 little-endian payload.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// CSV columns: epoch, train_accuracy, val_accuracy, mean_loss.
void write_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace neurowave
