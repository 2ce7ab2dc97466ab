#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurowave/autograd.hpp"
#include "neurowave/dsp.hpp"

namespace neurowave {

// The nine tunable hyper-parameters. Search-space membership is enforced at
// the tuning/CLI boundary via validate_search_values(); the engine itself
// only needs structural validity, so tests can run miniature configurations.
struct ModelConfig {
  int cnn_out_channels{8};
  int kernel_size{5};
  int n_transformer_layers{4};
  int ffn_hidden{128};
  int n_heads{4};
  int embed_dim{64};
  int batch_size{8};
  double dropout{0.1};
  double learning_rate{5e-4};

  void validate_structure() const;      // positive sizes, divisibility, odd K
  void validate_search_values() const;  // membership in the tuning grid
  bool operator==(const ModelConfig&) const = default;
};

// Named parameter tensors in definition order; the order fixes both the
// initialization draw sequence and the checkpoint layout.
struct ModelParams {
  ModelConfig config;
  std::vector<std::pair<std::string, autograd::Tensor>> entries;

  autograd::Tensor find(const std::string& name) const;
  std::int64_t parameter_count() const;
  void zero_grads();
  ModelParams clone() const;  // deep copy of values (gradients reset)
};

// Glorot-uniform weights, zero biases and shifts, unit gains; deterministic
// in the seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// A padded minibatch: per-sample 25 x t_max feature matrices (window's
// 5 x 5 band-by-channel grid flattened to 25 rows), per-sample validity
// masks, and class labels. Padded positions are zero-filled.
struct Batch {
  std::vector<Eigen::MatrixXd> features;
  std::vector<std::vector<std::uint8_t>> mask;
  std::vector<int> labels;
  int t_max{0};

  int size() const { return static_cast<int>(features.size()); }
  void validate() const;
};

Batch make_batch(const std::vector<const FeatureTensor*>& samples);
Batch make_batch(const std::vector<FeatureTensor>& samples);

// Fixed sinusoidal positional encoding, length x dim.
Eigen::MatrixXd positional_encoding(int length, int dim);

// CNN front end over time, pre-norm transformer encoder with key-padding
// masks, masked mean pooling, linear head. Returns B x 3 logits on the tape.
autograd::Tensor forward(autograd::Tape& tape, const ModelParams& params,
                         const Batch& batch, bool train, Rng* dropout_rng);

// Eval-mode logits without gradient tracking.
Eigen::MatrixXd forward_logits(const ModelParams& params, const Batch& batch);

}  // namespace neurowave
