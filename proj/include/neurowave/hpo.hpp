#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neurowave/trainer.hpp"

namespace neurowave {

// The nine tunable value sets. Field order matches ModelConfig; enumeration
// varies the last field fastest, so indices are stable across runs.
struct SearchSpace {
  std::vector<int> cnn_out_channels{8, 16};
  std::vector<int> kernel_size{3, 5};
  std::vector<int> n_transformer_layers{2, 4};
  std::vector<int> ffn_hidden{128, 256};
  std::vector<int> n_heads{4, 8};
  std::vector<int> embed_dim{32, 64};
  std::vector<int> batch_size{8, 16, 32};
  std::vector<double> dropout{0.1, 0.3};
  std::vector<double> learning_rate{1e-3, 5e-4};

  std::size_t cardinality() const;
};

std::vector<ModelConfig> enumerate_space(const SearchSpace& space);

struct SampledConfig {
  std::size_t index;  // position in the enumeration; stable identifier
  ModelConfig config;
};

// Uniform sampling without replacement via a seeded shuffle of the
// enumeration.
std::vector<SampledConfig> sample_configs(const SearchSpace& space,
                                          std::size_t n, std::uint64_t seed);

struct HpoResult {
  std::size_t sample_index{0};
  ModelConfig config;
  double val_accuracy{0.0};
  double seconds{0.0};
  bool ok{false};
  std::string error;
};

struct HpoOptions {
  std::size_t n_samples{100};
  int proxy_epochs{15};
  std::uint64_t seed{0};
};

struct SearchOutcome {
  ModelConfig best;
  std::size_t best_index{0};
  std::vector<HpoResult> results;
};

// Proxy-trains each sampled configuration and selects the best recorded
// validation accuracy; ties break toward the lowest sample index. A failed
// trial is recorded and skipped, not fatal.
SearchOutcome run_search(const SearchSpace& space, const HpoOptions& options,
                         const std::vector<FeatureTensor>& train_set,
                         const std::vector<FeatureTensor>& val_set);

// Selection rule factored out so it can be exercised on synthetic results.
std::size_t select_best(const std::vector<HpoResult>& results);

// CSV columns: sample_index, the nine configuration fields, val_accuracy,
// seconds.
void write_results_csv(const std::vector<HpoResult>& results,
                       const std::string& path);

}  // namespace neurowave
