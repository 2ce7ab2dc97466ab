#include "neurowave/hpo.hpp"

#include <chrono>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "neurowave/rng.hpp"

namespace neurowave {

std::size_t SearchSpace::cardinality() const {
  return cnn_out_channels.size() * kernel_size.size() *
         n_transformer_layers.size() * ffn_hidden.size() * n_heads.size() *
         embed_dim.size() * batch_size.size() * dropout.size() *
         learning_rate.size();
}

std::vector<ModelConfig> enumerate_space(const SearchSpace& space) {
  std::vector<ModelConfig> configs;
  configs.reserve(space.cardinality());
  for (int cnn : space.cnn_out_channels)
    for (int kernel : space.kernel_size)
      for (int layers : space.n_transformer_layers)
        for (int ffn : space.ffn_hidden)
          for (int heads : space.n_heads)
            for (int embed : space.embed_dim)
              for (int batch : space.batch_size)
                for (double drop : space.dropout)
                  for (double lr : space.learning_rate) {
                    ModelConfig c;
                    c.cnn_out_channels = cnn;
                    c.kernel_size = kernel;
                    c.n_transformer_layers = layers;
                    c.ffn_hidden = ffn;
                    c.n_heads = heads;
                    c.embed_dim = embed;
                    c.batch_size = batch;
                    c.dropout = drop;
                    c.learning_rate = lr;
                    configs.push_back(c);
                  }
  return configs;
}

std::vector<SampledConfig> sample_configs(const SearchSpace& space,
                                          std::size_t n, std::uint64_t seed) {
  const std::vector<ModelConfig> all = enumerate_space(space);
  if (n > all.size())
    throw std::runtime_error("sample count exceeds search space size");

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<SampledConfig> sampled;
  sampled.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    sampled.push_back({order[i], all[order[i]]});
  return sampled;
}

std::size_t select_best(const std::vector<HpoResult>& results) {
  bool found = false;
  std::size_t best_at = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.ok) continue;
    if (!found || r.val_accuracy > results[best_at].val_accuracy ||
        (r.val_accuracy == results[best_at].val_accuracy &&
         r.sample_index < results[best_at].sample_index)) {
      best_at = i;
      found = true;
    }
  }
  if (!found) throw std::runtime_error("every search trial failed");
  return best_at;
}

SearchOutcome run_search(const SearchSpace& space, const HpoOptions& options,
                         const std::vector<FeatureTensor>& train_set,
                         const std::vector<FeatureTensor>& val_set) {
  if (options.proxy_epochs < 1)
    throw std::runtime_error("proxy epochs must be at least 1");

  const auto sampled =
      sample_configs(space, options.n_samples, options.seed);

  SearchOutcome outcome;
  outcome.results.reserve(sampled.size());
  for (const auto& [index, config] : sampled) {
    HpoResult result;
    result.sample_index = index;
    result.config = config;
    const auto start = std::chrono::steady_clock::now();
    try {
      const std::uint64_t trial_seed = derive_seed(options.seed, index);
      ModelParams params = init_params(config, trial_seed);
      TrainConfig tc;
      tc.epochs = options.proxy_epochs;
      tc.seed = trial_seed;
      const TrainResult tr = train(config, params, train_set, val_set, tc);
      result.val_accuracy = tr.history.best_val_accuracy;
      result.ok = true;
    } catch (const std::exception& e) {
      result.ok = false;
      result.error = e.what();
      result.val_accuracy = 0.0;
    }
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    outcome.results.push_back(std::move(result));
  }

  const std::size_t best_at = select_best(outcome.results);
  outcome.best = outcome.results[best_at].config;
  outcome.best_index = outcome.results[best_at].sample_index;
  return outcome;
}

void write_results_csv(const std::vector<HpoResult>& results,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write results: " + path);
  out << "sample_index,cnn_out_channels,kernel_size,n_transformer_layers,"
         "ffn_hidden,n_heads,embed_dim,batch_size,dropout,learning_rate,"
         "val_accuracy,seconds\n";
  out.precision(17);
  for (const auto& r : results) {
    const auto& c = r.config;
    out << r.sample_index << ',' << c.cnn_out_channels << ','
        << c.kernel_size << ',' << c.n_transformer_layers << ','
        << c.ffn_hidden << ',' << c.n_heads << ',' << c.embed_dim << ','
        << c.batch_size << ',' << c.dropout << ',' << c.learning_rate << ','
        << r.val_accuracy << ',' << r.seconds << '\n';
  }
}

}  // namespace neurowave
