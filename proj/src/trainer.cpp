#include "neurowave/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "neurowave/rng.hpp"

namespace neurowave {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const ModelParams& params, double beta1,
                             double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params.entries.size());
  v_.reserve(params.entries.size());
  for (const auto& [name, t] : params.entries) {
    m_.push_back(Eigen::ArrayXd::Zero(t->size()));
    v_.push_back(Eigen::ArrayXd::Zero(t->size()));
  }
}

void AdamOptimizer::step(ModelParams& params, double learning_rate) {
  if (m_.size() != params.entries.size())
    throw std::runtime_error("optimizer state does not match parameter set");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    auto& tensor = params.entries[i].second;
    if (!tensor->requires_grad) continue;
    const Eigen::ArrayXd& g = tensor->grad;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.square();
    tensor->value -=
        learning_rate * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

MetricsReport metrics_from_confusion(const ConfusionMatrix& matrix) {
  if ((matrix.counts.array() < 0).any())
    throw std::runtime_error("confusion matrix entries must be non-negative");
  const std::int64_t total = matrix.total();
  if (total == 0) throw std::runtime_error("all-zero confusion matrix");

  MetricsReport report;
  report.confusion = matrix;
  report.accuracy =
      static_cast<double>(matrix.counts.trace()) / static_cast<double>(total);

  double f1_sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    const auto tp = static_cast<double>(matrix.counts(c, c));
    const auto col = static_cast<double>(matrix.counts.col(c).sum());
    const auto row = static_cast<double>(matrix.counts.row(c).sum());
    // 0/0 is defined as 0 so degenerate classes keep macro-F1 meaningful.
    const double precision = col > 0.0 ? tp / col : 0.0;
    const double recall = row > 0.0 ? tp / row : 0.0;
    const double denom = precision + recall;
    const double f1 = denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
    report.precision[c] = precision;
    report.recall[c] = recall;
    report.f1[c] = f1;
    f1_sum += f1;
  }
  report.macro_f1 = f1_sum / 3.0;
  return report;
}

namespace {

int argmax_lowest(const Eigen::RowVectorXd& row) {
  int best = 0;
  for (int c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return best;
}

}  // namespace

MetricsReport evaluate(const ModelParams& params,
                       const std::vector<FeatureTensor>& dataset) {
  if (dataset.empty()) throw std::runtime_error("empty dataset");
  const int batch_size = params.config.batch_size;

  ConfusionMatrix confusion;
  for (std::size_t at = 0; at < dataset.size(); at += batch_size) {
    std::vector<const FeatureTensor*> chunk;
    for (std::size_t i = at; i < std::min(dataset.size(), at + batch_size); ++i)
      chunk.push_back(&dataset[i]);
    const Batch batch = make_batch(chunk);
    const Eigen::MatrixXd logits = forward_logits(params, batch);
    for (int r = 0; r < logits.rows(); ++r)
      confusion.counts(batch.labels[r], argmax_lowest(logits.row(r))) += 1;
  }
  return metrics_from_confusion(confusion);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainResult train(const ModelConfig& model_config, ModelParams& params,
                  const std::vector<FeatureTensor>& train_set,
                  const std::vector<FeatureTensor>& val_set,
                  const TrainConfig& train_config) {
  if (train_set.empty() || val_set.empty())
    throw std::runtime_error("empty dataset");
  if (train_config.epochs < 1)
    throw std::runtime_error("epochs must be at least 1");
  model_config.validate_structure();
  if (!(params.config == model_config))
    throw std::runtime_error("parameter set was built for another config");

  const int batch_size = model_config.batch_size;
  AdamOptimizer adam(params, train_config.beta1, train_config.beta2,
                     train_config.eps);

  TrainResult result;
  result.history.best_val_accuracy = -1.0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(train_config.seed ^ 0x5A5A5A5Aull,
                                static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::int64_t correct = 0;
    int batch_index = 0;
    for (std::size_t at = 0; at < order.size(); at += batch_size, ++batch_index) {
      std::vector<const FeatureTensor*> chunk;
      for (std::size_t i = at; i < std::min(order.size(), at + batch_size); ++i)
        chunk.push_back(&train_set[order[i]]);
      const Batch batch = make_batch(chunk);

      Rng dropout_rng(derive_seed(train_config.seed ^ 0xD0D0D0D0ull,
                                  static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(batch_index)));
      autograd::Tape tape;
      params.zero_grads();
      const autograd::Tensor logits =
          forward(tape, params, batch, true, &dropout_rng);
      const autograd::Tensor loss =
          autograd::softmax_cross_entropy(tape, logits, batch.labels);
      const double loss_value = loss->value[0];
      if (!std::isfinite(loss_value)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch "
            << batch_index;
        throw std::runtime_error(msg.str());
      }
      tape.backward(loss);
      adam.step(params, model_config.learning_rate);

      loss_sum += loss_value * static_cast<double>(batch.size());
      const auto lm = logits->mat();
      for (int r = 0; r < lm.rows(); ++r)
        if (argmax_lowest(lm.row(r)) == batch.labels[r]) ++correct;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(train_set.size());
    stats.train_accuracy =
        static_cast<double>(correct) / static_cast<double>(train_set.size());
    stats.val_accuracy = evaluate(params, val_set).accuracy;
    result.history.epochs.push_back(stats);

    if (stats.val_accuracy > result.history.best_val_accuracy) {
      result.history.best_val_accuracy = stats.val_accuracy;
      result.history.best_epoch = epoch;
      result.best.params = params.clone();
      result.best.meta = {model_config, epoch, stats.val_accuracy};
      if (!train_config.checkpoint_path.empty())
        save_checkpoint(result.best, train_config.checkpoint_path);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint IO ("ECKP", version 1)
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'E', 'C', 'K', 'P'};

json config_to_json(const ModelConfig& c) {
  return {{"cnn_out_channels", c.cnn_out_channels},
          {"kernel_size", c.kernel_size},
          {"n_transformer_layers", c.n_transformer_layers},
          {"ffn_hidden", c.ffn_hidden},
          {"n_heads", c.n_heads},
          {"embed_dim", c.embed_dim},
          {"batch_size", c.batch_size},
          {"dropout", c.dropout},
          {"learning_rate", c.learning_rate}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.cnn_out_channels = j.at("cnn_out_channels").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.n_transformer_layers = j.at("n_transformer_layers").get<int>();
  c.ffn_hidden = j.at("ffn_hidden").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  return c;
}

void append_le(std::string& buf, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const json meta = {{"model_config", config_to_json(checkpoint.meta.config)},
                     {"epoch", checkpoint.meta.epoch},
                     {"val_accuracy", checkpoint.meta.val_accuracy}};
  const std::string meta_str = meta.dump();

  std::string buf;
  buf.append(kCheckpointMagic, 4);
  append_le(buf, 1, 2);  // version
  append_le(buf, meta_str.size(), 4);
  buf.append(meta_str);
  for (const auto& [name, t] : checkpoint.params.entries) {
    if (name.size() > 0xFF)
      throw std::runtime_error("parameter name longer than 255 bytes");
    buf.push_back(static_cast<char>(name.size()));
    buf.append(name);
    buf.push_back(static_cast<char>(t->rank()));
    for (int dim : t->shape)
      append_le(buf, static_cast<std::uint64_t>(dim), 4);
    for (Eigen::Index i = 0; i < t->size(); ++i)
      append_le(buf, std::bit_cast<std::uint64_t>(t->value[i]), 8);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("I/O failure writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);

  auto read_exact = [&](char* dst, std::size_t count) {
    in.read(dst, static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
      throw std::runtime_error("truncated checkpoint: " + path);
  };
  auto read_le = [&](int bytes) {
    unsigned char b[8];
    read_exact(reinterpret_cast<char*>(b), static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  };

  char magic[4];
  read_exact(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const auto version = read_le(2);
  if (version != 1)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));

  const auto meta_len = read_le(4);
  std::string meta_str(meta_len, '\0');
  read_exact(meta_str.data(), meta_len);
  json meta;
  try {
    meta = json::parse(meta_str);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint metadata: ") +
                             e.what());
  }

  Checkpoint checkpoint;
  checkpoint.meta.config = config_from_json(meta.at("model_config"));
  checkpoint.meta.epoch = meta.at("epoch").get<int>();
  checkpoint.meta.val_accuracy = meta.at("val_accuracy").get<double>();

  // The stored config determines the expected shape table.
  ModelParams expected = init_params(checkpoint.meta.config, 0);
  checkpoint.params.config = checkpoint.meta.config;
  for (const auto& [name, proto] : expected.entries) {
    const auto name_len = read_le(1);
    std::string stored_name(name_len, '\0');
    read_exact(stored_name.data(), name_len);
    const auto rank = static_cast<int>(read_le(1));
    std::vector<int> dims(rank);
    for (auto& d : dims) d = static_cast<int>(read_le(4));
    if (stored_name != name || dims != proto->shape)
      throw std::runtime_error(
          "checkpoint shape table inconsistent with stored config");
    auto t = autograd::make_tensor(dims, true);
    for (Eigen::Index i = 0; i < t->size(); ++i)
      t->value[i] = std::bit_cast<double>(read_le(8));
    if (!t->value.isFinite().all())
      throw std::runtime_error("non-finite parameter in checkpoint");
    checkpoint.params.entries.emplace_back(stored_name, std::move(t));
  }
  return checkpoint;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write history: " + path);
  out << "epoch,train_accuracy,val_accuracy,mean_loss\n";
  out.precision(17);
  for (const auto& e : history.epochs)
    out << e.epoch << ',' << e.train_accuracy << ',' << e.val_accuracy << ','
        << e.mean_loss << '\n';
}

}  // namespace neurowave
