#include "neurowave/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace neurowave {

using autograd::Tape;
using autograd::Tensor;

void ModelConfig::validate_structure() const {
  if (cnn_out_channels < 1 || kernel_size < 1 || n_transformer_layers < 1 ||
      ffn_hidden < 1 || n_heads < 1 || embed_dim < 1 || batch_size < 1)
    throw std::runtime_error("model config: sizes must be positive");
  if (kernel_size % 2 == 0)
    throw std::runtime_error("model config: kernel size must be odd");
  if (embed_dim % n_heads != 0)
    throw std::runtime_error(
        "model config: embedding dim not divisible by head count");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::runtime_error("model config: dropout must be in [0, 1)");
  if (!(learning_rate > 0.0))
    throw std::runtime_error("model config: learning rate must be positive");
}

namespace {

template <typename T>
bool one_of(T v, std::initializer_list<T> set) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

}  // namespace

void ModelConfig::validate_search_values() const {
  validate_structure();
  const bool ok = one_of(cnn_out_channels, {8, 16}) &&
                  one_of(kernel_size, {3, 5}) &&
                  one_of(n_transformer_layers, {2, 4}) &&
                  one_of(ffn_hidden, {128, 256}) && one_of(n_heads, {4, 8}) &&
                  one_of(embed_dim, {32, 64}) &&
                  one_of(batch_size, {8, 16, 32}) &&
                  one_of(dropout, {0.1, 0.3}) &&
                  one_of(learning_rate, {1e-3, 5e-4});
  if (!ok)
    throw std::runtime_error(
        "model config: value outside the tuning search space");
}

Tensor ModelParams::find(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  throw std::runtime_error("unknown parameter: " + name);
}

std::int64_t ModelParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : entries) n += t->size();
  return n;
}

void ModelParams::zero_grads() {
  for (auto& [name, t] : entries) t->zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  copy.config = config;
  copy.entries.reserve(entries.size());
  for (const auto& [name, t] : entries) {
    auto nt = autograd::make_tensor(t->shape, t->requires_grad);
    nt->value = t->value;
    copy.entries.emplace_back(name, std::move(nt));
  }
  return copy;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace {

Tensor glorot(Rng& rng, std::vector<int> shape, double fan_in,
              double fan_out) {
  auto t = autograd::make_tensor(std::move(shape), true);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < t->size(); ++i)
    t->value[i] = rng.uniform(-limit, limit);
  return t;
}

Tensor zeros(std::vector<int> shape) {
  return autograd::make_tensor(std::move(shape), true);
}

Tensor ones(std::vector<int> shape) {
  auto t = autograd::make_tensor(std::move(shape), true);
  t->value.setOnes();
  return t;
}

constexpr int kInputDim = 25;  // 5 bands x 5 channels per window

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate_structure();
  Rng rng(seed);

  ModelParams params;
  params.config = config;
  auto put = [&](const std::string& name, Tensor t) {
    params.entries.emplace_back(name, std::move(t));
  };

  const int e = config.embed_dim;
  const int c = config.cnn_out_channels;
  const int k = config.kernel_size;
  const int f = config.ffn_hidden;

  put("conv.weight", glorot(rng, {c, kInputDim, k}, kInputDim * k, c * k));
  put("conv.bias", zeros({c}));
  put("input_proj.weight", glorot(rng, {e, c}, c, e));
  put("input_proj.bias", zeros({e}));

  for (int layer = 0; layer < config.n_transformer_layers; ++layer) {
    const std::string base = "layers." + std::to_string(layer) + ".";
    put(base + "ln1.gain", ones({e}));
    put(base + "ln1.shift", zeros({e}));
    for (const char* proj : {"wq", "wk", "wv", "wo"})
      put(base + "attn." + proj + ".weight", glorot(rng, {e, e}, e, e));
    put(base + "ln2.gain", ones({e}));
    put(base + "ln2.shift", zeros({e}));
    put(base + "ffn.w1.weight", glorot(rng, {f, e}, e, f));
    put(base + "ffn.w1.bias", zeros({f}));
    put(base + "ffn.w2.weight", glorot(rng, {e, f}, f, e));
    put(base + "ffn.w2.bias", zeros({e}));
  }

  put("final_ln.gain", ones({e}));
  put("final_ln.shift", zeros({e}));
  put("head.weight", glorot(rng, {kNumClasses, e}, e, kNumClasses));
  put("head.bias", zeros({kNumClasses}));
  return params;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

void Batch::validate() const {
  if (features.empty()) throw std::runtime_error("empty batch");
  if (mask.size() != features.size() || labels.size() != features.size())
    throw std::runtime_error("batch: per-sample arrays disagree");
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].rows() != 25)
      throw std::runtime_error("batch: each window must be a 5 x 5 grid");
    if (features[i].cols() != t_max ||
        static_cast<int>(mask[i].size()) != t_max)
      throw std::runtime_error("batch: sample not padded to t_max");
    if (std::none_of(mask[i].begin(), mask[i].end(),
                     [](auto v) { return v != 0; }))
      throw std::runtime_error("batch: sample has no valid window");
    if (labels[i] < 0 || labels[i] >= kNumClasses)
      throw std::runtime_error("batch: label out of range");
  }
}

Batch make_batch(const std::vector<const FeatureTensor*>& samples) {
  if (samples.empty()) throw std::runtime_error("empty batch");
  Batch batch;
  batch.t_max = 0;
  for (const auto* s : samples) {
    if (s->values.cols() != 25)
      throw std::runtime_error("batch: each window must be a 5 x 5 grid");
    batch.t_max = std::max(batch.t_max, s->n_windows());
  }
  for (const auto* s : samples) {
    const int t = s->n_windows();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(25, batch.t_max);
    m.leftCols(t) = s->values.transpose().cast<double>();
    batch.features.push_back(std::move(m));
    std::vector<std::uint8_t> valid(batch.t_max, 0);
    std::fill(valid.begin(), valid.begin() + t, std::uint8_t{1});
    batch.mask.push_back(std::move(valid));
    batch.labels.push_back(static_cast<int>(s->label));
  }
  batch.validate();
  return batch;
}

Batch make_batch(const std::vector<FeatureTensor>& samples) {
  std::vector<const FeatureTensor*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(ptrs);
}

Eigen::MatrixXd positional_encoding(int length, int dim) {
  Eigen::MatrixXd pe(length, dim);
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(i - (i % 2)) / dim;
      const double angle = t / std::pow(10000.0, exponent);
      pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

namespace {

struct LayerHandles {
  Tensor ln1_gain, ln1_shift;
  autograd::AttentionParams attn;
  Tensor ln2_gain, ln2_shift;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

LayerHandles layer_handles(const ModelParams& p, int layer) {
  const std::string base = "layers." + std::to_string(layer) + ".";
  LayerHandles h;
  h.ln1_gain = p.find(base + "ln1.gain");
  h.ln1_shift = p.find(base + "ln1.shift");
  h.attn = {p.find(base + "attn.wq.weight"), p.find(base + "attn.wk.weight"),
            p.find(base + "attn.wv.weight"), p.find(base + "attn.wo.weight")};
  h.ln2_gain = p.find(base + "ln2.gain");
  h.ln2_shift = p.find(base + "ln2.shift");
  h.ffn_w1 = p.find(base + "ffn.w1.weight");
  h.ffn_b1 = p.find(base + "ffn.w1.bias");
  h.ffn_w2 = p.find(base + "ffn.w2.weight");
  h.ffn_b2 = p.find(base + "ffn.w2.bias");
  return h;
}

}  // namespace

Tensor forward(Tape& tape, const ModelParams& params, const Batch& batch,
               bool train, Rng* dropout_rng) {
  batch.validate();
  const ModelConfig& cfg = params.config;
  const double p_drop = cfg.dropout;

  const Tensor conv_w = params.find("conv.weight");
  const Tensor conv_b = params.find("conv.bias");
  const Tensor proj_w = params.find("input_proj.weight");
  const Tensor proj_b = params.find("input_proj.bias");
  const Tensor final_gain = params.find("final_ln.gain");
  const Tensor final_shift = params.find("final_ln.shift");
  const Tensor head_w = params.find("head.weight");
  const Tensor head_b = params.find("head.bias");

  std::vector<LayerHandles> layers;
  layers.reserve(cfg.n_transformer_layers);
  for (int l = 0; l < cfg.n_transformer_layers; ++l)
    layers.push_back(layer_handles(params, l));

  const Eigen::MatrixXd pe = positional_encoding(batch.t_max, cfg.embed_dim);
  const Tensor pe_const = autograd::tensor_from(pe, false);

  std::vector<Tensor> logit_rows;
  logit_rows.reserve(batch.features.size());
  for (int s = 0; s < batch.size(); ++s) {
    const auto& valid = batch.mask[s];
    const Tensor x = autograd::tensor_from(batch.features[s], false);

    Tensor h = relu(tape, conv1d_same(tape, x, conv_w, conv_b));
    Tensor seq = linear(tape, transpose(tape, h), proj_w, proj_b);
    seq = add(tape, seq, pe_const);
    seq = dropout(tape, seq, p_drop, train, dropout_rng);

    for (const auto& layer : layers) {
      Tensor normed = layer_norm(tape, seq, layer.ln1_gain, layer.ln1_shift);
      Tensor attended = multi_head_attention(tape, normed, layer.attn, valid,
                                             cfg.n_heads);
      seq = add(tape, seq, dropout(tape, attended, p_drop, train, dropout_rng));

      normed = layer_norm(tape, seq, layer.ln2_gain, layer.ln2_shift);
      Tensor hidden =
          relu(tape, linear(tape, normed, layer.ffn_w1, layer.ffn_b1));
      Tensor ffn_out = linear(tape, hidden, layer.ffn_w2, layer.ffn_b2);
      seq = add(tape, seq, dropout(tape, ffn_out, p_drop, train, dropout_rng));
    }

    seq = layer_norm(tape, seq, final_gain, final_shift);
    const Tensor pooled = mean_rows_masked(tape, seq, valid);
    logit_rows.push_back(linear(tape, pooled, head_w, head_b));
  }
  return concat_rows(tape, logit_rows);
}

Eigen::MatrixXd forward_logits(const ModelParams& params, const Batch& batch) {
  // Gradient tracking is keyed off requires_grad; borrow value-only views of
  // the parameters so evaluation records nothing.
  ModelParams frozen;
  frozen.config = params.config;
  frozen.entries.reserve(params.entries.size());
  for (const auto& [name, t] : params.entries) {
    auto view = std::make_shared<autograd::TensorData>();
    view->shape = t->shape;
    view->value = t->value;
    view->requires_grad = false;
    frozen.entries.emplace_back(name, std::move(view));
  }
  Tape tape;
  const Tensor logits = forward(tape, frozen, batch, false, nullptr);
  return logits->mat();
}

}  // namespace neurowave
