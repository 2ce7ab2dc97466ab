#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "neurowave/model.hpp"
#include "neurowave/rng.hpp"

using namespace neurowave;
using autograd::Tape;
using autograd::Tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.cnn_out_channels = 4;
  c.kernel_size = 3;
  c.n_transformer_layers = 1;
  c.ffn_hidden = 16;
  c.n_heads = 2;
  c.embed_dim = 8;
  c.batch_size = 2;
  c.dropout = 0.0;
  c.learning_rate = 1e-3;
  return c;
}

ModelConfig optimal_config() {
  return ModelConfig{};  // defaults are the selected configuration
}

FeatureTensor random_features(int windows, Rng& rng, Label label) {
  FeatureTensor f;
  f.trial_id = "t" + std::to_string(rng.below(1000000));
  f.label = label;
  f.values.resize(windows, 25);
  for (int t = 0; t < windows; ++t)
    for (int c = 0; c < 25; ++c)
      f.values(t, c) = static_cast<float>(rng.normal());
  return f;
}

// Shape enumeration done by hand from the configuration, independent of the
// parameter table the engine builds.
std::int64_t expected_parameter_count(const ModelConfig& c) {
  const std::int64_t conv = c.cnn_out_channels * 25 * c.kernel_size +
                            c.cnn_out_channels;
  const std::int64_t proj =
      std::int64_t{c.embed_dim} * c.cnn_out_channels + c.embed_dim;
  const std::int64_t attn = 4 * std::int64_t{c.embed_dim} * c.embed_dim;
  const std::int64_t norms = 4 * std::int64_t{c.embed_dim};
  const std::int64_t ffn =
      std::int64_t{c.ffn_hidden} * c.embed_dim + c.ffn_hidden +
      std::int64_t{c.embed_dim} * c.ffn_hidden + c.embed_dim;
  const std::int64_t per_layer = attn + norms + ffn;
  const std::int64_t final_norm = 2 * std::int64_t{c.embed_dim};
  const std::int64_t head = 3 * std::int64_t{c.embed_dim} + 3;
  return conv + proj + c.n_transformer_layers * per_layer + final_norm + head;
}

// Value-only view of a parameter set with one entry replaced by the probe
// tensor; used to route finite differences through a single parameter.
ModelParams with_probe(const ModelParams& params, std::size_t index,
                       const Tensor& probe) {
  ModelParams out;
  out.config = params.config;
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    if (i == index) {
      out.entries.emplace_back(params.entries[i].first, probe);
      continue;
    }
    auto view = std::make_shared<autograd::TensorData>();
    view->shape = params.entries[i].second->shape;
    view->value = params.entries[i].second->value;
    view->requires_grad = false;
    out.entries.emplace_back(params.entries[i].first, view);
  }
  return out;
}

}  // namespace

TEST_CASE("initialization is deterministic and respects Glorot bounds") {
  const ModelConfig cfg = optimal_config();
  const ModelParams a = init_params(cfg, 11);
  const ModelParams b = init_params(cfg, 11);
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].first == b.entries[i].first);
    CHECK((a.entries[i].second->value == b.entries[i].second->value).all());
  }
  const ModelParams c = init_params(cfg, 12);
  CHECK(!(a.entries[0].second->value == c.entries[0].second->value).all());

  for (const auto& [name, t] : a.entries) {
    if (name.ends_with(".bias") || name.ends_with(".shift")) {
      CHECK(t->value.abs().maxCoeff() == 0.0);
    } else if (name.ends_with(".gain")) {
      CHECK((t->value == 1.0).all());
    }
  }
  // Conv and head weights against their own fan-in/fan-out bounds.
  const auto conv = a.find("conv.weight");
  const double conv_limit =
      std::sqrt(6.0 / (25.0 * cfg.kernel_size +
                       static_cast<double>(cfg.cnn_out_channels) *
                           cfg.kernel_size));
  CHECK(conv->value.abs().maxCoeff() <= conv_limit);
  const auto head = a.find("head.weight");
  const double head_limit = std::sqrt(6.0 / (cfg.embed_dim + 3.0));
  CHECK(head->value.abs().maxCoeff() <= head_limit);
}

TEST_CASE("parameter count matches the shape enumeration") {
  const ModelParams opt = init_params(optimal_config(), 1);
  CHECK(opt.parameter_count() == expected_parameter_count(optimal_config()));
  CHECK(opt.parameter_count() == 134771);

  const ModelParams small = init_params(tiny_config(), 1);
  CHECK(small.parameter_count() == expected_parameter_count(tiny_config()));

  // Batch size and learning rate play no role in the parameter shapes.
  ModelConfig varied = optimal_config();
  varied.batch_size = 32;
  varied.learning_rate = 1e-3;
  CHECK(init_params(varied, 1).parameter_count() == opt.parameter_count());
}

TEST_CASE("init rejects a head count that does not divide the embedding") {
  ModelConfig bad = tiny_config();
  bad.embed_dim = 10;
  bad.n_heads = 4;
  CHECK_THROWS_WITH_AS(init_params(bad, 1), doctest::Contains("divisible"),
                       std::runtime_error);
}

TEST_CASE("search-space validation accepts the optimum and rejects strays") {
  CHECK_NOTHROW(optimal_config().validate_search_values());
  CHECK_THROWS(tiny_config().validate_search_values());
  CHECK_NOTHROW(tiny_config().validate_structure());
}

TEST_CASE("forward produces finite logits of shape B x 3") {
  Rng rng(21);
  std::vector<FeatureTensor> samples;
  for (int i = 0; i < 3; ++i)
    samples.push_back(random_features(4 + i, rng, static_cast<Label>(i)));
  const Batch batch = make_batch(samples);
  const ModelParams params = init_params(tiny_config(), 5);
  const Eigen::MatrixXd logits = forward_logits(params, batch);
  CHECK(logits.rows() == 3);
  CHECK(logits.cols() == 3);
  CHECK(logits.allFinite());
}

TEST_CASE("evaluation is bit-for-bit deterministic") {
  Rng rng(22);
  const Batch batch = make_batch(
      std::vector<FeatureTensor>{random_features(5, rng, Label::neutral),
                                 random_features(3, rng, Label::positive)});
  const ModelParams params = init_params(tiny_config(), 6);
  const Eigen::MatrixXd a = forward_logits(params, batch);
  const Eigen::MatrixXd b = forward_logits(params, batch);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("appending masked zero windows never moves the logits") {
  Rng rng(23);
  const ModelParams params = init_params(tiny_config(), 7);
  for (int k : {1, 3}) {
    const FeatureTensor sample = random_features(4, rng, Label::negative);
    const Batch plain = make_batch(std::vector<FeatureTensor>{sample});

    Batch padded;
    padded.t_max = 4 + k;
    Eigen::MatrixXd wide = Eigen::MatrixXd::Zero(25, 4 + k);
    wide.leftCols(4) = plain.features[0].leftCols(4);
    padded.features.push_back(wide);
    std::vector<std::uint8_t> mask(4 + k, 0);
    std::fill(mask.begin(), mask.begin() + 4, std::uint8_t{1});
    padded.mask.push_back(mask);
    padded.labels.push_back(plain.labels[0]);

    const Eigen::MatrixXd a = forward_logits(params, plain);
    const Eigen::MatrixXd b = forward_logits(params, padded);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("shorter samples in a mixed batch match their solo logits") {
  Rng rng(24);
  const ModelParams params = init_params(tiny_config(), 8);
  const FeatureTensor brief = random_features(2, rng, Label::neutral);
  const FeatureTensor longer = random_features(6, rng, Label::positive);

  const Eigen::MatrixXd solo =
      forward_logits(params, make_batch(std::vector<FeatureTensor>{brief}));
  const Eigen::MatrixXd joint = forward_logits(
      params, make_batch(std::vector<FeatureTensor>{brief, longer}));
  CHECK((solo.row(0) - joint.row(0)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("permuting batch order permutes logit rows exactly") {
  Rng rng(25);
  const ModelParams params = init_params(tiny_config(), 9);
  std::vector<FeatureTensor> samples;
  for (int i = 0; i < 3; ++i)
    samples.push_back(random_features(5, rng, static_cast<Label>(i)));

  const Eigen::MatrixXd abc = forward_logits(params, make_batch(samples));
  const Eigen::MatrixXd cab = forward_logits(
      params,
      make_batch(std::vector<FeatureTensor>{samples[2], samples[0],
                                            samples[1]}));
  CHECK((abc.row(0).array() == cab.row(1).array()).all());
  CHECK((abc.row(1).array() == cab.row(2).array()).all());
  CHECK((abc.row(2).array() == cab.row(0).array()).all());
}

TEST_CASE("batch construction validates window grids") {
  FeatureTensor bad;
  bad.trial_id = "bad";
  bad.label = Label::negative;
  bad.values.resize(3, 24);  // not a 5 x 5 grid per window
  CHECK_THROWS_WITH_AS(make_batch(std::vector<FeatureTensor>{bad}),
                       doctest::Contains("5 x 5"), std::runtime_error);
}

TEST_CASE("full-model gradients match finite differences at tiny scale") {
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    Rng rng(600 + seed);
    const ModelParams params = init_params(tiny_config(), 900 + seed);
    std::vector<FeatureTensor> samples{random_features(3, rng, Label::negative),
                                       random_features(3, rng, Label::positive)};
    const Batch batch = make_batch(samples);

    for (std::size_t i = 0; i < params.entries.size(); ++i) {
      const auto& proto = params.entries[i].second;
      const double err = autograd::finite_difference_check(
          [&](Tape& tape, const Tensor& probe) {
            const ModelParams probed = with_probe(params, i, probe);
            const Tensor logits = forward(tape, probed, batch, true, nullptr);
            return autograd::softmax_cross_entropy(tape, logits, batch.labels);
          },
          proto->value, proto->shape, 1e-5);
      INFO("parameter ", params.entries[i].first);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("positional encoding alternates sine and cosine") {
  const Eigen::MatrixXd pe = positional_encoding(6, 8);
  CHECK(pe.rows() == 6);
  CHECK(pe.cols() == 8);
  // t = 0: sin(0) = 0 on even columns, cos(0) = 1 on odd columns.
  for (int i = 0; i < 8; ++i)
    CHECK(pe(0, i) == (i % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(pe(1, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(pe.array().abs().maxCoeff() <= 1.0);
}
