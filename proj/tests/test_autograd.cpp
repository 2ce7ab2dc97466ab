#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "neurowave/autograd.hpp"
#include "neurowave/rng.hpp"

using namespace neurowave;
using namespace neurowave::autograd;

namespace {

Eigen::ArrayXd random_values(Rng& rng, std::int64_t n, double scale = 1.0) {
  Eigen::ArrayXd v(n);
  for (std::int64_t i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

Tensor constant(const std::vector<int>& shape, const Eigen::ArrayXd& values) {
  auto t = make_tensor(shape, false);
  t->value = values;
  return t;
}

// Scalar reduction with fixed random weights, so the check exercises the full
// Jacobian rather than just row sums.
Tensor weighted_sum(Tape& tape, const Tensor& x, const Eigen::ArrayXd& w) {
  auto weights = make_tensor(x->shape, false);
  weights->value = w;
  return sum_all(tape, hadamard(tape, x, weights));
}

}  // namespace

TEST_CASE("matmul against the identity and its shape contract") {
  Tape tape;
  Rng rng(1);
  auto a = constant({3, 3}, random_values(rng, 9));
  auto eye = make_tensor({3, 3}, false);
  eye->mat() = Eigen::MatrixXd::Identity(3, 3);
  auto prod = matmul(tape, a, eye);
  CHECK((prod->mat() - a->mat()).cwiseAbs().maxCoeff() == 0.0);

  auto b = constant({2, 3}, random_values(rng, 6));
  auto c = constant({3, 4}, random_values(rng, 12));
  auto bc = matmul(tape, b, c);
  CHECK(bc->shape == std::vector<int>{2, 4});
  CHECK_THROWS(matmul(tape, c, b));
}

TEST_CASE("matmul gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Eigen::ArrayXd a0 = random_values(rng, 20);
    const Eigen::ArrayXd b0 = random_values(rng, 15);
    const Eigen::ArrayXd w = random_values(rng, 12);

    const double err_a = finite_difference_check(
        [&](Tape& tape, const Tensor& x) {
          return weighted_sum(tape, matmul(tape, x, constant({5, 3}, b0)), w);
        },
        a0, {4, 5});
    CHECK(err_a < 1e-6);

    const double err_b = finite_difference_check(
        [&](Tape& tape, const Tensor& x) {
          return weighted_sum(tape, matmul(tape, constant({4, 5}, a0), x), w);
        },
        b0, {5, 3});
    CHECK(err_b < 1e-6);
  }
}

TEST_CASE("conv1d_same with a delta kernel is the identity") {
  Tape tape;
  Rng rng(2);
  auto x = constant({1, 9}, random_values(rng, 9));
  auto kernel = make_tensor({1, 1, 3}, false);
  kernel->value << 0.0, 1.0, 0.0;
  auto bias = make_tensor({1}, false);
  auto y = conv1d_same(tape, x, kernel, bias);
  CHECK(y->shape == x->shape);
  CHECK((y->value - x->value).abs().maxCoeff() < 1e-15);
}

TEST_CASE("conv1d_same keeps the time length and validates the kernel") {
  Tape tape;
  Rng rng(3);
  for (int t_len : {1, 2, 5, 11}) {
    auto x = constant({3, t_len}, random_values(rng, 3 * t_len));
    auto kernel = constant({2, 3, 5}, random_values(rng, 30));
    auto bias = constant({2}, random_values(rng, 2));
    auto y = conv1d_same(tape, x, kernel, bias);
    CHECK(y->shape == std::vector<int>{2, t_len});
  }
  auto x = constant({3, 4}, random_values(rng, 12));
  auto even = constant({2, 3, 4}, random_values(rng, 24));
  auto bias = constant({2}, random_values(rng, 2));
  CHECK_THROWS_WITH_AS(conv1d_same(tape, x, even, bias),
                       doctest::Contains("odd"), std::runtime_error);
}

TEST_CASE("conv1d_same gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const Eigen::ArrayXd x0 = random_values(rng, 3 * 7);
    const Eigen::ArrayXd k0 = random_values(rng, 2 * 3 * 5);
    const Eigen::ArrayXd b0 = random_values(rng, 2);
    const Eigen::ArrayXd w = random_values(rng, 2 * 7);

    const double err_x = finite_difference_check(
        [&](Tape& tape, const Tensor& x) {
          return weighted_sum(
              tape,
              conv1d_same(tape, x, constant({2, 3, 5}, k0), constant({2}, b0)),
              w);
        },
        x0, {3, 7});
    const double err_k = finite_difference_check(
        [&](Tape& tape, const Tensor& k) {
          return weighted_sum(
              tape,
              conv1d_same(tape, constant({3, 7}, x0), k, constant({2}, b0)),
              w);
        },
        k0, {2, 3, 5});
    const double err_b = finite_difference_check(
        [&](Tape& tape, const Tensor& b) {
          return weighted_sum(
              tape,
              conv1d_same(tape, constant({3, 7}, x0), constant({2, 3, 5}, k0),
                          b),
              w);
        },
        b0, {2});
    CHECK(err_x < 1e-6);
    CHECK(err_k < 1e-6);
    CHECK(err_b < 1e-6);
  }
}

TEST_CASE("layer_norm zeroes constant rows and standardizes the rest") {
  Tape tape;
  auto x = make_tensor({1, 6}, false);
  x->value = Eigen::ArrayXd::Constant(6, 3.25);
  auto gain = make_tensor({6}, false);
  gain->value.setOnes();
  auto shift = make_tensor({6}, false);
  auto y = layer_norm(tape, x, gain, shift);
  CHECK(y->value.abs().maxCoeff() < 1e-6);

  Rng rng(5);
  auto z = constant({4, 8}, random_values(rng, 32));
  auto gain8 = make_tensor({8}, false);
  gain8->value.setOnes();
  auto shift8 = make_tensor({8}, false);
  auto normed = layer_norm(tape, z, gain8, shift8);
  for (int r = 0; r < 4; ++r) {
    const auto row = normed->mat().row(r);
    CHECK(std::abs(row.mean()) < 1e-9);
    CHECK(std::abs(row.array().square().mean() - 1.0) < 1e-4);
  }
}

TEST_CASE("layer_norm gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(200 + seed);
    const Eigen::ArrayXd x0 = random_values(rng, 32);
    const Eigen::ArrayXd g0 = random_values(rng, 8) + 1.5;
    const Eigen::ArrayXd s0 = random_values(rng, 8);
    const Eigen::ArrayXd w = random_values(rng, 32);

    const double err_x = finite_difference_check(
        [&](Tape& tape, const Tensor& x) {
          return weighted_sum(
              tape, layer_norm(tape, x, constant({8}, g0), constant({8}, s0)),
              w);
        },
        x0, {4, 8});
    const double err_g = finite_difference_check(
        [&](Tape& tape, const Tensor& g) {
          return weighted_sum(
              tape, layer_norm(tape, constant({4, 8}, x0), g,
                               constant({8}, s0)),
              w);
        },
        g0, {8});
    CHECK(err_x < 1e-6);
    CHECK(err_g < 1e-6);
  }
}

TEST_CASE("softmax rows sum to one and masked keys get zero weight") {
  Tape tape;
  Rng rng(6);
  auto x = constant({7, 9}, random_values(rng, 63, 3.0));
  auto s = softmax_rows(tape, x);
  for (int r = 0; r < 7; ++r) {
    CHECK(std::abs(s->mat().row(r).sum() - 1.0) < 1e-12);
    for (int c = 0; c < 9; ++c) {
      CHECK(s->mat()(r, c) > 0.0);
      CHECK(s->mat()(r, c) <= 1.0);
    }
  }

  std::vector<std::uint8_t> mask(9, 1);
  mask[3] = 0;
  mask[8] = 0;
  auto sm = softmax_rows(tape, x, mask);
  for (int r = 0; r < 7; ++r) {
    CHECK(sm->mat()(r, 3) == 0.0);
    CHECK(sm->mat()(r, 8) == 0.0);
    CHECK(std::abs(sm->mat().row(r).sum() - 1.0) < 1e-12);
  }
  CHECK_THROWS_WITH_AS(
      softmax_rows(tape, x, std::vector<std::uint8_t>(9, 0)),
      doctest::Contains("masked"), std::runtime_error);
}

TEST_CASE("attention single-key and masked-content behaviour") {
  Rng rng(7);
  const int d = 8;
  AttentionParams params;
  auto mk = [&](std::vector<int> shape) {
    return constant(shape, random_values(rng, numel(shape)));
  };
  params.wq = mk({d, d});
  params.wk = mk({d, d});
  params.wv = mk({d, d});
  params.wo = mk({d, d});

  SUBCASE("T = 1 collapses to the value/output projections") {
    Tape tape;
    auto x = constant({1, d}, random_values(rng, d));
    auto out = multi_head_attention(tape, x, params, {1}, 2);
    auto expected =
        matmul_nt(tape, matmul_nt(tape, x, params.wv), params.wo);
    CHECK((out->value - expected->value).abs().maxCoeff() < 1e-12);
  }

  SUBCASE("content of masked positions cannot reach the output") {
    const Eigen::ArrayXd base = random_values(rng, 4 * d);
    std::vector<std::uint8_t> mask{1, 1, 0, 1};

    Tape tape;
    auto x1 = constant({4, d}, base);
    auto out1 = multi_head_attention(tape, x1, params, mask, 2);

    Eigen::ArrayXd poked = base;
    for (int c = 0; c < d; ++c) poked[2 * d + c] += 37.0;
    auto x2 = constant({4, d}, poked);
    auto out2 = multi_head_attention(tape, x2, params, mask, 2);

    // Rows 0, 1, 3 are valid queries; they may only differ at masked rows.
    for (int r : {0, 1, 3})
      CHECK((out1->mat().row(r) - out2->mat().row(r)).cwiseAbs().maxCoeff() <
            1e-12);
  }

  SUBCASE("head-count divisibility is enforced") {
    Tape tape;
    auto x = constant({2, d}, random_values(rng, 2 * d));
    CHECK_THROWS(multi_head_attention(tape, x, params, {1, 1}, 3));
  }
}

TEST_CASE("attention gradients match finite differences") {
  const int d = 8;
  const int t_len = 5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(300 + seed);
    AttentionParams params;
    auto mk = [&](std::vector<int> shape) {
      return constant(shape, random_values(rng, numel(shape)));
    };
    params.wq = mk({d, d});
    params.wk = mk({d, d});
    params.wv = mk({d, d});
    params.wo = mk({d, d});
    const Eigen::ArrayXd x0 = random_values(rng, t_len * d);
    const Eigen::ArrayXd w = random_values(rng, t_len * d);
    std::vector<std::uint8_t> mask(t_len, 1);
    mask[t_len - 1] = seed % 2;  // alternate padded and full sequences

    const double err_x = finite_difference_check(
        [&](Tape& tape, const Tensor& x) {
          return weighted_sum(
              tape, multi_head_attention(tape, x, params, mask, 2), w);
        },
        x0, {t_len, d});
    CHECK(err_x < 1e-5);

    // Weight gradient, routed through one projection at a time.
    AttentionParams probe = params;
    const Eigen::ArrayXd wq0 = params.wq->value;
    const double err_wq = finite_difference_check(
        [&](Tape& tape, const Tensor& wq) {
          AttentionParams p = probe;
          p.wq = wq;
          return weighted_sum(
              tape,
              multi_head_attention(tape, constant({t_len, d}, x0), p, mask, 2),
              w);
        },
        wq0, {d, d});
    CHECK(err_wq < 1e-5);
  }
}

TEST_CASE("cross-entropy analytic values") {
  Tape tape;
  auto uniform = make_tensor({2, 3}, false);
  uniform->value.setConstant(0.7);
  auto loss = softmax_cross_entropy(tape, uniform, {0, 2});
  CHECK(loss->value[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  auto saturated = make_tensor({1, 3}, false);
  saturated->value << 1e4, 0.0, 0.0;
  auto tiny = softmax_cross_entropy(tape, saturated, {0});
  CHECK(tiny->value[0] < 1e-6);
  CHECK(tiny->value[0] >= 0.0);

  CHECK_THROWS_WITH_AS(softmax_cross_entropy(tape, uniform, {0, 3}),
                       doctest::Contains("out of range"), std::runtime_error);
}

TEST_CASE("cross-entropy gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(400 + seed);
    const Eigen::ArrayXd z0 = random_values(rng, 12, 2.0);
    const std::vector<int> targets{0, 2, 1, 1};
    const double err = finite_difference_check(
        [&](Tape& tape, const Tensor& z) {
          return softmax_cross_entropy(tape, z, targets);
        },
        z0, {4, 3});
    CHECK(err < 1e-6);
  }
}

TEST_CASE("dropout behaviour in train and eval modes") {
  Tape tape;
  Rng data_rng(8);
  auto x = constant({1, 100000}, random_values(data_rng, 100000));

  Rng rng_eval(9);
  auto eval_out = dropout(tape, x, 0.5, false, &rng_eval);
  CHECK(eval_out.get() == x.get());  // identity, no copy

  Rng rng_p0(10);
  auto p0_out = dropout(tape, x, 0.0, true, &rng_p0);
  CHECK(p0_out.get() == x.get());

  Rng rng_train(11);
  auto out = dropout(tape, x, 0.5, true, &rng_train);
  std::int64_t survivors = 0;
  for (Eigen::Index i = 0; i < out->size(); ++i) {
    if (out->value[i] != 0.0) {
      ++survivors;
      CHECK(out->value[i] == 2.0 * x->value[i]);
    }
  }
  const double fraction = static_cast<double>(survivors) / 100000.0;
  CHECK(fraction > 0.49);
  CHECK(fraction < 0.51);

  CHECK_THROWS(dropout(tape, x, 1.0, true, &rng_train));
}

TEST_CASE("dropout gradient with a fixed mask matches finite differences") {
  Rng rng(12);
  const Eigen::ArrayXd x0 = random_values(rng, 40);
  const Eigen::ArrayXd w = random_values(rng, 40);
  const double err = finite_difference_check(
      [&](Tape& tape, const Tensor& x) {
        Rng mask_rng(777);  // same mask on every evaluation
        return weighted_sum(tape, dropout(tape, x, 0.3, true, &mask_rng), w);
      },
      x0, {5, 8});
  CHECK(err < 1e-6);
}

TEST_CASE("glue operations pass a combined gradient check") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(500 + seed);
    const Eigen::ArrayXd x0 = random_values(rng, 24);
    const Eigen::ArrayXd w0 = random_values(rng, 4 * 6);
    const Eigen::ArrayXd b0 = random_values(rng, 4);
    const Eigen::ArrayXd w = random_values(rng, 4);
    std::vector<std::uint8_t> mask{1, 0, 1, 1};

    const double err = finite_difference_check(
        [&](Tape& tape, const Tensor& x) {
          auto t = transpose(tape, x);             // 6 x 4 -> 4 x 6
          auto lin = linear(tape, t, constant({4, 6}, w0), constant({4}, b0));
          auto act = relu(tape, scale(tape, lin, 1.7));
          auto left = slice_cols(tape, act, 0, 2);
          auto right = slice_cols(tape, act, 2, 2);
          std::vector<Tensor> parts{right, left};
          auto swapped = concat_cols(tape, parts);
          auto back = add(tape, swapped, act);
          auto pooled = mean_rows_masked(tape, back, mask);
          return weighted_sum(tape, pooled, w);
        },
        x0, {6, 4});
    CHECK(err < 1e-6);
  }
}

TEST_CASE("shaped operations keep their declared output shapes") {
  Rng rng(550);
  for (int round = 0; round < 15; ++round) {
    Tape tape;
    const int c_in = 1 + static_cast<int>(rng.below(6));
    const int c_out = 1 + static_cast<int>(rng.below(6));
    const int k_taps = 1 + 2 * static_cast<int>(rng.below(3));
    const int t_len = 1 + static_cast<int>(rng.below(9));
    auto x = constant({c_in, t_len}, random_values(rng, c_in * t_len));
    auto kernel = constant({c_out, c_in, k_taps},
                           random_values(rng, c_out * c_in * k_taps));
    auto bias = constant({c_out}, random_values(rng, c_out));
    CHECK(conv1d_same(tape, x, kernel, bias)->shape ==
          std::vector<int>{c_out, t_len});

    const int rows = 1 + static_cast<int>(rng.below(7));
    const int d = 2 + static_cast<int>(rng.below(7));
    auto y = constant({rows, d}, random_values(rng, rows * d));
    auto gain = constant({d}, random_values(rng, d));
    auto shift = constant({d}, random_values(rng, d));
    CHECK(layer_norm(tape, y, gain, shift)->shape ==
          std::vector<int>{rows, d});

    const int heads = 1 + static_cast<int>(rng.below(3));
    const int dh = heads * (1 + static_cast<int>(rng.below(4)));
    const int seq = 1 + static_cast<int>(rng.below(6));
    AttentionParams params;
    params.wq = constant({dh, dh}, random_values(rng, dh * dh));
    params.wk = constant({dh, dh}, random_values(rng, dh * dh));
    params.wv = constant({dh, dh}, random_values(rng, dh * dh));
    params.wo = constant({dh, dh}, random_values(rng, dh * dh));
    auto z = constant({seq, dh}, random_values(rng, seq * dh));
    std::vector<std::uint8_t> mask(seq, 1);
    CHECK(multi_head_attention(tape, z, params, mask, heads)->shape ==
          std::vector<int>{seq, dh});
  }
}

TEST_CASE("backward accumulation semantics") {
  SUBCASE("sum of a tensor used once gives all-ones") {
    Tape tape;
    auto x = make_tensor({2, 3}, true);
    Rng rng(13);
    x->value = random_values(rng, 6);
    auto loss = sum_all(tape, x);
    tape.backward(loss);
    CHECK((x->grad - 1.0).abs().maxCoeff() == 0.0);
  }
  SUBCASE("x + x doubles the upstream gradient") {
    Tape tape;
    auto x = make_tensor({2, 2}, true);
    x->value.setConstant(0.5);
    auto loss = sum_all(tape, add(tape, x, x));
    tape.backward(loss);
    CHECK((x->grad - 2.0).abs().maxCoeff() == 0.0);
  }
  SUBCASE("reset then backward is bit-for-bit repeatable") {
    Tape tape;
    auto x = make_tensor({4, 4}, true);
    Rng rng(14);
    x->value = random_values(rng, 16);
    auto y = matmul(tape, x, x);
    auto loss = sum_all(tape, y);
    tape.backward(loss);
    const Eigen::ArrayXd first = x->grad;
    tape.zero_all_grads();
    tape.backward(loss);
    CHECK((x->grad == first).all());
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape tape;
    auto x = make_tensor({2, 2}, true);
    CHECK_THROWS_WITH_AS(tape.backward(x), doctest::Contains("scalar"),
                         std::runtime_error);
  }
}

TEST_CASE("finite_difference_check calibrates itself") {
  Rng rng(15);
  const Eigen::ArrayXd c = random_values(rng, 10);
  const Eigen::ArrayXd x0 = random_values(rng, 10);

  SUBCASE("linear functions are exact to well below 1e-10") {
    const double err = finite_difference_check(
        [&](Tape& tape, const Tensor& x) {
          return weighted_sum(tape, x, c);
        },
        x0, {10});
    CHECK(err < 1e-10);
  }

  SUBCASE("a corrupted backward rule is flagged loudly") {
    // y = 2x elementwise, but the recorded rule claims d/dx = 2 * 1.01.
    const double err = finite_difference_check(
        [&](Tape& tape, const Tensor& x) {
          auto y = make_tensor(x->shape, x->requires_grad);
          y->value = 2.0 * x->value;
          if (y->requires_grad) {
            tape.record(y, {x}, [x, y] { x->grad += 2.02 * y->grad; });
          }
          return weighted_sum(tape, y, c);
        },
        x0, {10});
    CHECK(err > 1e-3);
  }
}
