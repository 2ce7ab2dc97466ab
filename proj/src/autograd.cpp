#include "neurowave/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace neurowave::autograd {

std::int64_t numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 1) throw std::runtime_error("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

int TensorData::rows() const {
  if (rank() != 2) throw std::runtime_error("matrix view needs a rank-2 tensor");
  return shape[0];
}

int TensorData::cols() const {
  if (rank() != 2) throw std::runtime_error("matrix view needs a rank-2 tensor");
  return shape[1];
}

Tensor make_tensor(std::vector<int> shape, bool requires_grad) {
  auto t = std::make_shared<TensorData>();
  const std::int64_t n = numel(shape);
  t->shape = std::move(shape);
  t->value = Eigen::ArrayXd::Zero(n);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad = Eigen::ArrayXd::Zero(n);
  return t;
}

Tensor tensor_from(const Eigen::MatrixXd& values, bool requires_grad) {
  auto t = make_tensor({static_cast<int>(values.rows()),
                        static_cast<int>(values.cols())},
                       requires_grad);
  t->mat() = values;
  return t;
}

void Tape::record(const Tensor& out, std::vector<Tensor> inputs,
                  std::function<void()> backward_step) {
  touched_.push_back(out);
  for (auto& in : inputs) touched_.push_back(std::move(in));
  steps_.push_back(std::move(backward_step));
}

void Tape::backward(const Tensor& loss) {
  if (loss->size() != 1) throw std::runtime_error("loss must be scalar");
  if (!loss->requires_grad)
    throw std::runtime_error("loss does not depend on any tracked tensor");
  loss->grad[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

void Tape::zero_all_grads() {
  std::unordered_set<TensorData*> seen;
  for (auto& t : touched_)
    if (seen.insert(t.get()).second) t->zero_grad();
}

void Tape::clear() {
  steps_.clear();
  touched_.clear();
}

namespace {

bool same_shape(const Tensor& a, const Tensor& b) {
  return a->shape == b->shape;
}

Tensor result_like(const std::vector<int>& shape, bool requires_grad) {
  return make_tensor(shape, requires_grad);
}

bool any_grad(std::initializer_list<Tensor> ts) {
  return std::any_of(ts.begin(), ts.end(),
                     [](const Tensor& t) { return t->requires_grad; });
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw std::runtime_error("add: shape mismatch");
  auto out = result_like(a->shape, any_grad({a, b}));
  out->value = a->value + b->value;
  if (out->requires_grad) {
    tape.record(out, {a, b}, [a, b, out] {
      if (a->requires_grad) a->grad += out->grad;
      if (b->requires_grad) b->grad += out->grad;
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  auto out = result_like(a->shape, a->requires_grad);
  out->value = factor * a->value;
  if (out->requires_grad) {
    tape.record(out, {a},
                [a, out, factor] { a->grad += factor * out->grad; });
  }
  return out;
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw std::runtime_error("hadamard: shape mismatch");
  auto out = result_like(a->shape, any_grad({a, b}));
  out->value = a->value * b->value;
  if (out->requires_grad) {
    tape.record(out, {a, b}, [a, b, out] {
      if (a->requires_grad) a->grad += b->value * out->grad;
      if (b->requires_grad) b->grad += a->value * out->grad;
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
  auto out = result_like(a->shape, a->requires_grad);
  out->value = a->value.max(0.0);
  if (out->requires_grad) {
    tape.record(out, {a}, [a, out] {
      a->grad += (a->value > 0.0).cast<double>() * out->grad;
    });
  }
  return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a->cols() != b->rows())
    throw std::runtime_error("matmul: inner dimensions disagree");
  auto out = result_like({a->rows(), b->cols()}, any_grad({a, b}));
  out->mat() = a->mat() * b->mat();
  if (out->requires_grad) {
    tape.record(out, {a, b}, [a, b, out] {
      const auto d = ConstMapRM(out->grad.data(), out->rows(), out->cols());
      if (a->requires_grad) a->mat_grad() += d * b->mat().transpose();
      if (b->requires_grad) b->mat_grad() += a->mat().transpose() * d;
    });
  }
  return out;
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a->cols() != b->cols())
    throw std::runtime_error("matmul_nt: inner dimensions disagree");
  auto out = result_like({a->rows(), b->rows()}, any_grad({a, b}));
  out->mat() = a->mat() * b->mat().transpose();
  if (out->requires_grad) {
    tape.record(out, {a, b}, [a, b, out] {
      const auto d = ConstMapRM(out->grad.data(), out->rows(), out->cols());
      if (a->requires_grad) a->mat_grad() += d * b->mat();
      if (b->requires_grad) b->mat_grad() += d.transpose() * a->mat();
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  auto out = result_like({a->cols(), a->rows()}, a->requires_grad);
  out->mat() = a->mat().transpose();
  if (out->requires_grad) {
    tape.record(out, {a}, [a, out] {
      a->mat_grad() +=
          ConstMapRM(out->grad.data(), out->rows(), out->cols()).transpose();
    });
  }
  return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias) {
  if (weight->rank() != 2 || bias->rank() != 1)
    throw std::runtime_error("linear: weight must be rank 2 and bias rank 1");
  const int out_dim = weight->rows();
  const int in_dim = weight->cols();
  if (x->cols() != in_dim || bias->shape[0] != out_dim)
    throw std::runtime_error("linear: shape mismatch");

  auto out = result_like({x->rows(), out_dim}, any_grad({x, weight, bias}));
  out->mat() = x->mat() * weight->mat().transpose();
  out->mat().rowwise() +=
      Eigen::Map<const Eigen::RowVectorXd>(bias->value.data(), out_dim);
  if (out->requires_grad) {
    tape.record(out, {x, weight, bias}, [x, weight, bias, out] {
      const auto d = ConstMapRM(out->grad.data(), out->rows(), out->cols());
      if (x->requires_grad) x->mat_grad() += d * weight->mat();
      if (weight->requires_grad)
        weight->mat_grad() += d.transpose() * x->mat();
      if (bias->requires_grad)
        Eigen::Map<Eigen::RowVectorXd>(bias->grad.data(), bias->shape[0]) +=
            d.colwise().sum();
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& a, int first, int count) {
  if (first < 0 || count < 1 || first + count > a->cols())
    throw std::runtime_error("slice_cols: range out of bounds");
  auto out = result_like({a->rows(), count}, a->requires_grad);
  out->mat() = a->mat().middleCols(first, count);
  if (out->requires_grad) {
    tape.record(out, {a}, [a, out, first, count] {
      a->mat_grad().middleCols(first, count) +=
          ConstMapRM(out->grad.data(), out->rows(), out->cols());
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw std::runtime_error("concat_cols: no inputs");
  const int rows = parts[0]->rows();
  int cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p->rows() != rows)
      throw std::runtime_error("concat_cols: row counts disagree");
    cols += p->cols();
    rg = rg || p->requires_grad;
  }
  auto out = result_like({rows, cols}, rg);
  int at = 0;
  for (const auto& p : parts) {
    out->mat().middleCols(at, p->cols()) = p->mat();
    at += p->cols();
  }
  if (rg) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record(out, inputs, [inputs, out] {
      const auto d = ConstMapRM(out->grad.data(), out->rows(), out->cols());
      int at = 0;
      for (const auto& p : inputs) {
        if (p->requires_grad)
          p->mat_grad() += d.middleCols(at, p->cols());
        at += p->cols();
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw std::runtime_error("concat_rows: no inputs");
  const int cols = parts[0]->cols();
  int rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p->cols() != cols)
      throw std::runtime_error("concat_rows: column counts disagree");
    rows += p->rows();
    rg = rg || p->requires_grad;
  }
  auto out = result_like({rows, cols}, rg);
  int at = 0;
  for (const auto& p : parts) {
    out->mat().middleRows(at, p->rows()) = p->mat();
    at += p->rows();
  }
  if (rg) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record(out, inputs, [inputs, out] {
      const auto d = ConstMapRM(out->grad.data(), out->rows(), out->cols());
      int at = 0;
      for (const auto& p : inputs) {
        if (p->requires_grad)
          p->mat_grad() += d.middleRows(at, p->rows());
        at += p->rows();
      }
    });
  }
  return out;
}

Tensor sum_all(Tape& tape, const Tensor& a) {
  auto out = result_like({1}, a->requires_grad);
  out->value[0] = a->value.sum();
  if (out->requires_grad) {
    tape.record(out, {a}, [a, out] { a->grad += out->grad[0]; });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv1d_same
// ---------------------------------------------------------------------------

namespace {

// View of the (c_out x c_in) kernel slice at tap k inside the flat
// (c_out, c_in, K) row-major buffer.
using KernelSlice =
    Eigen::Map<const Eigen::MatrixXd, 0,
               Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
using KernelSliceMut =
    Eigen::Map<Eigen::MatrixXd, 0,
               Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

KernelSlice kernel_slice(const Eigen::ArrayXd& flat, int c_out, int c_in,
                         int k_taps, int k) {
  return {flat.data() + k, c_out, c_in,
          Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(k_taps,
                                                        c_in * k_taps)};
}

KernelSliceMut kernel_slice_mut(Eigen::ArrayXd& flat, int c_out, int c_in,
                                int k_taps, int k) {
  return {flat.data() + k, c_out, c_in,
          Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(k_taps,
                                                        c_in * k_taps)};
}

}  // namespace

Tensor conv1d_same(Tape& tape, const Tensor& x, const Tensor& kernels,
                   const Tensor& bias) {
  if (x->rank() != 2 || kernels->rank() != 3 || bias->rank() != 1)
    throw std::runtime_error("conv1d_same: expected ranks (2, 3, 1)");
  const int c_out = kernels->shape[0];
  const int c_in = kernels->shape[1];
  const int k_taps = kernels->shape[2];
  const int t_len = x->cols();
  if (k_taps % 2 == 0)
    throw std::runtime_error("conv1d_same: kernel size must be odd");
  if (x->rows() != c_in)
    throw std::runtime_error("conv1d_same: input channels disagree");
  if (bias->shape[0] != c_out)
    throw std::runtime_error("conv1d_same: bias size disagrees");

  const int pad = (k_taps - 1) / 2;
  auto out = result_like({c_out, t_len}, any_grad({x, kernels, bias}));
  auto y = out->mat();
  y.colwise() = Eigen::Map<const Eigen::VectorXd>(bias->value.data(), c_out);
  for (int k = 0; k < k_taps; ++k) {
    const int shift = k - pad;  // y[:, t] += W_k * x[:, t + shift]
    const int t0 = std::max(0, -shift);
    const int t1 = std::min(t_len, t_len - shift);
    if (t0 >= t1) continue;
    y.middleCols(t0, t1 - t0) +=
        kernel_slice(kernels->value, c_out, c_in, k_taps, k) *
        x->mat().middleCols(t0 + shift, t1 - t0);
  }

  if (out->requires_grad) {
    tape.record(out, {x, kernels, bias}, [x, kernels, bias, out, c_out, c_in,
                                          k_taps, t_len, pad] {
      const auto d = ConstMapRM(out->grad.data(), c_out, t_len);
      for (int k = 0; k < k_taps; ++k) {
        const int shift = k - pad;
        const int t0 = std::max(0, -shift);
        const int t1 = std::min(t_len, t_len - shift);
        if (t0 >= t1) continue;
        if (x->requires_grad)
          x->mat_grad().middleCols(t0 + shift, t1 - t0) +=
              kernel_slice(kernels->value, c_out, c_in, k_taps, k)
                  .transpose() *
              d.middleCols(t0, t1 - t0);
        if (kernels->requires_grad)
          kernel_slice_mut(kernels->grad, c_out, c_in, k_taps, k) +=
              d.middleCols(t0, t1 - t0) *
              x->mat().middleCols(t0 + shift, t1 - t0).transpose();
      }
      if (bias->requires_grad)
        Eigen::Map<Eigen::VectorXd>(bias->grad.data(), c_out) +=
            d.rowwise().sum();
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// layer_norm
// ---------------------------------------------------------------------------

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& shift, double eps) {
  if (gain->rank() != 1 || shift->rank() != 1)
    throw std::runtime_error("layer_norm: gain and shift must be rank 1");
  const int d = x->cols();
  if (gain->shape[0] != d || shift->shape[0] != d)
    throw std::runtime_error("layer_norm: affine size disagrees");
  const int rows = x->rows();

  auto out = result_like(x->shape, any_grad({x, gain, shift}));
  // Keep the per-row standardized values for the backward pass.
  auto xhat = std::make_shared<MatrixRM>(rows, d);
  auto inv_sigma = std::make_shared<Eigen::VectorXd>(rows);
  {
    const auto xm = x->mat();
    for (int r = 0; r < rows; ++r) {
      const double mean = xm.row(r).mean();
      const double var = (xm.row(r).array() - mean).square().mean();
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_sigma)[r] = is;
      xhat->row(r) = (xm.row(r).array() - mean) * is;
    }
    auto y = out->mat();
    y = *xhat;
    y.array().rowwise() *=
        Eigen::Map<const Eigen::RowVectorXd>(gain->value.data(), d).array();
    y.rowwise() +=
        Eigen::Map<const Eigen::RowVectorXd>(shift->value.data(), d);
  }

  if (out->requires_grad) {
    tape.record(out, {x, gain, shift},
                [x, gain, shift, out, xhat, inv_sigma, d, rows] {
      const auto dy = ConstMapRM(out->grad.data(), rows, d);
      if (gain->requires_grad)
        Eigen::Map<Eigen::RowVectorXd>(gain->grad.data(), d) +=
            (dy.array() * xhat->array()).colwise().sum().matrix();
      if (shift->requires_grad)
        Eigen::Map<Eigen::RowVectorXd>(shift->grad.data(), d) +=
            dy.colwise().sum();
      if (x->requires_grad) {
        const auto g =
            Eigen::Map<const Eigen::RowVectorXd>(gain->value.data(), d);
        for (int r = 0; r < rows; ++r) {
          const Eigen::RowVectorXd dxhat =
              (dy.row(r).array() * g.array()).matrix();
          const double mean_dxhat = dxhat.mean();
          const double mean_dxhat_xhat =
              (dxhat.array() * xhat->row(r).array()).mean();
          x->mat_grad().row(r) +=
              ((dxhat.array() - mean_dxhat -
                xhat->row(r).array() * mean_dxhat_xhat) *
               (*inv_sigma)[r])
                  .matrix();
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / cross-entropy
// ---------------------------------------------------------------------------

Tensor softmax_rows(Tape& tape, const Tensor& x,
                    const std::vector<std::uint8_t>& valid) {
  const int rows = x->rows();
  const int cols = x->cols();
  if (static_cast<int>(valid.size()) != cols)
    throw std::runtime_error("softmax_rows: mask length disagrees");
  if (std::none_of(valid.begin(), valid.end(), [](auto v) { return v != 0; }))
    throw std::runtime_error("softmax_rows: all positions masked");

  auto out = result_like(x->shape, x->requires_grad);
  {
    const auto xm = x->mat();
    auto y = out->mat();
    for (int r = 0; r < rows; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < cols; ++c)
        if (valid[c] && xm(r, c) > mx) mx = xm(r, c);
      double denom = 0.0;
      for (int c = 0; c < cols; ++c) {
        const double e = valid[c] ? std::exp(xm(r, c) - mx) : 0.0;
        y(r, c) = e;
        denom += e;
      }
      y.row(r) /= denom;
    }
  }

  if (out->requires_grad) {
    tape.record(out, {x}, [x, out, rows, cols] {
      const auto dy = ConstMapRM(out->grad.data(), rows, cols);
      const auto s = out->mat();
      for (int r = 0; r < rows; ++r) {
        const double dot = dy.row(r).dot(s.row(r));
        x->mat_grad().row(r) +=
            (s.row(r).array() * (dy.row(r).array() - dot)).matrix();
      }
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  return softmax_rows(tape, x,
                      std::vector<std::uint8_t>(x->cols(), std::uint8_t{1}));
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                             const std::vector<int>& targets) {
  const int batch = logits->rows();
  const int classes = logits->cols();
  if (static_cast<int>(targets.size()) != batch)
    throw std::runtime_error("softmax_cross_entropy: target count disagrees");
  for (int t : targets)
    if (t < 0 || t >= classes)
      throw std::runtime_error("softmax_cross_entropy: target out of range");

  // Cache softmax probabilities for the backward rule.
  auto probs = std::make_shared<MatrixRM>(batch, classes);
  double loss = 0.0;
  {
    const auto z = logits->mat();
    for (int r = 0; r < batch; ++r) {
      const double mx = z.row(r).maxCoeff();
      const Eigen::ArrayXd e = (z.row(r).array() - mx).exp();
      const double denom = e.sum();
      probs->row(r) = (e / denom).matrix();
      loss += std::log(denom) + mx - z(r, targets[r]);
    }
    loss /= batch;
  }

  auto out = result_like({1}, logits->requires_grad);
  out->value[0] = loss;
  if (out->requires_grad) {
    tape.record(out, {logits}, [logits, out, probs, targets, batch] {
      const double upstream = out->grad[0];
      auto dz = logits->mat_grad();
      dz += (upstream / batch) * (*probs);
      for (int r = 0; r < batch; ++r)
        dz(r, targets[r]) -= upstream / batch;
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double p, bool train, Rng* rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::runtime_error("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  if (rng == nullptr)
    throw std::runtime_error("dropout in train mode needs a generator");

  auto mask = std::make_shared<Eigen::ArrayXd>(x->size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask->size(); ++i)
    (*mask)[i] = rng->uniform() < p ? 0.0 : keep_scale;

  auto out = result_like(x->shape, x->requires_grad);
  out->value = x->value * (*mask);
  if (out->requires_grad) {
    tape.record(out, {x}, [x, out, mask] { x->grad += *mask * out->grad; });
  }
  return out;
}

Tensor mean_rows_masked(Tape& tape, const Tensor& x,
                        const std::vector<std::uint8_t>& valid) {
  const int rows = x->rows();
  const int cols = x->cols();
  if (static_cast<int>(valid.size()) != rows)
    throw std::runtime_error("mean_rows_masked: mask length disagrees");
  std::int64_t n_valid = 0;
  for (auto v : valid) n_valid += v ? 1 : 0;
  if (n_valid == 0)
    throw std::runtime_error("mean_rows_masked: all positions masked");

  auto out = result_like({1, cols}, x->requires_grad);
  {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(cols);
    for (int r = 0; r < rows; ++r)
      if (valid[r]) acc += x->mat().row(r);
    out->mat().row(0) = acc / static_cast<double>(n_valid);
  }
  if (out->requires_grad) {
    tape.record(out, {x}, [x, out, valid, n_valid, rows] {
      const auto d = ConstMapRM(out->grad.data(), 1, out->cols());
      for (int r = 0; r < rows; ++r)
        if (valid[r])
          x->mat_grad().row(r) += d.row(0) / static_cast<double>(n_valid);
    });
  }
  return out;
}

Tensor multi_head_attention(Tape& tape, const Tensor& x,
                            const AttentionParams& params,
                            const std::vector<std::uint8_t>& key_mask,
                            int n_heads) {
  const int d = x->cols();
  if (n_heads < 1 || d % n_heads != 0)
    throw std::runtime_error(
        "multi_head_attention: embedding dim not divisible by head count");
  if (static_cast<int>(key_mask.size()) != x->rows())
    throw std::runtime_error("multi_head_attention: mask length disagrees");
  if (std::none_of(key_mask.begin(), key_mask.end(),
                   [](auto v) { return v != 0; }))
    throw std::runtime_error("multi_head_attention: all positions masked");

  const Tensor q = matmul_nt(tape, x, params.wq);
  const Tensor k = matmul_nt(tape, x, params.wk);
  const Tensor v = matmul_nt(tape, x, params.wv);

  const int head_dim = d / n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    const Tensor qh = slice_cols(tape, q, h * head_dim, head_dim);
    const Tensor kh = slice_cols(tape, k, h * head_dim, head_dim);
    const Tensor vh = slice_cols(tape, v, h * head_dim, head_dim);
    const Tensor scores =
        scale(tape, matmul_nt(tape, qh, kh), inv_sqrt_dh);
    const Tensor attn = softmax_rows(tape, scores, key_mask);
    heads.push_back(matmul(tape, attn, vh));
  }
  const Tensor merged = concat_cols(tape, heads);
  return matmul_nt(tape, merged, params.wo);
}

double finite_difference_check(
    const std::function<Tensor(Tape&, const Tensor&)>& f,
    const Eigen::ArrayXd& x0, const std::vector<int>& shape, double h) {
  if (!(h > 0.0)) throw std::runtime_error("step size must be positive");
  if (x0.size() != numel(shape))
    throw std::runtime_error("finite_difference_check: shape mismatch");

  Eigen::ArrayXd analytic(x0.size());
  {
    Tape tape;
    auto x = make_tensor(shape, true);
    x->value = x0;
    auto y = f(tape, x);
    if (y->size() != 1)
      throw std::runtime_error("finite_difference_check: f must be scalar");
    tape.backward(y);
    analytic = x->grad;
  }

  auto eval = [&](const Eigen::ArrayXd& values) {
    Tape tape;
    auto x = make_tensor(shape, false);
    x->value = values;
    return f(tape, x)->value[0];
  };

  double worst = 0.0;
  Eigen::ArrayXd probe = x0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    probe[i] = x0[i] + h;
    const double up = eval(probe);
    probe[i] = x0[i] - h;
    const double down = eval(probe);
    probe[i] = x0[i];
    const double numeric = (up - down) / (2.0 * h);
    const double denom =
        std::max(1e-12, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace neurowave::autograd
