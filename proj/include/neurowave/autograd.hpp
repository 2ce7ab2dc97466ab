#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurowave/rng.hpp"

namespace neurowave::autograd {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

// Dense tensor node: row-major 64-bit values plus a same-shape gradient
// accumulator (allocated when requires_grad is set). Rank is the shape
// length; most operations view rank-2 tensors through Eigen maps.
struct TensorData {
  std::vector<int> shape;
  Eigen::ArrayXd value;
  Eigen::ArrayXd grad;
  bool requires_grad{false};

  std::int64_t size() const { return value.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;

  MapRM mat() { return {value.data(), rows(), cols()}; }
  ConstMapRM mat() const { return {value.data(), rows(), cols()}; }
  MapRM mat_grad() { return {grad.data(), rows(), cols()}; }

  void zero_grad() {
    if (requires_grad) grad.setZero();
  }
};

using Tensor = std::shared_ptr<TensorData>;

Tensor make_tensor(std::vector<int> shape, bool requires_grad);
Tensor tensor_from(const Eigen::MatrixXd& values, bool requires_grad);
std::int64_t numel(const std::vector<int>& shape);

// Define-by-run tape: operations record backward closures in execution
// order; backward() replays them in exact reverse and sums gradients into
// every tensor used more than once. A tape is confined to one worker.
class Tape {
 public:
  void record(const Tensor& out, std::vector<Tensor> inputs,
              std::function<void()> backward_step);

  // Seeds d(loss)/d(loss) = 1 and runs the recorded steps in reverse.
  void backward(const Tensor& loss);

  // Zeroes the gradient of every tensor touched by this tape (leaves
  // included), so reset-then-backward is reproducible.
  void zero_all_grads();

  void clear();
  std::size_t node_count() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
  std::vector<Tensor> touched_;
};

// Elementwise and linear-algebra primitives. Each returns a fresh tensor and,
// when any input carries requires_grad, records its backward rule on the
// tape. Shapes are validated eagerly.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);
Tensor relu(Tape& tape, const Tensor& a);
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
// x (R x in) * W^T (in x out) + row-broadcast bias -> R x out.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias);
Tensor slice_cols(Tape& tape, const Tensor& a, int first, int count);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
Tensor sum_all(Tape& tape, const Tensor& a);

// Cross-correlation over time with zero padding of (K-1)/2 per side; input
// C_in x T, kernels C_out x C_in x K (K odd), bias C_out, output C_out x T.
Tensor conv1d_same(Tape& tape, const Tensor& x, const Tensor& kernels,
                   const Tensor& bias);

// Per-row standardization then affine; eps sits inside the square root.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& shift, double eps = 1e-5);

// Row softmax over the valid columns; masked columns get zero weight exactly.
// valid must flag at least one column.
Tensor softmax_rows(Tape& tape, const Tensor& x,
                    const std::vector<std::uint8_t>& valid);
Tensor softmax_rows(Tape& tape, const Tensor& x);

// Mean cross-entropy of logits (B x C) against class indices, computed via
// max-subtracted log-sum-exp. Backward is (softmax - one_hot) / B.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                             const std::vector<int>& targets);

// Inverted dropout: zero with probability p and scale survivors by 1/(1-p)
// in train mode; identity in eval mode or at p = 0.
Tensor dropout(Tape& tape, const Tensor& x, double p, bool train, Rng* rng);

// Mean over the rows flagged valid -> 1 x d.
Tensor mean_rows_masked(Tape& tape, const Tensor& x,
                        const std::vector<std::uint8_t>& valid);

// The four projection matrices (each d x d). Projections carry no bias: a
// key-side bias shifts every logit in a softmax row equally, so it could
// never train.
struct AttentionParams {
  Tensor wq, wk, wv, wo;
};

// Scaled dot-product attention with n_heads column-block heads over x (T x d);
// masked key positions receive -inf logits before the softmax. Composed from
// taped primitives, so its gradient follows from their rules.
Tensor multi_head_attention(Tape& tape, const Tensor& x,
                            const AttentionParams& params,
                            const std::vector<std::uint8_t>& key_mask,
                            int n_heads);

// Builds f on a fresh tape, backpropagates, then compares the analytic
// gradient against central differences per element. Returns the maximum
// relative error |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
double finite_difference_check(
    const std::function<Tensor(Tape&, const Tensor&)>& f,
    const Eigen::ArrayXd& x0, const std::vector<int>& shape, double h = 1e-5);

}  // namespace neurowave::autograd
