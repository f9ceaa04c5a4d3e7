#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
// Every op records a closure that accumulates gradients into its parents;
// backward() replays the closures in reverse topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kinscope::ag {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node {
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  Shape shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::size_t size() const noexcept { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using Var = std::shared_ptr<Node>;

/// Disables graph recording on this thread for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

Var constant(std::vector<double> values, Shape shape);
Var parameter(std::vector<double> values, Shape shape);
Var scalar(double value);

/// Seeds d(root)/d(root) = 1 and propagates. Root must hold one element.
void backward(const Var& root);

// Dense algebra. Weights are stored [in, out] so y = x W + b.
Var matmul(const Var& a, const Var& b);
Var linear(const Var& x, const Var& weight, const Var& bias);
Var add(const Var& a, const Var& b);
/// x has trailing dims equal to e's shape; e is broadcast over leading dims.
Var add_broadcast(const Var& x, const Var& e);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var gelu(const Var& x);
Var tanh(const Var& x);
Var reshape(const Var& x, Shape shape);
/// [N, A, B] -> [N, B, A]
Var transpose_last2(const Var& x);
Var slice_rows(const Var& x, int begin, int end);
Var concat_rows(const std::vector<Var>& parts);
/// Stacks k vectors of length n into an [n, k] matrix.
Var stack_columns(const std::vector<Var>& columns);
Var select_column(const Var& x, int column);
Var sum_rows(const Var& x);
Var softmax_rows(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Sequence ops. Masks are constant byte vectors, 1 = valid.
/// x [N, Cin, L], w [Cout, Cin, K], b [Cout]; zero "same" padding, stride 1, odd K.
Var conv1d(const Var& x, const Var& weight, const Var& bias);
/// Multiplies x [N, C, L] by mask [N, L].
Var apply_mask(const Var& x, std::span<const std::uint8_t> mask);
/// Max over the token axis of x [N, C, L] restricted to valid positions.
/// Rows with no valid position pool to 0.
Var masked_max_pool(const Var& x, std::span<const std::uint8_t> mask);
/// Scaled dot-product attention. q, k, v are [B, T, D] split into `heads`
/// heads; keys with key_mask == 0 receive zero weight.
Var attention(const Var& q, const Var& k, const Var& v, int heads, std::span<const std::uint8_t> key_mask);

// Losses, all returning scalars.
/// Contrastive objective over 2n embeddings [2n, p] where row i pairs with
/// row i + n: -sum_i log(exp(e_i.e_{i+n}/t) / sum_{j != i} exp(e_i.e_j/t)).
Var contrastive_loss(const Var& embeddings, double temperature);
/// Weighted mean of -log(max(p[i, label_i], floor)); zero if all weights vanish.
Var nll_from_probs(const Var& probs, std::span<const int> labels, std::span<const double> weights,
                   double floor = 1e-12);
/// Mean binary cross-entropy on probabilities with a log floor.
Var bce_from_probs(const Var& probs, std::span<const int> targets, double floor = 1e-12);
Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights);

}  // namespace kinscope::ag
