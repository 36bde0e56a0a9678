#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nilm::ad {

using Shape = std::vector<std::size_t>;

/// Dense row-major tensor of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rows() const noexcept { return shape.empty() ? 1 : shape.front(); }
  std::size_t cols() const noexcept { return shape.size() < 2 ? 1 : size() / rows(); }
};

std::size_t shape_size(const Shape& s) noexcept;

struct Node {
  Tensor value;
  std::vector<double> grad;  // empty until something flows back
  std::function<void()> backward;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using Var = std::shared_ptr<Node>;

/// Leaf that accumulates gradients across graphs.
Var parameter(Tensor value);

/// Records operations on 2-D values (rows x cols) for one forward pass and
/// replays them in reverse. A graph supports a single backward call, after
/// which its intermediate nodes are released.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);

  /// a[m,k] * b[k,n]
  Var matmul(const Var& a, const Var& b);
  /// a[m,n] + bias[n] broadcast over rows
  Var add_bias(const Var& a, const Var& bias);
  Var add(const Var& a, const Var& b);
  Var mul(const Var& a, const Var& b);
  Var sum(const Var& a);
  Var relu(const Var& a);
  Var sigmoid(const Var& a);

  /// Valid 1-D convolution. `x` is [batch*length, c_in] (time-major per
  /// sample), `w` is [kernel*c_in, c_out], `b` is [c_out]. Result is
  /// [batch*(length-kernel+1), c_out].
  Var conv1d(const Var& x, const Var& w, const Var& b, std::size_t batch, std::size_t length, std::size_t kernel);

  /// Column-wise concatenation of equal-row matrices.
  Var concat_cols(const std::vector<Var>& parts);

  /// x[batch*length, d] + pos[offset + t] for each sample's step t.
  Var add_positions(const Var& x, const Var& pos, std::size_t batch, std::size_t length, std::size_t offset);

  /// Scaled dot-product multi-head self-attention core: softmax(QK^T/sqrt(dh))V
  /// per sample and head. q, k, v are [batch*length, d]. When `probs_out` is
  /// given it receives the attention weights laid out [batch][head][i][j].
  Var attention(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t length, std::size_t heads,
                std::vector<double>* probs_out = nullptr);

  /// Per-row normalization with learned scale and shift.
  Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

  /// Row `index` of each sample block: x[batch*length, d] -> [batch, d].
  Var gather_rows(const Var& x, std::size_t batch, std::size_t length, std::size_t index);

  /// Mean Bernoulli negative log-likelihood of `probs` against 0/1 truth.
  Var bce_mean(const Var& probs, std::span<const double> truth);

  /// Reverse sweep from a scalar. Throws StateError when nothing was
  /// recorded, the graph was already consumed, or `loss` is not a scalar
  /// produced by this graph.
  void backward(const Var& loss);

  std::size_t size() const noexcept { return tape_.size(); }

 private:
  Var record(Tensor value, bool requires_grad);

  std::vector<Var> tape_;
  bool consumed_ = false;
};

}  // namespace nilm::ad
