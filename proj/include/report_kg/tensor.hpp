#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// Every operation that consumes a tensor with requires_grad() produces a
// result that remembers its inputs and a backward closure. backward(loss)
// records the reachable operations into a Tape in topological order and
// replays it in reverse, accumulating gradients into every tensor that
// requires them. Shapes are explicit: there is no broadcasting, and the
// matrix operations expect rank-2 tensors.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rkg {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // 1 x n row vector.
  static Tensor row(std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->value; }
  // Direct value access; intended for leaves (initialization, optimizers).
  std::span<double> mutable_data() { return node_->value; }
  // Empty until a backward pass touches this tensor.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();

  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad();
  bool is_leaf() const { return !node_->backward; }
  const char* op_name() const { return node_->op; }

  // Fresh leaf holding a copy of the values, without history.
  Tensor detach() const;
  // Fresh leaf with copied values, keeping requires_grad.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Operations reachable from a root, inputs strictly before their consumers.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::span<const std::shared_ptr<detail::Node>> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and walks the tape in exact reverse.
  void backward();

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

// Fills gradients of every requires_grad tensor reachable from a scalar loss.
// Leaf gradients accumulate across calls; call zero_grad() between steps.
void backward(const Tensor& loss);

// Per-element keep mask for masked softmax (1 = participate, 0 = masked out).
using Mask = std::vector<std::uint8_t>;

// ---- primitives --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// a: n x m, bias: 1 x m, added to every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);

// axis 0 stacks rows, axis 1 stacks columns (rank-2 inputs).
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);

Tensor exp(const Tensor& a);
// e^x - 1, accurate near zero.
Tensor expm1(const Tensor& a);
Tensor log(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor elu(const Tensor& a, double alpha = 1.0);
Tensor sigmoid(const Tensor& a);
// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& a);
// Gradient is zero where the input lies outside [lo, hi].
Tensor clamp(const Tensor& a, double lo, double hi);

// Softmax of a rank-2 tensor along axis. Masked entries get probability 0
// and zero gradient; a fully masked row/column is an error.
Tensor softmax(const Tensor& a, std::size_t axis, std::span<const std::uint8_t> mask = {});

// Max along axis (dimension kept as 1). Backward routes to the first argmax.
Tensor max_pool(const Tensor& a, std::size_t axis);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Inverted dropout. Identity when !train or rate == 0. The keep mask is a
// pure function of seed.
Tensor dropout(const Tensor& a, double rate, std::uint64_t seed, bool train);

// weights (n x k) times values (k x m). Each output element sums its nonzero
// terms ordered by (weight, value row), so relabelling the k inputs
// consistently leaves every output bit-identical.
Tensor aggregate_neighbors(const Tensor& weights, const Tensor& values);

// out[i] = a[index[i]]
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
// out[index[i]] += a[i], out has n_rows rows.
Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> index, std::size_t n_rows);

}  // namespace rkg
