#include "report_kg/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "report_kg/errors.hpp"
#include "report_kg/rng.hpp"

namespace rkg {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Node& n) {
  return ConstMap(n.value.data(), static_cast<Eigen::Index>(n.shape[0]),
                  static_cast<Eigen::Index>(n.shape[1]));
}

void require_rank2(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Creates the output node; history is kept only when some input needs grads.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<NodePtr> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const NodePtr& n) { return n->requires_grad; });
  if (any) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Elementwise unary op with derivative expressed through (x, y).
template <typename F, typename D>
Tensor unary(const char* op, const Tensor& a, F f, D dfdx) {
  const auto& x = a.node()->value;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_result(op, a.shape(), std::move(y), {a.node()}, [dfdx](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * dfdx(in.value[i], self.value[i]);
    }
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> data, bool requires_grad) {
  const std::size_t n = data.size();
  return from_data({1, n}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2");
  return node_->shape[1];
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item(): tensor has " + std::to_string(size()) + " elements");
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value[r * cols() + c];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from_data(shape(), node_->value, false); }

Tensor Tensor::clone() const { return from_data(shape(), node_->value, requires_grad()); }

// ---- Tape --------------------------------------------------------------

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined()) return tape;
  // Iterative post-order DFS; a node is emitted after all of its inputs.
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    tape.nodes_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

void Tape::backward() {
  if (nodes_.empty()) return;
  // Interior gradients are per-pass scratch space.
  for (auto& n : nodes_) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  Node& root = *nodes_.back();
  root.ensure_grad();
  root.grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.backward) n.backward(n);
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar");
  }
  if (!loss.requires_grad()) return;
  Tape::record(loss).backward();
}

// ---- linear algebra ----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.rows(), m = b.cols();
  std::vector<double> out(n * m);
  MutMap(out.data(), n, m).noalias() = as_matrix(*a.node()) * as_matrix(*b.node());
  return make_result("matmul", {n, m}, std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& w = *self.inputs[1];
    ConstMap dy(self.grad.data(), self.shape[0], self.shape[1]);
    if (x.requires_grad) {
      x.ensure_grad();
      MutMap(x.grad.data(), x.shape[0], x.shape[1]).noalias() += dy * as_matrix(w).transpose();
    }
    if (w.requires_grad) {
      w.ensure_grad();
      MutMap(w.grad.data(), w.shape[0], w.shape[1]).noalias() += as_matrix(x).transpose() * dy;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  MutMap(out.data(), c, r) = as_matrix(*a.node()).transpose();
  return make_result("transpose", {c, r}, std::move(out), {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    ConstMap dy(self.grad.data(), self.shape[0], self.shape[1]);
    MutMap(x.grad.data(), x.shape[0], x.shape[1]) += dy.transpose();
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return make_result("reshape", std::move(shape), a.node()->value, {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    x.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i];
  });
}

// ---- elementwise binary ------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      in->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& l = *self.inputs[0];
    Node& r = *self.inputs[1];
    if (l.requires_grad) {
      l.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) l.grad[i] += self.grad[i];
    }
    if (r.requires_grad) {
      r.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) r.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto& x = a.node()->value;
  const auto& y = b.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& l = *self.inputs[0];
    Node& r = *self.inputs[1];
    if (l.requires_grad) {
      l.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) l.grad[i] += self.grad[i] * r.value[i];
    }
    if (r.requires_grad) {
      r.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) r.grad[i] += self.grad[i] * l.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double x) { return x + value; },
               [](double, double) { return 1.0; });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_rank2(a, "add_bias");
  require_rank2(bias, "add_bias");
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                     shape_str(a.shape()));
  }
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(a.node()->value);
  const auto& b = bias.node()->value;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += b[c];
  return make_result("add_bias", a.shape(), std::move(out), {a.node(), bias.node()},
                     [n, m](Node& self) {
                       Node& x = *self.inputs[0];
                       Node& b = *self.inputs[1];
                       if (x.requires_grad) {
                         x.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i];
                       }
                       if (b.requires_grad) {
                         b.ensure_grad();
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t c = 0; c < m; ++c) b.grad[c] += self.grad[r * m + c];
                       }
                     });
}

// ---- structural --------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank2(p, "concat");
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const std::size_t f = axis == 0 ? p.cols() : p.rows();
    if (f != fixed) throw ShapeError("concat: incompatible shape " + shape_str(p.shape()));
    extents.push_back(axis == 0 ? p.rows() : p.cols());
    total += extents.back();
  }
  const std::size_t rows = axis == 0 ? total : fixed;
  const std::size_t cols = axis == 0 ? fixed : total;
  std::vector<double> out(rows * cols);
  std::vector<NodePtr> inputs;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].node()->value;
    const std::size_t pr = parts[k].rows(), pc = parts[k].cols();
    for (std::size_t r = 0; r < pr; ++r)
      for (std::size_t c = 0; c < pc; ++c) {
        const std::size_t orow = axis == 0 ? r + offset : r;
        const std::size_t ocol = axis == 0 ? c : c + offset;
        out[orow * cols + ocol] = v[r * pc + c];
      }
    offset += extents[k];
    inputs.push_back(parts[k].node());
  }
  return make_result("concat", {rows, cols}, std::move(out), std::move(inputs),
                     [axis, cols](Node& self) {
                       std::size_t offset = 0;
                       for (auto& in : self.inputs) {
                         const std::size_t pr = in->shape[0], pc = in->shape[1];
                         if (in->requires_grad) {
                           in->ensure_grad();
                           for (std::size_t r = 0; r < pr; ++r)
                             for (std::size_t c = 0; c < pc; ++c) {
                               const std::size_t orow = axis == 0 ? r + offset : r;
                               const std::size_t ocol = axis == 0 ? c : c + offset;
                               in->grad[r * pc + c] += self.grad[orow * cols + ocol];
                             }
                         }
                         offset += axis == 0 ? pr : pc;
                       }
                     });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_rows");
  if (begin >= end || end > a.rows()) {
    throw ShapeError("slice_rows: invalid range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") for " + shape_str(a.shape()));
  }
  const std::size_t m = a.cols();
  const auto& v = a.node()->value;
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin * m),
                          v.begin() + static_cast<std::ptrdiff_t>(end * m));
  return make_result("slice_rows", {end - begin, m}, std::move(out), {a.node()},
                     [begin, m](Node& self) {
                       Node& x = *self.inputs[0];
                       if (!x.requires_grad) return;
                       x.ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         x.grad[begin * m + i] += self.grad[i];
                     });
}

// ---- elementwise unary -------------------------------------------------

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor expm1(const Tensor& a) {
  return unary("expm1", a, [](double x) { return std::expm1(x); },
               [](double, double y) { return y + 1.0; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& a, double alpha) {
  return unary("elu", a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
               [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a,
               [](double x) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary("softplus", a,
               [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](double x, double) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---- reductions --------------------------------------------------------

Tensor softmax(const Tensor& a, std::size_t axis, std::span<const std::uint8_t> mask) {
  require_rank2(a, "softmax");
  if (axis > 1) throw ShapeError("softmax: axis must be 0 or 1");
  if (!mask.empty() && mask.size() != a.size()) {
    throw ShapeError("softmax: mask size " + std::to_string(mask.size()) + " does not match " +
                     shape_str(a.shape()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  const std::size_t lanes = axis == 1 ? rows : cols;
  const std::size_t len = axis == 1 ? cols : rows;
  auto index = [=](std::size_t lane, std::size_t k) {
    return axis == 1 ? lane * cols + k : k * cols + lane;
  };
  const auto& x = a.node()->value;
  std::vector<double> y(x.size(), 0.0);
  std::vector<double> terms;
  terms.reserve(len);
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t i = index(lane, k);
      if (!mask.empty() && !mask[i]) continue;
      mx = std::max(mx, x[i]);
      any = true;
    }
    if (!any) throw ShapeError("softmax: fully masked " + std::string(axis == 1 ? "row " : "column ") +
                               std::to_string(lane));
    // Summed in sorted order so the result does not depend on element order.
    terms.clear();
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t i = index(lane, k);
      if (!mask.empty() && !mask[i]) continue;
      y[i] = std::exp(x[i] - mx);
      terms.push_back(y[i]);
    }
    std::sort(terms.begin(), terms.end());
    double z = 0.0;
    for (double t : terms) z += t;
    for (std::size_t k = 0; k < len; ++k) y[index(lane, k)] /= z;
  }
  return make_result("softmax", a.shape(), std::move(y), {a.node()},
                     [lanes, len, index](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       in.ensure_grad();
                       // Masked entries have y = 0, so their gradient vanishes.
                       for (std::size_t lane = 0; lane < lanes; ++lane) {
                         double dot = 0.0;
                         for (std::size_t k = 0; k < len; ++k) {
                           const std::size_t i = index(lane, k);
                           dot += self.value[i] * self.grad[i];
                         }
                         for (std::size_t k = 0; k < len; ++k) {
                           const std::size_t i = index(lane, k);
                           in.grad[i] += self.value[i] * (self.grad[i] - dot);
                         }
                       }
                     });
}

Tensor max_pool(const Tensor& a, std::size_t axis) {
  require_rank2(a, "max_pool");
  if (axis > 1) throw ShapeError("max_pool: axis must be 0 or 1");
  const std::size_t rows = a.rows(), cols = a.cols();
  if (rows == 0 || cols == 0) throw ShapeError("max_pool: empty input");
  const auto& x = a.node()->value;
  const std::size_t lanes = axis == 0 ? cols : rows;
  const std::size_t len = axis == 0 ? rows : cols;
  std::vector<double> out(lanes);
  std::vector<std::size_t> argmax(lanes);
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    std::size_t best = axis == 0 ? lane : lane * cols;
    for (std::size_t k = 1; k < len; ++k) {
      const std::size_t i = axis == 0 ? k * cols + lane : lane * cols + k;
      if (x[i] > x[best]) best = i;
    }
    argmax[lane] = best;
    out[lane] = x[best];
  }
  Shape shape = axis == 0 ? Shape{1, cols} : Shape{rows, 1};
  return make_result("max_pool", std::move(shape), std::move(out), {a.node()},
                     [argmax = std::move(argmax)](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       in.ensure_grad();
                       for (std::size_t lane = 0; lane < argmax.size(); ++lane)
                         in.grad[argmax[lane]] += self.grad[lane];
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.node()->value) s += v;
  return make_result("sum", {}, {s}, {a.node()}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (double& g : in.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.node()->value) s += v;
  return make_result("mean", {}, {s / n}, {a.node()}, [n](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (double& g : in.grad) g += self.grad[0] / n;
  });
}

// ---- stochastic / indexing ---------------------------------------------

Tensor dropout(const Tensor& a, double rate, std::uint64_t seed, bool train) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  Rng rng(seed);
  const double keep = 1.0 - rate;
  const auto& x = a.node()->value;
  std::vector<double> factor(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    factor[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
    out[i] = x[i] * factor[i];
  }
  return make_result("dropout", a.shape(), std::move(out), {a.node()},
                     [factor = std::move(factor)](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       in.ensure_grad();
                       for (std::size_t i = 0; i < factor.size(); ++i)
                         in.grad[i] += self.grad[i] * factor[i];
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require_rank2(a, "gather_rows");
  const std::size_t m = a.cols();
  const auto& x = a.node()->value;
  std::vector<double> out(index.size() * m);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(index[i] * m), m,
                out.begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result("gather_rows", {index.size(), m}, std::move(out), {a.node()},
                     [idx = std::move(idx), m](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       in.ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t c = 0; c < m; ++c)
                           in.grad[idx[i] * m + c] += self.grad[i * m + c];
                     });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> index, std::size_t n_rows) {
  require_rank2(a, "scatter_add_rows");
  if (index.size() != a.rows()) throw ShapeError("scatter_add_rows: one index per input row");
  const std::size_t m = a.cols();
  const auto& x = a.node()->value;
  std::vector<double> out(n_rows * m, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n_rows) throw ShapeError("scatter_add_rows: index out of range");
    for (std::size_t c = 0; c < m; ++c) out[index[i] * m + c] += x[i * m + c];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result("scatter_add_rows", {n_rows, m}, std::move(out), {a.node()},
                     [idx = std::move(idx), m](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       in.ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t c = 0; c < m; ++c)
                           in.grad[i * m + c] += self.grad[idx[i] * m + c];
                     });
}

Tensor aggregate_neighbors(const Tensor& weights, const Tensor& values) {
  require_rank2(weights, "aggregate_neighbors");
  require_rank2(values, "aggregate_neighbors");
  const std::size_t n = weights.rows(), m = values.cols();
  if (weights.cols() != values.rows()) {
    throw ShapeError("aggregate_neighbors: inner dimensions differ " + shape_str(weights.shape()) +
                     " x " + shape_str(values.shape()));
  }
  const std::size_t k = weights.cols();
  const auto& w = weights.node()->value;
  const auto& v = values.node()->value;
  auto row_less = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(v.begin() + static_cast<std::ptrdiff_t>(a * m),
                                        v.begin() + static_cast<std::ptrdiff_t>((a + 1) * m),
                                        v.begin() + static_cast<std::ptrdiff_t>(b * m),
                                        v.begin() + static_cast<std::ptrdiff_t>((b + 1) * m));
  };
  std::vector<double> out(n * m, 0.0);
  std::vector<std::size_t> order;
  order.reserve(k);
  for (std::size_t p = 0; p < n; ++p) {
    // Terms are visited by (weight, value row), which relabelling cannot change.
    order.clear();
    for (std::size_t q = 0; q < k; ++q)
      if (w[p * k + q] != 0.0) order.push_back(q);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double wa = w[p * k + a], wb = w[p * k + b];
      if (wa != wb) return wa < wb;
      return row_less(a, b);
    });
    double* dst = out.data() + p * m;
    for (std::size_t q : order) {
      const double wq = w[p * k + q];
      const double* src = v.data() + q * m;
      for (std::size_t c = 0; c < m; ++c) dst[c] += wq * src[c];
    }
  }
  return make_result("aggregate_neighbors", {n, m}, std::move(out), {weights.node(), values.node()},
                     [](Node& self) {
                       Node& a = *self.inputs[0];
                       Node& b = *self.inputs[1];
                       ConstMap dy(self.grad.data(), self.shape[0], self.shape[1]);
                       if (a.requires_grad) {
                         a.ensure_grad();
                         MutMap(a.grad.data(), a.shape[0], a.shape[1]).noalias() +=
                             dy * as_matrix(b).transpose();
                       }
                       if (b.requires_grad) {
                         b.ensure_grad();
                         MutMap(b.grad.data(), b.shape[0], b.shape[1]).noalias() +=
                             as_matrix(a).transpose() * dy;
                       }
                     });
}

}  // namespace rkg
