#include "invbench/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace invbench::ad {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::string op;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's gradient into its parents' gradient buffers.
  std::function<void(Node&)> backward;

  std::size_t rows() const { return shape.size() == 1 ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() == 1 ? shape[0] : shape[1]; }
};

}  // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

std::atomic<std::uint64_t> next_id{1};
thread_local bool grad_mode = true;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ShapeError("tensor: rank must be 1 or 2, got shape " + to_string(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in shape " + to_string(shape));
  }
}

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != product(shape)) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                     to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->id = next_id.fetch_add(1, std::memory_order_relaxed);
  node->op = "leaf";
  return node;
}

// Builds an operation result. The graph edge is only recorded when gradient
// mode is on and at least one parent needs a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<NodePtr> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->id = next_id.fetch_add(1, std::memory_order_relaxed);
  node->op = op;
  const bool needs = grad_mode && std::any_of(parents.begin(), parents.end(),
                                              [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

const NodePtr& require(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor operand");
  return t.node();
}

// Gradient buffer of a parent, allocated on first touch.
std::vector<double>& grad_of(Node& n) {
  if (!n.has_grad) {
    n.grad.assign(n.value.size(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

struct Broadcast {
  std::size_t rows, cols;
  std::size_t ar, ac, br, bc;
  Shape shape;
};

Broadcast broadcast_shapes(const char* op, const Node& a, const Node& b) {
  Broadcast bc{};
  bc.ar = a.rows();
  bc.ac = a.cols();
  bc.br = b.rows();
  bc.bc = b.cols();
  auto fits = [](std::size_t x, std::size_t y) { return x == y || x == 1 || y == 1; };
  if (!fits(bc.ar, bc.br) || !fits(bc.ac, bc.bc)) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape) + " and " +
                     to_string(b.shape));
  }
  bc.rows = std::max(bc.ar, bc.br);
  bc.cols = std::max(bc.ac, bc.bc);
  if (a.shape == b.shape) {
    bc.shape = a.shape;
  } else if (bc.rows == bc.ar && bc.cols == bc.ac) {
    bc.shape = a.shape;
  } else if (bc.rows == bc.br && bc.cols == bc.bc) {
    bc.shape = b.shape;
  } else {
    bc.shape = {bc.rows, bc.cols};
  }
  return bc;
}

// Elementwise binary op with broadcasting. `df` returns (d out/d a, d out/d b).
template <typename F, typename DF>
Tensor binary(const char* op, const Tensor& ta, const Tensor& tb, F f, DF df) {
  const auto& a = require(ta, op);
  const auto& b = require(tb, op);
  const Broadcast bc = broadcast_shapes(op, *a, *b);
  std::vector<double> out(bc.rows * bc.cols);
  for (std::size_t i = 0; i < bc.rows; ++i) {
    const std::size_t ia = (bc.ar == 1 ? 0 : i) * bc.ac;
    const std::size_t ib = (bc.br == 1 ? 0 : i) * bc.bc;
    for (std::size_t j = 0; j < bc.cols; ++j) {
      out[i * bc.cols + j] = f(a->value[ia + (bc.ac == 1 ? 0 : j)], b->value[ib + (bc.bc == 1 ? 0 : j)]);
    }
  }
  return make_result(op, bc.shape, std::move(out), {a, b}, [bc, df](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    std::vector<double>* ga = pa.requires_grad ? &grad_of(pa) : nullptr;
    std::vector<double>* gb = pb.requires_grad ? &grad_of(pb) : nullptr;
    for (std::size_t i = 0; i < bc.rows; ++i) {
      const std::size_t ia = (bc.ar == 1 ? 0 : i) * bc.ac;
      const std::size_t ib = (bc.br == 1 ? 0 : i) * bc.bc;
      for (std::size_t j = 0; j < bc.cols; ++j) {
        const std::size_t ka = ia + (bc.ac == 1 ? 0 : j);
        const std::size_t kb = ib + (bc.bc == 1 ? 0 : j);
        const double g = self.grad[i * bc.cols + j];
        const auto [da, db] = df(pa.value[ka], pb.value[kb]);
        if (ga) (*ga)[ka] += g * da;
        if (gb) (*gb)[kb] += g * db;
      }
    }
  });
}

// Elementwise unary op. `df(x, y)` is the derivative given input and output.
template <typename F, typename DF>
Tensor unary(const char* op, const Tensor& tx, F f, DF df) {
  const auto& x = require(tx, op);
  std::vector<double> out(x->value.size());
  std::transform(x->value.begin(), x->value.end(), out.begin(), f);
  return make_result(op, x->shape, std::move(out), {x}, [df](Node& self) {
    Node& px = *self.parents[0];
    auto& gx = grad_of(px);
    for (std::size_t k = 0; k < self.value.size(); ++k) {
      gx[k] += self.grad[k] * df(px.value[k], self.value[k]);
    }
  });
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = product(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = product(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(make_leaf({rows, cols}, std::move(values), requires_grad));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor(make_leaf({1, n}, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({1, 1}, {value}, requires_grad));
}

std::uint64_t Tensor::id() const { return node_->id; }
const std::string& Tensor::op() const { return node_->op; }
const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return node_->rows(); }
std::size_t Tensor::cols() const { return node_->cols(); }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw ShapeError("at: index out of range");
  return node_->value[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return node_->has_grad; }
std::span<const double> Tensor::grad() const {
  if (!node_->has_grad) return {};
  return node_->grad;
}
void Tensor::clear_grad() {
  node_->has_grad = false;
  node_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor::from(shape(), node_->value, false); }
Tensor Tensor::clone() const { return Tensor::from(shape(), node_->value, node_->requires_grad); }

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }
bool grad_enabled() { return grad_mode; }

// --- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
  const auto& root = require(loss, "backward");
  if (root->value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(root->shape));
  }
  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    n->grad.assign(n->value.size(), 0.0);
    n->has_grad = true;
  }
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

// --- operations -------------------------------------------------------------

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  const auto& a = require(ta, "matmul");
  const auto& b = require(tb, "matmul");
  const std::size_t n = a->rows(), k = a->cols(), m = b->cols();
  if (b->rows() != k) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a->shape) + " and " +
                     to_string(b->shape));
  }
  std::vector<double> out(n * m);
  MapMatrix(out.data(), n, m).noalias() =
      ConstMapMatrix(a->value.data(), n, k) * ConstMapMatrix(b->value.data(), k, m);
  return make_result("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    ConstMapMatrix g(self.grad.data(), n, m);
    if (pa.requires_grad) {
      MapMatrix(grad_of(pa).data(), n, k).noalias() += g * ConstMapMatrix(pb.value.data(), k, m).transpose();
    }
    if (pb.requires_grad) {
      MapMatrix(grad_of(pb).data(), k, m).noalias() += ConstMapMatrix(pa.value.data(), n, k).transpose() * g;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("multiply", a, b, [](double x, double y) { return x * y; },
                [](double x, double y) { return std::pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary("div", a, b, [](double x, double y) { return x / y; },
                [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Tensor neg(const Tensor& x) {
  return unary("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](double v) { return factor * v; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary("add_scalar", x, [offset](double v) { return v + offset; },
               [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      "softplus", x,
      [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary("abs", x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& tx) {
  const auto& x = require(tx, "sum");
  const double total = std::accumulate(x->value.begin(), x->value.end(), 0.0);
  return make_result("sum", {1, 1}, {total}, {x}, [](Node& self) {
    auto& gx = grad_of(*self.parents[0]);
    for (auto& g : gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& tx) {
  const auto& x = require(tx, "mean");
  const double n = static_cast<double>(x->value.size());
  const double total = std::accumulate(x->value.begin(), x->value.end(), 0.0);
  return make_result("mean", {1, 1}, {total / n}, {x}, [n](Node& self) {
    auto& gx = grad_of(*self.parents[0]);
    for (auto& g : gx) g += self.grad[0] / n;
  });
}

Tensor row_sum(const Tensor& tx) {
  const auto& x = require(tx, "row_sum");
  const std::size_t r = x->rows(), c = x->cols();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i] += x->value[i * c + j];
  }
  return make_result("row_sum", {r, 1}, std::move(out), {x}, [r, c](Node& self) {
    auto& gx = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[i];
    }
  });
}

Tensor row_logsumexp(const Tensor& tx) {
  const auto& x = require(tx, "row_logsumexp");
  const std::size_t r = x->rows(), c = x->cols();
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x->value.data() + i * c;
    const double peak = *std::max_element(row, row + c);
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += std::exp(row[j] - peak);
    out[i] = peak + std::log(acc);
  }
  return make_result("row_logsumexp", {r, 1}, std::move(out), {x}, [r, c](Node& self) {
    Node& px = *self.parents[0];
    auto& gx = grad_of(px);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        gx[i * c + j] += self.grad[i] * std::exp(px.value[i * c + j] - self.value[i]);
      }
    }
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const std::size_t r = require(parts[0], "concat")->rows();
  std::size_t total = 0;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const auto& node = require(p, "concat");
    if (node->rows() != r) {
      std::string shapes;
      for (const auto& q : parts) shapes += " " + to_string(q.shape());
      throw ShapeError("concat: row counts differ across shapes" + shapes);
    }
    parents.push_back(node);
    widths.push_back(node->cols());
    total += node->cols();
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parents.size(); ++p) {
    const std::size_t w = widths[p];
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(parents[p]->value.data() + i * w, w, out.data() + i * total + offset);
    }
    offset += w;
  }
  return make_result("concat", {r, total}, std::move(out), std::move(parents),
                     [r, total, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < widths.size(); ++p) {
                         Node& parent = *self.parents[p];
                         const std::size_t w = widths[p];
                         if (parent.requires_grad) {
                           auto& g = grad_of(parent);
                           for (std::size_t i = 0; i < r; ++i) {
                             for (std::size_t j = 0; j < w; ++j) {
                               g[i * w + j] += self.grad[i * total + off + j];
                             }
                           }
                         }
                         off += w;
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice(const Tensor& tx, std::size_t col_begin, std::size_t col_end) {
  const auto& x = require(tx, "slice");
  const std::size_t r = x->rows(), c = x->cols();
  if (col_begin >= col_end || col_end > c) {
    throw ShapeError("slice: columns [" + std::to_string(col_begin) + "," + std::to_string(col_end) +
                     ") out of range for shape " + to_string(x->shape));
  }
  const std::size_t w = col_end - col_begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(x->value.data() + i * c + col_begin, w, out.data() + i * w);
  }
  return make_result("slice", {r, w}, std::move(out), {x}, [r, c, w, col_begin](Node& self) {
    auto& gx = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) gx[i * c + col_begin + j] += self.grad[i * w + j];
    }
  });
}

Tensor permute_columns(const Tensor& tx, std::span<const std::size_t> perm) {
  const auto& x = require(tx, "permute_columns");
  const std::size_t r = x->rows(), c = x->cols();
  if (perm.size() != c) {
    throw ShapeError("permute_columns: permutation of length " + std::to_string(perm.size()) +
                     " for shape " + to_string(x->shape));
  }
  std::vector<bool> seen(c, false);
  for (auto p : perm) {
    if (p >= c || seen[p]) throw ShapeError("permute_columns: not a permutation");
    seen[p] = true;
  }
  std::vector<std::size_t> idx(perm.begin(), perm.end());
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x->value[i * c + idx[j]];
  }
  return make_result("permute_columns", {r, c}, std::move(out), {x}, [r, c, idx](Node& self) {
    auto& gx = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + idx[j]] += self.grad[i * c + j];
    }
  });
}

Tensor batch_norm(const Tensor& tx, const Tensor& tgamma, const Tensor& tbeta, double eps,
                  std::vector<double>* batch_mean, std::vector<double>* batch_var) {
  const auto& x = require(tx, "batch_norm");
  const auto& gamma = require(tgamma, "batch_norm");
  const auto& beta = require(tbeta, "batch_norm");
  const std::size_t n = x->rows(), c = x->cols();
  if (gamma->value.size() != c || beta->value.size() != c) {
    throw ShapeError("batch_norm: scale/shift shapes " + to_string(gamma->shape) + ", " +
                     to_string(beta->shape) + " do not match input " + to_string(x->shape));
  }
  if (n < 2) {
    throw ShapeError("batch_norm: batch of " + std::to_string(n) +
                     " row(s) has undefined variance in training mode");
  }
  std::vector<double> mu(c, 0.0), var(c, 0.0), inv_std(c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) mu[j] += x->value[i * c + j];
  }
  for (auto& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x->value[i * c + j] - mu[j];
      var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < c; ++j) {
    var[j] /= static_cast<double>(n);
    inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  }
  std::vector<double> xhat(n * c), out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t k = i * c + j;
      xhat[k] = (x->value[k] - mu[j]) * inv_std[j];
      out[k] = gamma->value[j] * xhat[k] + beta->value[j];
    }
  }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return make_result(
      "batch_norm", x->shape, std::move(out), {x, gamma, beta},
      [n, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t k = i * c + j;
            sum_g[j] += self.grad[k];
            sum_gx[j] += self.grad[k] * xhat[k];
          }
        }
        if (pg.requires_grad) {
          auto& g = grad_of(pg);
          for (std::size_t j = 0; j < c; ++j) g[j] += sum_gx[j];
        }
        if (pb.requires_grad) {
          auto& g = grad_of(pb);
          for (std::size_t j = 0; j < c; ++j) g[j] += sum_g[j];
        }
        if (px.requires_grad) {
          auto& g = grad_of(px);
          const double nn = static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              const std::size_t k = i * c + j;
              const double gam = pg.value[j];
              g[k] += gam * inv_std[j] / nn *
                      (nn * self.grad[k] - sum_g[j] - xhat[k] * sum_gx[j]);
            }
          }
        }
      });
}

// --- programs ---------------------------------------------------------------

const char* op_name(Op op) {
  switch (op) {
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Multiply: return "multiply";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Square: return "square";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Softplus: return "softplus";
  }
  return "unknown";
}

Tensor forward_graph(std::span<const Tensor> inputs, std::span<const Step> program) {
  if (program.empty()) throw ShapeError("forward_graph: empty program");
  std::vector<Tensor> values(inputs.begin(), inputs.end());
  for (const auto& step : program) {
    const char* name = op_name(step.op);
    for (auto a : step.args) {
      if (a >= values.size()) {
        throw ShapeError(std::string("forward_graph: ") + name + " argument " + std::to_string(a) +
                         " refers to a value not yet computed");
      }
    }
    auto arity = [&](std::size_t n) {
      if (step.args.size() != n) {
        throw ShapeError(std::string("forward_graph: ") + name + " expects " + std::to_string(n) +
                         " argument(s), got " + std::to_string(step.args.size()));
      }
    };
    const auto arg = [&](std::size_t i) -> const Tensor& { return values[step.args[i]]; };
    Tensor out;
    switch (step.op) {
      case Op::MatMul: arity(2); out = matmul(arg(0), arg(1)); break;
      case Op::Add: arity(2); out = add(arg(0), arg(1)); break;
      case Op::Multiply: arity(2); out = mul(arg(0), arg(1)); break;
      case Op::Relu: arity(1); out = relu(arg(0)); break;
      case Op::Tanh: arity(1); out = tanh(arg(0)); break;
      case Op::Exp: arity(1); out = exp(arg(0)); break;
      case Op::Log: arity(1); out = log(arg(0)); break;
      case Op::Sum: arity(1); out = sum(arg(0)); break;
      case Op::Mean: arity(1); out = mean(arg(0)); break;
      case Op::Square: arity(1); out = square(arg(0)); break;
      case Op::Softplus: arity(1); out = softplus(arg(0)); break;
      case Op::Slice: arity(1); out = slice(arg(0), step.begin, step.end); break;
      case Op::Concat: {
        if (step.args.empty()) throw ShapeError("forward_graph: concat needs operands");
        std::vector<Tensor> parts;
        for (auto a : step.args) parts.push_back(values[a]);
        out = concat(parts);
        break;
      }
    }
    values.push_back(std::move(out));
  }
  return values.back();
}

}  // namespace invbench::ad
