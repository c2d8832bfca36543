#pragma once

// Minimal define-by-run reverse-mode automatic differentiation over dense
// row-major float64 tensors.
//
// Every operation works on the "matrix view" of its operands: a rank-1 tensor
// of length n behaves as a 1 x n row, a rank-2 tensor as rows x cols. Binary
// elementwise operations broadcast along any dimension of extent 1.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "invbench/errors.hpp"

namespace invbench::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  std::uint64_t id() const;
  const std::string& op() const;

  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  // Direct write access, meant for leaves (parameters, optimized inputs).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void clear_grad();

  // A fresh leaf holding a copy of the values, cut from any graph.
  Tensor detach() const;
  // A new leaf with copied values that keeps this tensor's requires_grad flag.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Computes d(loss)/d(leaf) for every leaf reachable from `loss` that requires
// a gradient. Gradients of all nodes in the graph are overwritten, never
// accumulated across calls.
void backward(const Tensor& loss);

// --- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);

// Reductions. `sum` and `mean` return a 1 x 1 tensor; `row_sum` and
// `row_logsumexp` reduce over columns and return rows x 1.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor row_sum(const Tensor& x);
Tensor row_logsumexp(const Tensor& x);

// Column-wise structure.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
Tensor slice(const Tensor& x, std::size_t col_begin, std::size_t col_end);
// y[:, j] = x[:, perm[j]]
Tensor permute_columns(const Tensor& x, std::span<const std::size_t> perm);

// Training-mode batch normalization over rows. Writes the batch mean and the
// biased batch variance per column when the output pointers are non-null.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  std::vector<double>* batch_mean = nullptr,
                  std::vector<double>* batch_var = nullptr);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(const Tensor& x, double c) { return scale(x, c); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }
inline Tensor operator+(const Tensor& x, double c) { return add_scalar(x, c); }
inline Tensor operator-(const Tensor& x, double c) { return add_scalar(x, -c); }

// --- op programs ----------------------------------------------------------

enum class Op {
  MatMul,
  Add,
  Multiply,
  Relu,
  Tanh,
  Exp,
  Log,
  Sum,
  Mean,
  Square,
  Concat,
  Slice,
  Softplus,
};

const char* op_name(Op op);

// One instruction of a program. `args` index into the value list, which starts
// with the program inputs and grows by one entry per executed step.
struct Step {
  Op op;
  std::vector<std::size_t> args;
  std::size_t begin = 0;  // Slice only
  std::size_t end = 0;    // Slice only
};

// Evaluates a straight-line op sequence, recording the graph, and returns the
// value produced by the last step.
Tensor forward_graph(std::span<const Tensor> inputs, std::span<const Step> program);

}  // namespace invbench::ad
