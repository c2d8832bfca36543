#include <gtest/gtest.h>

#include <random>

#include "invbench/tensor.hpp"
#include "support/gradcheck.hpp"

namespace invbench::ad {
namespace {

using testing::grad_check;

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(r * c);
  for (auto& x : v) x = dist(rng);
  return Tensor::matrix(r, c, std::move(v), true);
}

TEST(TensorOps, MatmulIdentity) {
  const auto eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const auto col = Tensor::matrix(2, 1, {3.5, -2.0});
  const auto out = matmul(eye, col);
  EXPECT_EQ(out.shape(), (Shape{2, 1}));
  EXPECT_EQ(out.at(0, 0), 3.5);
  EXPECT_EQ(out.at(1, 0), -2.0);
}

TEST(TensorOps, ReluDefinition) {
  const auto out = relu(Tensor::from({3}, {-1, 0, 2}));
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()), (std::vector<double>{0, 0, 2}));
}

TEST(TensorOps, MeanOfSquares) { EXPECT_DOUBLE_EQ(mean(square(Tensor::from({2}, {1, 3}))).item(), 5.0); }

TEST(TensorOps, ShapeMismatchNamesOpAndShapes) {
  const auto a = Tensor::matrix(2, 3, std::vector<double>(6, 1.0));
  const auto b = Tensor::matrix(2, 1, {1, 1});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[2,1]"), std::string::npos);
  }
  EXPECT_THROW(add(Tensor::matrix(2, 3, std::vector<double>(6)), Tensor::matrix(3, 2, std::vector<double>(6))),
               ShapeError);
}

TEST(TensorBackward, SquareDerivative) {
  auto x = Tensor::scalar(3.0, true);
  backward(square(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(TensorBackward, ProductRule) {
  auto x = Tensor::scalar(2.0, true);
  auto y = Tensor::scalar(5.0, true);
  backward(x * y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 5.0);
  EXPECT_DOUBLE_EQ(y.grad()[0], 2.0);
}

TEST(TensorBackward, NonScalarLossRejected) {
  auto x = Tensor::row({1, 2}, true);
  EXPECT_THROW(backward(square(x)), ShapeError);
}

TEST(TensorBackward, GradientsOverwrittenNotAccumulated) {
  auto x = Tensor::scalar(3.0, true);
  backward(square(x));
  backward(square(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(TensorBackward, SharedSubexpressionAccumulatesWithinOneGraph) {
  auto x = Tensor::scalar(1.5, true);
  const auto y = x * x;
  backward(y + y);  // d/dx 2x^2 = 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(TensorBackward, NoGradGuardRecordsNothing) {
  auto x = Tensor::scalar(2.0, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = square(x);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_enabled());
}

// Every primitive op passes the central-difference oracle.
TEST(TensorGradCheck, EveryOp) {
  std::mt19937_64 rng(11);
  auto a = random_matrix(3, 4, rng);
  auto b = random_matrix(4, 2, rng);
  auto c = random_matrix(3, 4, rng);
  auto pos = random_matrix(3, 4, rng, 0.5, 2.0);
  auto row = random_matrix(1, 4, rng);
  auto gamma = random_matrix(1, 4, rng, 0.5, 1.5);
  const std::vector<std::size_t> perm{2, 0, 3, 1};

  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
      {"matmul", [&] { return sum(matmul(a, b)); }},
      {"add-broadcast", [&] { return sum(square(a + row)); }},
      {"sub", [&] { return sum(square(a - c)); }},
      {"mul", [&] { return sum(a * c * row); }},
      {"div", [&] { return sum(a / pos); }},
      {"relu", [&] { return sum(square(relu(a))); }},
      {"tanh", [&] { return sum(tanh(a)); }},
      {"exp", [&] { return mean(exp(a)); }},
      {"log", [&] { return sum(log(pos)); }},
      {"softplus", [&] { return sum(softplus(a * 3.0)); }},
      {"abs", [&] { return sum(abs(a)); }},
      {"row_sum", [&] { return sum(square(row_sum(a))); }},
      {"row_logsumexp", [&] { return sum(row_logsumexp(a * 2.0)); }},
      {"concat-slice", [&] { return sum(square(slice(concat({a, c}), 2, 7))); }},
      {"permute", [&] { return sum(permute_columns(a, perm) * c); }},
      {"batch_norm", [&] { return sum(square(batch_norm(a, gamma, row, 1e-5)) * c); }},
  };
  for (const auto& [name, fn] : cases) {
    const auto r = grad_check(fn, {a, b, c, pos, row, gamma});
    EXPECT_LT(r.max_rel_error, 1e-5) << name;
  }
}

TEST(TensorProgram, EvaluatesOpSequence) {
  auto x = Tensor::matrix(2, 2, {1, 2, 3, 4}, true);
  auto w = Tensor::matrix(2, 1, {0.5, -1}, true);
  const std::vector<Step> program = {
      {Op::MatMul, {0, 1}},
      {Op::Tanh, {2}},
      {Op::Square, {3}},
      {Op::Mean, {4}},
  };
  const std::vector<Tensor> inputs{x, w};
  const auto out = forward_graph(inputs, program);
  const double r0 = std::tanh(1 * 0.5 + 2 * -1.0), r1 = std::tanh(3 * 0.5 + 4 * -1.0);
  EXPECT_NEAR(out.item(), 0.5 * (r0 * r0 + r1 * r1), 1e-15);
  const auto check = grad_check([&] { return forward_graph(inputs, program); }, {x, w});
  EXPECT_LT(check.max_rel_error, 1e-6);
}

TEST(TensorProgram, ReportsOffendingOp) {
  const std::vector<Tensor> inputs{Tensor::matrix(2, 3, std::vector<double>(6)),
                                   Tensor::matrix(2, 2, std::vector<double>(4))};
  const std::vector<Step> program = {{Op::MatMul, {0, 1}}};
  try {
    forward_graph(inputs, program);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(TensorDeterminism, SameSequenceSameBits) {
  auto run = [] {
    std::mt19937_64 rng(5);
    auto a = random_matrix(8, 8, rng);
    auto b = random_matrix(8, 3, rng);
    const auto loss = mean(softplus(matmul(tanh(a), b)));
    backward(loss);
    std::vector<double> out{loss.item()};
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace invbench::ad
