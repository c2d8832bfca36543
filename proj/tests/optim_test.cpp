#include <gtest/gtest.h>

#include <cmath>

#include "invbench/optim.hpp"

namespace invbench::optim {
namespace {

using ad::Tensor;

std::vector<nn::NamedParameter> single(const Tensor& t) { return {{"x", t}}; }

TEST(Adam, ZeroGradientLeavesParameters) {
  auto x = Tensor::row({1.0, -2.0}, true);
  Adam adam(single(x), {.lr = 0.1});
  ad::backward(ad::sum(x * 0.0));
  adam.step();
  EXPECT_EQ(x.values()[0], 1.0);
  EXPECT_EQ(x.values()[1], -2.0);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  auto x = Tensor::scalar(1.0, true);
  Adam adam(single(x), {.lr = 0.1, .eps = 1e-8});
  ad::backward(x * 2.0);  // grad 2
  adam.step();
  // m_hat = 2, v_hat = 4: update = 0.1 * 2 / (2 + 1e-8)
  EXPECT_NEAR(x.item(), 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(x.item(), 0.9, 1e-8);
}

TEST(Adam, QuadraticLossDecreases) {
  auto x = Tensor::scalar(3.0, true);
  Adam adam(single(x), {.lr = 0.1});
  double last = 9.0;
  for (int i = 0; i < 2; ++i) {
    ad::backward(ad::square(x));
    adam.step();
    const double now = x.item() * x.item();
    EXPECT_LT(now, last);
    last = now;
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  auto x = Tensor::scalar(0.0, true);
  Adam adam({{"layer0.weight", x}}, {});
  ad::backward(ad::log(x));
  try {
    adam.step();
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer0.weight"), std::string::npos);
  }
}

TEST(Plateau, DecaysAfterPatience) {
  PlateauScheduler s(0.1, {.patience = 2, .factor = 0.5});
  s.step(1.0);
  s.step(1.0);
  EXPECT_DOUBLE_EQ(s.learning_rate(), 0.1);
  EXPECT_TRUE(s.step(1.0));
  EXPECT_DOUBLE_EQ(s.learning_rate(), 0.05);
}

TEST(Plateau, StrictlyDecreasingNeverDecays) {
  PlateauScheduler s(0.1, {.patience = 1, .factor = 0.5});
  for (double l = 1.0; l > 0.1; l -= 0.1) EXPECT_FALSE(s.step(l));
  EXPECT_DOUBLE_EQ(s.learning_rate(), 0.1);
}

TEST(Plateau, CounterResetsAfterDecay) {
  PlateauScheduler s(0.1, {.patience = 2, .factor = 0.5});
  int decays = 0;
  for (double l : {1.0, 0.9, 0.9, 0.9, 0.9}) decays += s.step(l);
  EXPECT_EQ(decays, 1);
  EXPECT_DOUBLE_EQ(s.learning_rate(), 0.05);
}

TEST(Plateau, MinimumLearningRate) {
  PlateauScheduler s(0.1, {.patience = 1, .factor = 0.1, .min_lr = 0.05});
  s.step(1.0);
  s.step(1.0);
  EXPECT_DOUBLE_EQ(s.learning_rate(), 0.05);
}

TEST(Plateau, NonFiniteLoss) {
  PlateauScheduler s(0.1, {});
  EXPECT_THROW(s.step(std::nan("")), NumericError);
}

}  // namespace
}  // namespace invbench::optim
