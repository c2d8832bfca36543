#pragma once

// Epoch loop shared by every trainable solver.

#include <functional>
#include <string>
#include <vector>

#include "invbench/solvers.hpp"

namespace invbench::solvers::detail {

struct LoopSpec {
  std::string label;
  std::size_t epochs = 1;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  int patience = 10;
  double lr_decay = 0.5;
  double time_budget_s = 0.0;
  std::uint64_t seed = 0;
};

LoopSpec loop_spec(const SolverConfig& config, std::string label, std::uint64_t stream);

struct LoopHooks {
  // Loss over the listed training rows, built with gradients enabled.
  std::function<ad::Tensor(const std::vector<std::size_t>&)> batch_loss;
  // Selection loss, evaluated without gradients. Empty = use the epoch's training loss.
  std::function<double()> val_loss;
  std::function<void()> snapshot;
  std::function<void()> restore;
};

// Shuffled minibatches, Adam, reduce-on-plateau on the epoch training loss,
// best-validation snapshot restored at the end. Non-finite losses raise
// NumericError.
TrainReport run_training(const LoopSpec& spec, std::size_t rows, std::vector<nn::NamedParameter> params,
                         const LoopHooks& hooks);

ad::Tensor gather_rows(const ad::Tensor& t, const std::vector<std::size_t>& rows);
std::vector<std::size_t> all_rows(std::size_t n);

// Standard normal draws as a constant n x d tensor.
ad::Tensor normal_tensor(std::size_t n, std::size_t d, std::mt19937_64& rng);

}  // namespace invbench::solvers::detail
