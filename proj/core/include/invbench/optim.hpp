#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "invbench/nn.hpp"

namespace invbench::optim {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. `step()` consumes the gradients currently held by
// the parameters and clears them; parameters without a gradient are skipped.
class Adam {
 public:
  Adam(std::vector<nn::NamedParameter> params, AdamOptions options);

  void step();

  double learning_rate() const { return options_.lr; }
  void set_learning_rate(double lr);
  std::int64_t step_count() const { return steps_; }
  const AdamOptions& options() const { return options_; }

 private:
  std::vector<nn::NamedParameter> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions options_;
  std::int64_t steps_ = 0;
};

struct PlateauOptions {
  int patience = 10;
  double factor = 0.5;
  double min_lr = 0.0;
};

// Reduce-on-plateau: after `patience` consecutive epochs without a strict
// improvement of the best loss, the learning rate is multiplied by `factor`.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, PlateauOptions options);

  // Returns true when this call decayed the learning rate.
  bool step(double epoch_loss);

  double learning_rate() const { return lr_; }
  double best_loss() const { return best_; }
  int epochs_since_improvement() const { return bad_epochs_; }

 private:
  PlateauOptions options_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

}  // namespace invbench::optim
