#include "invbench/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace invbench::optim {

Adam::Adam(std::vector<nn::NamedParameter> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (options_.beta1 < 0.0 || options_.beta1 >= 1.0 || options_.beta2 < 0.0 || options_.beta2 >= 1.0) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::set_learning_rate(double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  options_.lr = lr;
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& tensor = params_[i].tensor;
    if (!tensor.has_grad()) continue;
    const auto grad = tensor.grad();
    auto values = tensor.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * grad[k];
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      values[k] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
    tensor.clear_grad();
  }
}

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauOptions options)
    : options_(options), lr_(initial_lr) {
  if (!(initial_lr > 0.0)) throw ConfigError("scheduler: learning rate must be positive");
  if (!(options_.factor > 0.0 && options_.factor < 1.0)) throw ConfigError("scheduler: factor must lie in (0, 1)");
  if (options_.patience < 1) throw ConfigError("scheduler: patience must be at least 1");
}

bool PlateauScheduler::step(double epoch_loss) {
  if (!std::isfinite(epoch_loss)) throw NumericError("scheduler: non-finite epoch loss");
  if (epoch_loss < best_) {
    best_ = epoch_loss;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ < options_.patience) return false;
  bad_epochs_ = 0;
  const double next = std::max(lr_ * options_.factor, options_.min_lr);
  const bool decayed = next < lr_;
  lr_ = std::min(lr_, next);
  return decayed;
}

}  // namespace invbench::optim
