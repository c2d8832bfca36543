#pragma once

// Affine coupling flows and the two flow-based inverse solvers.

#include <cstdint>
#include <span>
#include <vector>

#include "invbench/nn.hpp"
#include "invbench/solvers.hpp"

namespace invbench::flows {

struct CouplingOptions {
  std::size_t width = 2;            // columns of x
  std::size_t condition_width = 0;  // columns of the conditioning input, 0 = none
  bool passive_first = true;        // which half passes through unchanged
  std::vector<std::size_t> hidden{64};
  nn::Activation activation = nn::Activation::Relu;
  double clamp = 2.0;                    // scale = c tanh(raw / c); 0 disables
  std::vector<std::size_t> permutation;  // applied after the block; empty = identity
  bool zero_translate = true;            // false keeps the random output layer of t
  std::uint64_t seed = 0;
};

struct FlowOutput {
  ad::Tensor y;
  ad::Tensor logdet;  // rows x 1
};

// y_pass = x_pass; y_act = x_act * exp(s(x_pass, c)) + t(x_pass, c); then the
// columns are permuted. The scale net starts with a zero output layer, and so
// does the translate net unless zero_translate is off; a fresh block is then
// a pure permutation.
class CouplingBlock {
 public:
  explicit CouplingBlock(CouplingOptions options);

  FlowOutput forward(const ad::Tensor& x, const ad::Tensor& condition = {}) const;
  ad::Tensor inverse(const ad::Tensor& y, const ad::Tensor& condition = {}) const;

  const CouplingOptions& options() const { return options_; }
  std::size_t passive_width() const;
  std::size_t active_width() const;
  nn::Mlp& scale_net() { return scale_; }
  nn::Mlp& translate_net() { return translate_; }
  const std::vector<std::size_t>& permutation() const { return perm_; }
  std::vector<nn::NamedParameter> parameters() const;

  void write(Checkpoint& ckpt, const std::string& prefix) const;
  static CouplingBlock read(const Checkpoint& ckpt, const std::string& prefix);

 private:
  std::pair<ad::Tensor, ad::Tensor> scale_shift(const ad::Tensor& passive, const ad::Tensor& condition) const;
  ad::Tensor passive(const ad::Tensor& x) const;
  ad::Tensor active(const ad::Tensor& x) const;
  ad::Tensor assemble(const ad::Tensor& passive, const ad::Tensor& active) const;

  CouplingOptions options_;
  nn::Mlp scale_;
  nn::Mlp translate_;
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> inverse_perm_;
};

struct FlowOptions {
  std::size_t width = 2;
  std::size_t condition_width = 0;
  std::size_t blocks = 4;
  std::vector<std::size_t> hidden{64};
  nn::Activation activation = nn::Activation::Relu;
  double clamp = 2.0;
  bool zero_translate = true;
  std::uint64_t seed = 0;
};

// Blocks alternate the passive half and are separated by fixed random
// permutations drawn from the seed; each permutation stays within its half.
class Flow {
 public:
  explicit Flow(const FlowOptions& options);
  explicit Flow(std::vector<CouplingBlock> blocks);

  FlowOutput forward(const ad::Tensor& x, const ad::Tensor& condition = {}) const;
  ad::Tensor inverse(const ad::Tensor& y, const ad::Tensor& condition = {}) const;

  std::size_t width() const;
  std::vector<CouplingBlock>& blocks() { return blocks_; }
  std::vector<nn::NamedParameter> parameters() const;
  std::size_t parameter_count() const;

  void write(Checkpoint& ckpt, const std::string& prefix) const;
  static Flow read(const Checkpoint& ckpt, const std::string& prefix);

 private:
  std::vector<CouplingBlock> blocks_;
};

// Batch means of 1/2 (|s_hat - s|^2 / sigma^2 + |z|^2) - logdet and
// 1/2 |z|^2 - logdet; squared norms are sums over coordinates.
ad::Tensor inn_loss(const ad::Tensor& s_hat, const ad::Tensor& s, const ad::Tensor& z, const ad::Tensor& logdet,
                    double sigma);
ad::Tensor cinn_loss(const ad::Tensor& z, const ad::Tensor& logdet);
double inn_loss(std::span<const double> s_hat, std::span<const double> s, std::span<const double> z,
                double logdet, double sigma);
double cinn_loss(std::span<const double> z, double logdet);

// Invertible network on [g, 0-pad] -> [s_hat, z] with |g| + |pad| = |s| + |z|.
class InvertibleNetwork final : public solvers::InverseSolver {
 public:
  InvertibleNetwork(solvers::SolverConfig config, em::TaskSpec spec);
  std::size_t parameter_count() const override { return flow_.parameter_count(); }
  std::size_t latent_width() const { return latent_; }
  std::size_t pad_width() const { return flow_.width() - spec().design_dim; }
  const Flow& flow() const { return flow_; }

 protected:
  solvers::TrainReport fit(const Batch& train, const Batch& val) override;
  std::vector<double> propose_unit(const ad::Tensor& s, std::size_t T, std::mt19937_64& rng,
                                   std::vector<double>* predicted) const override;
  void write_state(Checkpoint& ckpt) const override;
  void read_state(const Checkpoint& ckpt) override;

 private:
  ad::Tensor loss(const Batch& batch) const;
  std::size_t latent_;
  Flow flow_;
};

// Conditional flow g -> z given s, with |z| = |g|.
class ConditionalInvertibleNetwork final : public solvers::InverseSolver {
 public:
  ConditionalInvertibleNetwork(solvers::SolverConfig config, em::TaskSpec spec);
  std::size_t parameter_count() const override { return flow_.parameter_count(); }
  const Flow& flow() const { return flow_; }
  // Latents of unit designs `u` given normalized spectra `s`.
  ad::Tensor encode(const ad::Tensor& u, const ad::Tensor& s) const;
  // Normalized view of raw designs and spectra, for diagnostics.
  std::pair<ad::Tensor, ad::Tensor> normalized(const data::Dataset& data, data::Split split) const;

 protected:
  solvers::TrainReport fit(const Batch& train, const Batch& val) override;
  std::vector<double> propose_unit(const ad::Tensor& s, std::size_t T, std::mt19937_64& rng,
                                   std::vector<double>* predicted) const override;
  void write_state(Checkpoint& ckpt) const override;
  void read_state(const Checkpoint& ckpt) override;

 private:
  Flow flow_;
};

}  // namespace invbench::flows
