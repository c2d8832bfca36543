#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "invbench/dataset.hpp"
#include "invbench/nn.hpp"
#include "invbench/tasks.hpp"

namespace invbench::solvers {

enum class Kind { NN, TD, NA, GA, MDN, VAE, INN, CINN };

inline constexpr Kind kAllKinds[] = {Kind::NN,  Kind::TD,  Kind::NA,  Kind::GA,
                                     Kind::MDN, Kind::VAE, Kind::INN, Kind::CINN};

const char* to_string(Kind kind);
Kind parse_kind(std::string_view name);
// NN and TD return one design per target no matter how many are requested.
bool is_deterministic(Kind kind);

struct SolverConfig {
  Kind kind = Kind::NN;
  std::uint64_t seed = 0;

  // shared training
  std::vector<std::size_t> hidden{64, 64};
  nn::Activation activation = nn::Activation::Relu;
  bool batchnorm = false;
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  int patience = 10;
  double lr_decay = 0.5;
  double boundary_weight = 1.0;
  double time_budget_s = 0.0;  // soft wall-clock cap, 0 = none

  // forward surrogate (TD stage 1, NA, GA)
  std::vector<std::size_t> forward_hidden{64, 64};
  std::size_t forward_epochs = 0;  // 0 = same as epochs

  // NA
  std::size_t na_iterations = 300;
  double na_lr = 0.01;
  std::size_t na_candidates = 0;  // 0 = 4 T

  // GA
  std::size_t population = 200;
  std::size_t generations = 50;
  double crossover_rate = 0.8;
  double mutation_rate = 0.05;
  std::size_t elitism = 2;

  // MDN
  std::size_t components = 4;
  bool nll_constant = true;
  double variance_floor = 1e-6;

  // VAE
  std::size_t latent_dim = 4;
  double kl_weight = 1.0;

  // INN / cINN
  std::size_t blocks = 4;
  double sigma = 0.1;
  double clamp = 2.0;
  std::size_t inn_latent = 0;  // 0 = design width

  // key = value view used by manifests, hashing and overrides.
  std::vector<std::pair<std::string, std::string>> entries() const;
  // Throws ConfigError for unknown keys or malformed values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
};

// Maps designs to u = 2 (g - mid) / range in [-1, 1] using the task bounds,
// and spectra to (s - mean_k) / scale with per-coordinate training means and
// one shared scale, so MSE in normalized units stays proportional to MSE in
// physical units.
struct Normalizer {
  std::vector<double> lower, upper;
  std::vector<double> spectrum_mean;
  double spectrum_scale = 1.0;

  static Normalizer fit(const em::TaskSpec& spec, const data::Dataset& train);
  static Normalizer identity(const em::TaskSpec& spec);

  std::size_t design_dim() const { return lower.size(); }
  std::size_t spectrum_dim() const { return spectrum_mean.size(); }
  void design_to_unit(std::span<const double> g, std::span<double> u) const;
  // Clamps the result into the bounds.
  void unit_to_design(std::span<const double> u, std::span<double> g) const;
  void spectrum_to_unit(std::span<const double> s, std::span<double> out) const;
  void write(Checkpoint& ckpt) const;
  static Normalizer read(const Checkpoint& ckpt);
};

// Ordered designs for one target; row i is proposal z_i.
struct ProposalSet {
  std::size_t design_dim = 0;
  std::vector<double> designs;           // T x design_dim, within bounds
  std::vector<double> predicted_errors;  // optional, one per design
  std::size_t size() const { return design_dim == 0 ? 0 : designs.size() / design_dim; }
  std::span<const double> design(std::size_t i) const { return {designs.data() + i * design_dim, design_dim}; }
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, all stages concatenated
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double seconds = 0.0;
  bool budget_exhausted = false;
};

// sum_i ReLU(|g_i - mu_i| - R_i / 2), one value per row.
std::vector<double> boundary_loss(std::span<const double> designs, std::size_t rows, std::span<const double> mu,
                                  std::span<const double> range);
double boundary_loss(std::span<const double> design, std::span<const double> mu, std::span<const double> range);
// Batch mean of the per-row penalty on unit-normalized designs (mu 0, R 2).
ad::Tensor boundary_loss_unit(const ad::Tensor& u);

class InverseSolver {
 public:
  InverseSolver(SolverConfig config, em::TaskSpec spec);
  virtual ~InverseSolver() = default;
  InverseSolver(const InverseSolver&) = delete;
  InverseSolver& operator=(const InverseSolver&) = delete;

  Kind kind() const { return config_.kind; }
  const SolverConfig& config() const { return config_; }
  const em::TaskSpec& spec() const { return spec_; }
  const Normalizer& normalizer() const { return norm_; }
  void set_normalizer(Normalizer norm);
  bool trained() const { return trained_; }
  bool deterministic() const { return is_deterministic(kind()); }

  // Fits the normalizer on the training split, then trains on train with
  // model selection on val.
  TrainReport train(const data::Dataset& data);

  // Exactly T designs within the task bounds. Thread-safe on a trained solver.
  ProposalSet propose(std::span<const double> target, std::size_t T, std::uint64_t seed) const;

  virtual std::size_t parameter_count() const = 0;

  // IBCHK tensors plus `<path>.manifest`; `extra` lines are appended to the manifest.
  void save(const std::filesystem::path& path,
            const std::vector<std::pair<std::string, std::string>>& extra = {}) const;

 protected:
  struct Batch {
    ad::Tensor u;  // n x design_dim
    ad::Tensor s;  // n x spectrum_dim, normalized
  };
  virtual TrainReport fit(const Batch& train, const Batch& val) = 0;
  // T rows in unit coordinates; `s` is one normalized target row.
  virtual std::vector<double> propose_unit(const ad::Tensor& s, std::size_t T, std::mt19937_64& rng,
                                           std::vector<double>* predicted) const = 0;
  virtual void write_state(Checkpoint& ckpt) const = 0;
  virtual void read_state(const Checkpoint& ckpt) = 0;

  Batch make_batch(const data::Dataset& data, data::Split split) const;
  void mark_trained() { trained_ = true; }
  nn::MlpSpec mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, std::uint64_t stream,
                  nn::Activation output = nn::Activation::Linear) const;

  friend std::unique_ptr<InverseSolver> load_solver(const std::filesystem::path& path);

 private:
  SolverConfig config_;
  em::TaskSpec spec_;
  Normalizer norm_;
  bool trained_ = false;
};

std::unique_ptr<InverseSolver> make_solver(const SolverConfig& config, const em::TaskSpec& spec);
std::unique_ptr<InverseSolver> load_solver(const std::filesystem::path& path);

// --- conventional network ---------------------------------------------------

class DirectNetwork final : public InverseSolver {
 public:
  DirectNetwork(SolverConfig config, em::TaskSpec spec);
  std::size_t parameter_count() const override { return net_.parameter_count(); }
  const nn::Mlp& network() const { return net_; }

 protected:
  TrainReport fit(const Batch& train, const Batch& val) override;
  std::vector<double> propose_unit(const ad::Tensor& s, std::size_t T, std::mt19937_64& rng,
                                   std::vector<double>* predicted) const override;
  void write_state(Checkpoint& ckpt) const override;
  void read_state(const Checkpoint& ckpt) override;

 private:
  nn::Mlp net_;
};

// --- tandem -----------------------------------------------------------------

class Tandem final : public InverseSolver {
 public:
  Tandem(SolverConfig config, em::TaskSpec spec);
  std::size_t parameter_count() const override { return inverse_.parameter_count(); }

  // The two stages are also exposed separately; stage two refuses to run
  // before stage one has produced a forward network.
  TrainReport train_forward(const data::Dataset& data);
  TrainReport train_inverse(const data::Dataset& data);
  std::uint64_t forward_fingerprint() const { return forward_.fingerprint(); }
  bool has_forward() const { return forward_ready_; }

 protected:
  TrainReport fit(const Batch& train, const Batch& val) override;
  std::vector<double> propose_unit(const ad::Tensor& s, std::size_t T, std::mt19937_64& rng,
                                   std::vector<double>* predicted) const override;
  void write_state(Checkpoint& ckpt) const override;
  void read_state(const Checkpoint& ckpt) override;

 private:
  TrainReport fit_forward(const Batch& train, const Batch& val);
  TrainReport fit_inverse(const Batch& train, const Batch& val);

  nn::Mlp forward_;
  nn::Mlp inverse_;
  bool forward_ready_ = false;
};

// --- surrogate-driven search (neural adjoint, genetic algorithm) ------------

// Shared by NA and GA: a frozen forward network trained by MSE on the
// training split.
class SurrogateSearch : public InverseSolver {
 public:
  SurrogateSearch(SolverConfig config, em::TaskSpec spec);
  std::size_t parameter_count() const override { return surrogate_.parameter_count(); }
  const nn::Mlp& surrogate() const { return surrogate_; }
  // Replaces the surrogate; it maps unit designs to normalized spectra.
  void set_surrogate(nn::Mlp network);

 protected:
  TrainReport fit(const Batch& train, const Batch& val) override;
  void write_state(Checkpoint& ckpt) const override;
  void read_state(const Checkpoint& ckpt) override;
  // Surrogate MSE against `s` for each row of `u`.
  std::vector<double> surrogate_errors(std::span<const double> u, std::size_t rows, const ad::Tensor& s) const;

  nn::Mlp surrogate_;
};

class NeuralAdjoint final : public SurrogateSearch {
 public:
  using SurrogateSearch::SurrogateSearch;

 protected:
  std::vector<double> propose_unit(const ad::Tensor& s, std::size_t T, std::mt19937_64& rng,
                                   std::vector<double>* predicted) const override;
};

struct GaOptions {
  std::size_t population = 200;
  std::size_t generations = 50;
  double crossover_rate = 0.8;
  double mutation_rate = 0.05;
  std::size_t elitism = 2;
};

struct GaResult {
  std::size_t dim = 0;
  std::vector<double> population;  // population x dim, sorted by fitness descending
  std::vector<double> fitness;
  std::vector<double> best_fitness;  // initial population, then one per generation
};

// Fitness from re-simulation error.
inline double ga_fitness(double mse) { return 1.0 / (mse + 1e-9); }
std::vector<double> select_probabilities(std::span<const double> fitness);
// Children keep the first `point` genes of their own parent.
std::pair<std::vector<double>, std::vector<double>> single_point_crossover(std::span<const double> a,
                                                                           std::span<const double> b,
                                                                           std::size_t point);
// Genes live in [-1, 1]. `errors` fills one MSE per row of a row-major batch.
using BatchErrors = std::function<std::vector<double>(std::span<const double> rows, std::size_t count)>;
GaResult ga_evolve(std::size_t dim, const BatchErrors& errors, const GaOptions& options, std::mt19937_64& rng);

class GeneticAlgorithm final : public SurrogateSearch {
 public:
  using SurrogateSearch::SurrogateSearch;
  GaOptions options() const;

 protected:
  std::vector<double> propose_unit(const ad::Tensor& s, std::size_t T, std::mt19937_64& rng,
                                   std::vector<double>* predicted) const override;
};

// --- mixture density network ------------------------------------------------

struct MixtureParams {
  std::size_t dim = 0;
  std::vector<double> weights;    // K
  std::vector<double> means;      // K x dim
  std::vector<double> variances;  // K x dim
  std::size_t components() const { return weights.size(); }
  void validate() const;
};

// -log sum_i p_i N(g; mu_i, diag var_i); `with_constant` adds (d/2) log 2 pi.
double mdn_nll(const MixtureParams& mixture, std::span<const double> g, bool with_constant = true);

struct MixtureSample {
  std::vector<double> designs;  // T x dim
  std::vector<std::size_t> components;
};
// Draws T samples, then orders them by component weight (descending) and,
// within a component, by draw order.
MixtureSample sample_mixture(const MixtureParams& mixture, std::size_t T, std::mt19937_64& rng);

class MixtureDensity final : public InverseSolver {
 public:
  MixtureDensity(SolverConfig config, em::TaskSpec spec);
  std::size_t parameter_count() const override { return net_.parameter_count(); }
  // Mixture over unit designs for one normalized target row.
  MixtureParams mixture(const ad::Tensor& s) const;
  // Batch-mean NLL of `u` under the network's mixtures for `s`.
  ad::Tensor loss(const ad::Tensor& s, const ad::Tensor& u, nn::Mode mode);
  nn::Mlp& network() { return net_; }

 protected:
  TrainReport fit(const Batch& train, const Batch& val) override;
  std::vector<double> propose_unit(const ad::Tensor& s, std::size_t T, std::mt19937_64& rng,
                                   std::vector<double>* predicted) const override;
  void write_state(Checkpoint& ckpt) const override;
  void read_state(const Checkpoint& ckpt) override;

 private:
  ad::Tensor nll(const ad::Tensor& out, const ad::Tensor& u) const;
  nn::Mlp net_;
};

// --- conditional variational autoencoder ------------------------------------

// KL(N(mu, diag var) || N(0, I)) = 1/2 sum (mu^2 + var - 1 - log var).
double vae_kl(std::span<const double> mu, std::span<const double> var);
// Batch mean of the same closed form with var = exp(logvar).
ad::Tensor vae_kl(const ad::Tensor& mu, const ad::Tensor& logvar);

class ConditionalVae final : public InverseSolver {
 public:
  ConditionalVae(SolverConfig config, em::TaskSpec spec);
  std::size_t parameter_count() const override { return encoder_.parameter_count() + decoder_.parameter_count(); }

 protected:
  TrainReport fit(const Batch& train, const Batch& val) override;
  std::vector<double> propose_unit(const ad::Tensor& s, std::size_t T, std::mt19937_64& rng,
                                   std::vector<double>* predicted) const override;
  void write_state(Checkpoint& ckpt) const override;
  void read_state(const Checkpoint& ckpt) override;

 private:
  nn::Mlp encoder_;
  nn::Mlp decoder_;
};

}  // namespace invbench::solvers
