#include <algorithm>
#include <cmath>
#include <numeric>

#include "fit_loop.hpp"
#include "invbench/optim.hpp"
#include "invbench/solvers.hpp"

namespace invbench::solvers {

using ad::Tensor;
using detail::gather_rows;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Network seeds are derived per role so adding a network never reshuffles another.
enum Stream : std::uint64_t {
  kInverseNet = 1,
  kForwardNet = 2,
  kEncoderNet = 3,
  kDecoderNet = 4,
  kLoopInverse = 11,
  kLoopForward = 12,
  kNoise = 13,
};

std::vector<double> repeat_row(std::span<const double> row, std::size_t times) {
  std::vector<double> out;
  out.reserve(row.size() * times);
  for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), row.begin(), row.end());
  return out;
}

Tensor tile(const Tensor& row, std::size_t times) {
  return Tensor::matrix(times, row.cols(), repeat_row(row.values(), times));
}

// Per-row mean squared difference between the rows of `a` and the single row `b`.
std::vector<double> row_mse(const Tensor& a, const Tensor& b) {
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(rows, 0.0);
  const auto av = a.values(), bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < cols; ++k) {
      const double d = av[r * cols + k] - bv[k];
      out[r] += d * d;
    }
    out[r] /= static_cast<double>(cols);
  }
  return out;
}

std::size_t epochs_or(std::size_t value, std::size_t fallback) { return value == 0 ? fallback : value; }

void append(TrainReport& into, const TrainReport& stage) {
  into.train_loss.insert(into.train_loss.end(), stage.train_loss.begin(), stage.train_loss.end());
  into.val_loss.insert(into.val_loss.end(), stage.val_loss.begin(), stage.val_loss.end());
  into.seconds += stage.seconds;
  into.budget_exhausted = into.budget_exhausted || stage.budget_exhausted;
}

}  // namespace

// --- NN ---------------------------------------------------------------------

DirectNetwork::DirectNetwork(SolverConfig config, em::TaskSpec spec)
    : InverseSolver(std::move(config), std::move(spec)),
      net_(mlp(this->spec().spectrum_dim, this->config().hidden, this->spec().design_dim, kInverseNet)) {}

TrainReport DirectNetwork::fit(const Batch& train, const Batch& val) {
  nn::Mlp best = net_;
  detail::LoopHooks hooks;
  hooks.batch_loss = [&](const std::vector<std::size_t>& idx) {
    const auto pred = net_.forward(gather_rows(train.s, idx), nn::Mode::Train);
    return ad::mean(ad::square(pred - gather_rows(train.u, idx)));
  };
  if (val.u.defined()) {
    hooks.val_loss = [&] { return ad::mean(ad::square(net_.forward(val.s) - val.u)).item(); };
  }
  hooks.snapshot = [&] { best = net_; };
  hooks.restore = [&] { net_ = best; };
  return detail::run_training(detail::loop_spec(config(), "nn", kLoopInverse), train.u.rows(), net_.parameters(),
                              hooks);
}

std::vector<double> DirectNetwork::propose_unit(const Tensor& s, std::size_t T, std::mt19937_64&,
                                                std::vector<double>*) const {
  ad::NoGradGuard no_grad;
  return repeat_row(net_.forward(s).values(), T);
}

void DirectNetwork::write_state(Checkpoint& ckpt) const { net_.write(ckpt, "inverse"); }
void DirectNetwork::read_state(const Checkpoint& ckpt) { net_ = nn::Mlp::read(ckpt, "inverse"); }

// --- TD ---------------------------------------------------------------------

Tandem::Tandem(SolverConfig config, em::TaskSpec spec)
    : InverseSolver(std::move(config), std::move(spec)),
      forward_(mlp(this->spec().design_dim, this->config().forward_hidden, this->spec().spectrum_dim, kForwardNet)),
      inverse_(mlp(this->spec().spectrum_dim, this->config().hidden, this->spec().design_dim, kInverseNet)) {}

TrainReport Tandem::fit(const Batch& train, const Batch& val) {
  TrainReport out = fit_forward(train, val);
  const std::size_t offset = out.train_loss.size();
  const auto second = fit_inverse(train, val);
  append(out, second);
  out.best_epoch = offset + second.best_epoch;
  out.best_val_loss = second.best_val_loss;
  return out;
}

TrainReport Tandem::fit_forward(const Batch& train, const Batch& val) {
  forward_ = nn::Mlp(mlp(spec().design_dim, config().forward_hidden, spec().spectrum_dim, kForwardNet));
  nn::Mlp best = forward_;
  detail::LoopHooks hooks;
  hooks.batch_loss = [&](const std::vector<std::size_t>& idx) {
    const auto pred = forward_.forward(gather_rows(train.u, idx), nn::Mode::Train);
    return ad::mean(ad::square(pred - gather_rows(train.s, idx)));
  };
  if (val.u.defined()) {
    hooks.val_loss = [&] { return ad::mean(ad::square(forward_.forward(val.u) - val.s)).item(); };
  }
  hooks.snapshot = [&] { best = forward_; };
  hooks.restore = [&] { forward_ = best; };
  auto spec = detail::loop_spec(config(), "td forward", kLoopForward);
  spec.epochs = epochs_or(config().forward_epochs, config().epochs);
  auto report = detail::run_training(spec, train.u.rows(), forward_.parameters(), hooks);
  forward_.set_trainable(false);
  forward_ready_ = true;
  return report;
}

TrainReport Tandem::fit_inverse(const Batch& train, const Batch& val) {
  if (!forward_ready_) {
    throw MissingArtifact("td: stage two needs the stage-one forward network; train it first");
  }
  forward_.set_trainable(false);
  const auto frozen = forward_.fingerprint();
  const double w = config().boundary_weight;
  auto loss_of = [&](const Tensor& s, nn::Mode mode) {
    const auto g = inverse_.forward(s, mode);
    return ad::mean(ad::square(forward_.forward(g) - s)) + boundary_loss_unit(g) * w;
  };
  nn::Mlp best = inverse_;
  detail::LoopHooks hooks;
  hooks.batch_loss = [&](const std::vector<std::size_t>& idx) {
    return loss_of(gather_rows(train.s, idx), nn::Mode::Train);
  };
  if (val.s.defined()) hooks.val_loss = [&] { return loss_of(val.s, nn::Mode::Eval).item(); };
  hooks.snapshot = [&] { best = inverse_; };
  hooks.restore = [&] { inverse_ = best; };
  auto report =
      detail::run_training(detail::loop_spec(config(), "td inverse", kLoopInverse), train.s.rows(),
                           inverse_.parameters(), hooks);
  if (forward_.fingerprint() != frozen) throw NumericError("td: frozen forward network changed during stage two");
  return report;
}

TrainReport Tandem::train_forward(const data::Dataset& data) {
  set_normalizer(Normalizer::fit(spec(), data.subset(data::Split::Train)));
  return fit_forward(make_batch(data, data::Split::Train), make_batch(data, data::Split::Val));
}

TrainReport Tandem::train_inverse(const data::Dataset& data) {
  if (!forward_ready_) {
    throw MissingArtifact("td: stage two needs the stage-one forward network; train it first");
  }
  auto report = fit_inverse(make_batch(data, data::Split::Train), make_batch(data, data::Split::Val));
  mark_trained();
  return report;
}

std::vector<double> Tandem::propose_unit(const Tensor& s, std::size_t T, std::mt19937_64&,
                                         std::vector<double>* predicted) const {
  ad::NoGradGuard no_grad;
  const auto g = inverse_.forward(s);
  if (predicted) predicted->assign(T, row_mse(forward_.forward(g), s)[0]);
  return repeat_row(g.values(), T);
}

void Tandem::write_state(Checkpoint& ckpt) const {
  forward_.write(ckpt, "forward");
  inverse_.write(ckpt, "inverse");
}

void Tandem::read_state(const Checkpoint& ckpt) {
  forward_ = nn::Mlp::read(ckpt, "forward");
  forward_.set_trainable(false);
  inverse_ = nn::Mlp::read(ckpt, "inverse");
  forward_ready_ = true;
}

// --- surrogate search -------------------------------------------------------

SurrogateSearch::SurrogateSearch(SolverConfig config, em::TaskSpec spec)
    : InverseSolver(std::move(config), std::move(spec)),
      surrogate_(mlp(this->spec().design_dim, this->config().forward_hidden, this->spec().spectrum_dim,
                     kForwardNet)) {}

void SurrogateSearch::set_surrogate(nn::Mlp network) {
  if (network.spec().input_width() != spec().design_dim || network.spec().output_width() != spec().spectrum_dim) {
    throw ShapeError(std::string(to_string(kind())) + ": surrogate shape does not match the task");
  }
  surrogate_ = std::move(network);
  surrogate_.set_trainable(false);
  mark_trained();
}

TrainReport SurrogateSearch::fit(const Batch& train, const Batch& val) {
  surrogate_.set_trainable(true);
  nn::Mlp best = surrogate_;
  detail::LoopHooks hooks;
  hooks.batch_loss = [&](const std::vector<std::size_t>& idx) {
    const auto pred = surrogate_.forward(gather_rows(train.u, idx), nn::Mode::Train);
    return ad::mean(ad::square(pred - gather_rows(train.s, idx)));
  };
  if (val.u.defined()) {
    hooks.val_loss = [&] { return ad::mean(ad::square(surrogate_.forward(val.u) - val.s)).item(); };
  }
  hooks.snapshot = [&] { best = surrogate_; };
  hooks.restore = [&] { surrogate_ = best; };
  auto spec = detail::loop_spec(config(), std::string(to_string(kind())) + " surrogate", kLoopForward);
  spec.epochs = epochs_or(config().forward_epochs, config().epochs);
  auto report = detail::run_training(spec, train.u.rows(), surrogate_.parameters(), hooks);
  surrogate_.set_trainable(false);
  return report;
}

void SurrogateSearch::write_state(Checkpoint& ckpt) const { surrogate_.write(ckpt, "surrogate"); }

void SurrogateSearch::read_state(const Checkpoint& ckpt) {
  surrogate_ = nn::Mlp::read(ckpt, "surrogate");
  surrogate_.set_trainable(false);
}

std::vector<double> SurrogateSearch::surrogate_errors(std::span<const double> u, std::size_t rows,
                                                      const Tensor& s) const {
  ad::NoGradGuard no_grad;
  const auto x = Tensor::matrix(rows, spec().design_dim, std::vector<double>(u.begin(), u.end()));
  return row_mse(surrogate_.forward(x), s);
}

// --- NA ---------------------------------------------------------------------

std::vector<double> NeuralAdjoint::propose_unit(const Tensor& s, std::size_t T, std::mt19937_64& rng,
                                                std::vector<double>* predicted) const {
  const std::size_t P = config().na_candidates == 0 ? 4 * T : config().na_candidates;
  if (P < T) {
    throw ConfigError("na: candidate count P = " + std::to_string(P) + " is smaller than T = " + std::to_string(T));
  }
  const std::size_t d = spec().design_dim;
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::vector<double> init(P * d);
  for (auto& v : init) v = uniform(rng);
  auto x = Tensor::matrix(P, d, std::move(init), true);
  optim::Adam adam({{"designs", x}}, {.lr = config().na_lr});
  const double w = config().boundary_weight;
  const double inv_width = 1.0 / static_cast<double>(spec().spectrum_dim);
  // Summed over candidates so each candidate's gradient is independent of P.
  for (std::size_t it = 0; it < config().na_iterations; ++it) {
    const auto fit = ad::sum(ad::square(surrogate_.forward(x) - s)) * inv_width;
    const auto loss = fit + ad::sum(ad::relu(ad::abs(x) - 1.0)) * w;
    if (!std::isfinite(loss.item())) throw NumericError("na: design optimization diverged");
    ad::backward(loss);
    adam.step();
  }
  std::vector<double> designs(x.values().begin(), x.values().end());
  for (auto& v : designs) v = std::clamp(v, -1.0, 1.0);
  const auto errors = surrogate_errors(designs, P, s);
  std::vector<std::size_t> order(P);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] < errors[b]; });
  std::vector<double> out;
  out.reserve(T * d);
  if (predicted) predicted->clear();
  for (std::size_t i = 0; i < T; ++i) {
    out.insert(out.end(), designs.begin() + static_cast<std::ptrdiff_t>(order[i] * d),
               designs.begin() + static_cast<std::ptrdiff_t>((order[i] + 1) * d));
    if (predicted) predicted->push_back(errors[order[i]]);
  }
  return out;
}

// --- GA ---------------------------------------------------------------------

std::vector<double> select_probabilities(std::span<const double> fitness) {
  double total = 0.0;
  for (double f : fitness) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw NumericError("ga: fitness values must be finite and non-negative");
    total += f;
  }
  if (!(total > 0.0)) throw NumericError("ga: total fitness is zero");
  std::vector<double> p(fitness.begin(), fitness.end());
  for (auto& v : p) v /= total;
  return p;
}

std::pair<std::vector<double>, std::vector<double>> single_point_crossover(std::span<const double> a,
                                                                           std::span<const double> b,
                                                                           std::size_t point) {
  if (a.size() != b.size()) throw ShapeError("ga: parents have different lengths");
  if (point > a.size()) throw DomainError("ga: crossover point beyond the genome");
  std::vector<double> c1(a.begin(), a.end()), c2(b.begin(), b.end());
  for (std::size_t i = point; i < a.size(); ++i) std::swap(c1[i], c2[i]);
  return {std::move(c1), std::move(c2)};
}

namespace {

void sort_population(std::size_t dim, std::vector<double>& pop, std::vector<double>& fitness) {
  const std::size_t n = fitness.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });
  std::vector<double> sorted_pop(pop.size()), sorted_fit(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(pop.begin() + static_cast<std::ptrdiff_t>(order[i] * dim), dim,
                sorted_pop.begin() + static_cast<std::ptrdiff_t>(i * dim));
    sorted_fit[i] = fitness[order[i]];
  }
  pop = std::move(sorted_pop);
  fitness = std::move(sorted_fit);
}

std::vector<double> fitness_of(const BatchErrors& errors, const std::vector<double>& pop, std::size_t n) {
  auto mse = errors(pop, n);
  if (mse.size() != n) throw ShapeError("ga: error callback returned the wrong number of values");
  for (auto& v : mse) v = ga_fitness(v);
  return mse;
}

}  // namespace

GaResult ga_evolve(std::size_t dim, const BatchErrors& errors, const GaOptions& o, std::mt19937_64& rng) {
  if (dim == 0) throw ConfigError("ga: genome must be non-empty");
  if (o.population < o.elitism + 2) throw ConfigError("ga: population must be at least elitism + 2");
  if (!(o.crossover_rate >= 0 && o.crossover_rate <= 1) || !(o.mutation_rate >= 0 && o.mutation_rate <= 1)) {
    throw ConfigError("ga: rates must lie in [0, 1]");
  }
  const std::size_t n = o.population;
  std::uniform_real_distribution<double> gene(-1.0, 1.0), coin(0.0, 1.0);
  GaResult result;
  result.dim = dim;
  result.population.resize(n * dim);
  for (auto& v : result.population) v = gene(rng);
  result.fitness = fitness_of(errors, result.population, n);
  sort_population(dim, result.population, result.fitness);
  result.best_fitness.push_back(result.fitness[0]);

  for (std::size_t gen = 0; gen < o.generations; ++gen) {
    const auto probs = select_probabilities(result.fitness);
    std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
    std::vector<double> next(result.population.begin(),
                             result.population.begin() + static_cast<std::ptrdiff_t>(o.elitism * dim));
    next.reserve(n * dim);
    auto mutate = [&](std::vector<double>& child) {
      for (auto& g : child) {
        if (coin(rng) < o.mutation_rate) g = gene(rng);
      }
    };
    while (next.size() < n * dim) {
      const std::size_t a = pick(rng), b = pick(rng);
      const std::span<const double> pa(result.population.data() + a * dim, dim);
      const std::span<const double> pb(result.population.data() + b * dim, dim);
      std::vector<double> c1(pa.begin(), pa.end()), c2(pb.begin(), pb.end());
      if (dim > 1 && coin(rng) < o.crossover_rate) {
        const std::size_t point = std::uniform_int_distribution<std::size_t>(1, dim - 1)(rng);
        std::tie(c1, c2) = single_point_crossover(pa, pb, point);
      }
      mutate(c1);
      mutate(c2);
      next.insert(next.end(), c1.begin(), c1.end());
      if (next.size() < n * dim) next.insert(next.end(), c2.begin(), c2.end());
    }
    result.population = std::move(next);
    result.fitness = fitness_of(errors, result.population, n);
    sort_population(dim, result.population, result.fitness);
    result.best_fitness.push_back(result.fitness[0]);
  }
  return result;
}

GaOptions GeneticAlgorithm::options() const {
  const auto& c = config();
  return {c.population, c.generations, c.crossover_rate, c.mutation_rate, c.elitism};
}

std::vector<double> GeneticAlgorithm::propose_unit(const Tensor& s, std::size_t T, std::mt19937_64& rng,
                                                   std::vector<double>* predicted) const {
  const auto o = options();
  if (o.population < T) {
    throw ConfigError("ga: population " + std::to_string(o.population) + " is smaller than T = " + std::to_string(T));
  }
  const std::size_t d = spec().design_dim;
  const auto result = ga_evolve(
      d, [&](std::span<const double> rows, std::size_t count) { return surrogate_errors(rows, count, s); }, o, rng);
  std::vector<double> out(result.population.begin(), result.population.begin() + static_cast<std::ptrdiff_t>(T * d));
  if (predicted) {
    predicted->clear();
    for (std::size_t i = 0; i < T; ++i) predicted->push_back(1.0 / result.fitness[i] - 1e-9);
  }
  return out;
}

// --- MDN --------------------------------------------------------------------

void MixtureParams::validate() const {
  const std::size_t K = weights.size();
  if (K == 0 || dim == 0) throw ShapeError("mixture: needs at least one component and one dimension");
  if (means.size() != K * dim || variances.size() != K * dim) throw ShapeError("mixture: parameter sizes disagree");
  double total = 0.0;
  for (double p : weights) {
    if (!(p >= 0.0)) throw DomainError("mixture: weights must be non-negative");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw DomainError("mixture: weights must sum to 1");
  for (double v : variances) {
    if (!(v > 0.0)) throw DomainError("mixture: variances must be positive");
  }
}

double mdn_nll(const MixtureParams& m, std::span<const double> g, bool with_constant) {
  m.validate();
  if (g.size() != m.dim) throw ShapeError("mdn_nll: design width does not match the mixture");
  const std::size_t K = m.components();
  std::vector<double> log_terms(K);
  for (std::size_t i = 0; i < K; ++i) {
    double t = std::log(m.weights[i]);
    for (std::size_t j = 0; j < m.dim; ++j) {
      const double var = m.variances[i * m.dim + j];
      const double diff = g[j] - m.means[i * m.dim + j];
      t -= 0.5 * std::log(var) + 0.5 * diff * diff / var;
    }
    log_terms[i] = t;
  }
  const double top = *std::max_element(log_terms.begin(), log_terms.end());
  double acc = 0.0;
  for (double t : log_terms) acc += std::exp(t - top);
  double nll = -(top + std::log(acc));
  if (with_constant) nll += 0.5 * static_cast<double>(m.dim) * kLog2Pi;
  return nll;
}

MixtureSample sample_mixture(const MixtureParams& m, std::size_t T, std::mt19937_64& rng) {
  m.validate();
  const std::size_t K = m.components();
  std::discrete_distribution<std::size_t> pick(m.weights.begin(), m.weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> comp(T);
  std::vector<double> draws(T * m.dim);
  for (std::size_t t = 0; t < T; ++t) {
    comp[t] = pick(rng);
    for (std::size_t j = 0; j < m.dim; ++j) {
      const std::size_t at = comp[t] * m.dim + j;
      draws[t * m.dim + j] = m.means[at] + std::sqrt(m.variances[at]) * normal(rng);
    }
  }
  std::vector<std::size_t> rank(K);
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return m.weights[a] > m.weights[b]; });
  std::vector<std::size_t> position(K);
  for (std::size_t r = 0; r < K; ++r) position[rank[r]] = r;
  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return position[comp[a]] < position[comp[b]]; });
  MixtureSample out;
  out.designs.reserve(T * m.dim);
  for (auto t : order) {
    out.designs.insert(out.designs.end(), draws.begin() + static_cast<std::ptrdiff_t>(t * m.dim),
                       draws.begin() + static_cast<std::ptrdiff_t>((t + 1) * m.dim));
    out.components.push_back(comp[t]);
  }
  return out;
}

MixtureDensity::MixtureDensity(SolverConfig config, em::TaskSpec spec)
    : InverseSolver(std::move(config), std::move(spec)),
      net_(mlp(this->spec().spectrum_dim, this->config().hidden,
               this->config().components * (1 + 2 * this->spec().design_dim), kInverseNet)) {}

Tensor MixtureDensity::nll(const Tensor& out, const Tensor& u) const {
  const std::size_t K = config().components, d = spec().design_dim;
  const auto logits = ad::slice(out, 0, K);
  const auto log_weights = logits - ad::row_logsumexp(logits);
  std::vector<Tensor> terms;
  terms.reserve(K);
  for (std::size_t i = 0; i < K; ++i) {
    const auto mu = ad::slice(out, K + i * d, K + (i + 1) * d);
    const auto var = ad::softplus(ad::slice(out, K + K * d + i * d, K + K * d + (i + 1) * d)) + config().variance_floor;
    terms.push_back(ad::slice(log_weights, i, i + 1) - ad::row_sum(ad::log(var)) * 0.5 -
                    ad::row_sum(ad::square(u - mu) / var) * 0.5);
  }
  auto value = -ad::mean(ad::row_logsumexp(ad::concat(terms)));
  if (config().nll_constant) value = value + 0.5 * static_cast<double>(d) * kLog2Pi;
  return value;
}

Tensor MixtureDensity::loss(const Tensor& s, const Tensor& u, nn::Mode mode) {
  return nll(net_.forward(s, mode), u);
}

TrainReport MixtureDensity::fit(const Batch& train, const Batch& val) {
  nn::Mlp best = net_;
  detail::LoopHooks hooks;
  hooks.batch_loss = [&](const std::vector<std::size_t>& idx) {
    return loss(gather_rows(train.s, idx), gather_rows(train.u, idx), nn::Mode::Train);
  };
  if (val.u.defined()) hooks.val_loss = [&] { return nll(net_.forward(val.s), val.u).item(); };
  hooks.snapshot = [&] { best = net_; };
  hooks.restore = [&] { net_ = best; };
  return detail::run_training(detail::loop_spec(config(), "mdn", kLoopInverse), train.u.rows(), net_.parameters(),
                              hooks);
}

MixtureParams MixtureDensity::mixture(const Tensor& s) const {
  ad::NoGradGuard no_grad;
  const std::size_t K = config().components, d = spec().design_dim;
  const auto out = net_.forward(s);
  const auto v = out.values();
  MixtureParams m;
  m.dim = d;
  const double top = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(K));
  double z = 0.0;
  for (std::size_t i = 0; i < K; ++i) z += std::exp(v[i] - top);
  for (std::size_t i = 0; i < K; ++i) m.weights.push_back(std::exp(v[i] - top) / z);
  m.means.assign(v.begin() + static_cast<std::ptrdiff_t>(K), v.begin() + static_cast<std::ptrdiff_t>(K + K * d));
  for (std::size_t j = 0; j < K * d; ++j) {
    const double raw = v[K + K * d + j];
    const double sp = raw > 30.0 ? raw : std::log1p(std::exp(raw));
    m.variances.push_back(sp + config().variance_floor);
  }
  return m;
}

std::vector<double> MixtureDensity::propose_unit(const Tensor& s, std::size_t T, std::mt19937_64& rng,
                                                 std::vector<double>*) const {
  return sample_mixture(mixture(s), T, rng).designs;
}

void MixtureDensity::write_state(Checkpoint& ckpt) const { net_.write(ckpt, "mdn"); }
void MixtureDensity::read_state(const Checkpoint& ckpt) { net_ = nn::Mlp::read(ckpt, "mdn"); }

// --- VAE --------------------------------------------------------------------

double vae_kl(std::span<const double> mu, std::span<const double> var) {
  if (mu.size() != var.size()) throw ShapeError("vae_kl: mean and variance lengths differ");
  double kl = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    if (!(var[j] > 0.0)) throw DomainError("vae_kl: variance must be positive");
    kl += mu[j] * mu[j] + var[j] - 1.0 - std::log(var[j]);
  }
  return 0.5 * kl;
}

Tensor vae_kl(const Tensor& mu, const Tensor& logvar) {
  return ad::mean(ad::row_sum(ad::square(mu) + ad::exp(logvar) - logvar - 1.0)) * 0.5;
}

ConditionalVae::ConditionalVae(SolverConfig config, em::TaskSpec spec)
    : InverseSolver(std::move(config), std::move(spec)),
      encoder_(mlp(this->spec().design_dim + this->spec().spectrum_dim, this->config().hidden,
                   2 * this->config().latent_dim, kEncoderNet)),
      decoder_(mlp(this->config().latent_dim + this->spec().spectrum_dim, this->config().hidden,
                   this->spec().design_dim, kDecoderNet)) {}

TrainReport ConditionalVae::fit(const Batch& train, const Batch& val) {
  const std::size_t dz = config().latent_dim;
  const double alpha = config().kl_weight;
  std::mt19937_64 noise(data::mix_seed(config().seed, kNoise));
  auto loss_of = [&](const Tensor& u, const Tensor& s, nn::Mode mode, bool sample) {
    const auto h = encoder_.forward(ad::concat({u, s}), mode);
    const auto mu = ad::slice(h, 0, dz);
    const auto logvar = ad::slice(h, dz, 2 * dz);
    auto z = mu;
    if (sample) z = mu + ad::exp(logvar * 0.5) * detail::normal_tensor(u.rows(), dz, noise);
    const auto recon = decoder_.forward(ad::concat({z, s}), mode);
    return ad::mean(ad::square(recon - u)) + vae_kl(mu, logvar) * alpha;
  };
  nn::Mlp best_enc = encoder_, best_dec = decoder_;
  detail::LoopHooks hooks;
  hooks.batch_loss = [&](const std::vector<std::size_t>& idx) {
    return loss_of(gather_rows(train.u, idx), gather_rows(train.s, idx), nn::Mode::Train, true);
  };
  if (val.u.defined()) hooks.val_loss = [&] { return loss_of(val.u, val.s, nn::Mode::Eval, false).item(); };
  hooks.snapshot = [&] {
    best_enc = encoder_;
    best_dec = decoder_;
  };
  hooks.restore = [&] {
    encoder_ = best_enc;
    decoder_ = best_dec;
  };
  auto params = encoder_.parameters();
  for (auto& p : decoder_.parameters()) params.push_back({"decoder." + p.name, p.tensor});
  return detail::run_training(detail::loop_spec(config(), "vae", kLoopInverse), train.u.rows(), params, hooks);
}

std::vector<double> ConditionalVae::propose_unit(const Tensor& s, std::size_t T, std::mt19937_64& rng,
                                                 std::vector<double>*) const {
  ad::NoGradGuard no_grad;
  const auto z = detail::normal_tensor(T, config().latent_dim, rng);
  const auto out = decoder_.forward(ad::concat({z, tile(s, T)}));
  return {out.values().begin(), out.values().end()};
}

void ConditionalVae::write_state(Checkpoint& ckpt) const {
  encoder_.write(ckpt, "encoder");
  decoder_.write(ckpt, "decoder");
}

void ConditionalVae::read_state(const Checkpoint& ckpt) {
  encoder_ = nn::Mlp::read(ckpt, "encoder");
  decoder_ = nn::Mlp::read(ckpt, "decoder");
}

}  // namespace invbench::solvers
