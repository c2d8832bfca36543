#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "fit_loop.hpp"
#include "invbench/optim.hpp"
#include "invbench/solvers.hpp"
#include "invbench/text.hpp"

namespace invbench::solvers {

const char* to_string(Kind kind) {
  switch (kind) {
    case Kind::NN: return "nn";
    case Kind::TD: return "td";
    case Kind::NA: return "na";
    case Kind::GA: return "ga";
    case Kind::MDN: return "mdn";
    case Kind::VAE: return "vae";
    case Kind::INN: return "inn";
    case Kind::CINN: return "cinn";
  }
  return "nn";
}

Kind parse_kind(std::string_view name) {
  for (auto k : kAllKinds) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown solver '" + std::string(name) + "'");
}

bool is_deterministic(Kind kind) { return kind == Kind::NN || kind == Kind::TD; }

// --- SolverConfig -----------------------------------------------------------

std::vector<std::pair<std::string, std::string>> SolverConfig::entries() const {
  using text::format_double;
  using text::format_list;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"kind", to_string(kind)},
      {"seed", std::to_string(seed)},
      {"hidden", format_list(hidden)},
      {"activation", nn::to_string(activation)},
      {"batchnorm", b(batchnorm)},
      {"lr", format_double(lr)},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"patience", std::to_string(patience)},
      {"lr_decay", format_double(lr_decay)},
      {"boundary_weight", format_double(boundary_weight)},
      {"time_budget_s", format_double(time_budget_s)},
      {"forward_hidden", format_list(forward_hidden)},
      {"forward_epochs", std::to_string(forward_epochs)},
      {"na_iterations", std::to_string(na_iterations)},
      {"na_lr", format_double(na_lr)},
      {"na_candidates", std::to_string(na_candidates)},
      {"population", std::to_string(population)},
      {"generations", std::to_string(generations)},
      {"crossover_rate", format_double(crossover_rate)},
      {"mutation_rate", format_double(mutation_rate)},
      {"elitism", std::to_string(elitism)},
      {"components", std::to_string(components)},
      {"nll_constant", b(nll_constant)},
      {"variance_floor", format_double(variance_floor)},
      {"latent_dim", std::to_string(latent_dim)},
      {"kl_weight", format_double(kl_weight)},
      {"blocks", std::to_string(blocks)},
      {"sigma", format_double(sigma)},
      {"clamp", format_double(clamp)},
      {"inn_latent", std::to_string(inn_latent)},
  };
}

void SolverConfig::set(std::string_view key, std::string_view value) {
  using namespace text;
  const std::string what = "solver." + std::string(key);
  auto size = [&] { return static_cast<std::size_t>(parse_u64(value, what)); };
  if (key == "kind") kind = parse_kind(trim(value));
  else if (key == "seed") seed = parse_u64(value, what);
  else if (key == "hidden") hidden = parse_size_list(value, what);
  else if (key == "activation") activation = nn::parse_activation(trim(value));
  else if (key == "batchnorm") batchnorm = parse_bool(value, what);
  else if (key == "lr") lr = parse_double(value, what);
  else if (key == "epochs") epochs = size();
  else if (key == "batch_size") batch_size = size();
  else if (key == "patience") patience = parse_int(value, what);
  else if (key == "lr_decay") lr_decay = parse_double(value, what);
  else if (key == "boundary_weight") boundary_weight = parse_double(value, what);
  else if (key == "time_budget_s") time_budget_s = parse_double(value, what);
  else if (key == "forward_hidden") forward_hidden = parse_size_list(value, what);
  else if (key == "forward_epochs") forward_epochs = size();
  else if (key == "na_iterations") na_iterations = size();
  else if (key == "na_lr") na_lr = parse_double(value, what);
  else if (key == "na_candidates") na_candidates = size();
  else if (key == "population") population = size();
  else if (key == "generations") generations = size();
  else if (key == "crossover_rate") crossover_rate = parse_double(value, what);
  else if (key == "mutation_rate") mutation_rate = parse_double(value, what);
  else if (key == "elitism") elitism = size();
  else if (key == "components") components = size();
  else if (key == "nll_constant") nll_constant = parse_bool(value, what);
  else if (key == "variance_floor") variance_floor = parse_double(value, what);
  else if (key == "latent_dim") latent_dim = size();
  else if (key == "kl_weight") kl_weight = parse_double(value, what);
  else if (key == "blocks") blocks = size();
  else if (key == "sigma") sigma = parse_double(value, what);
  else if (key == "clamp") clamp = parse_double(value, what);
  else if (key == "inn_latent") inn_latent = size();
  else throw ConfigError("unknown solver option '" + std::string(key) + "'");
}

void SolverConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("solver: " + msg); };
  auto rate = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must lie in [0, 1]");
  };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (epochs == 0) fail("epochs must be at least 1");
  if (batch_size == 0) fail("batch_size must be at least 1");
  if (patience < 1) fail("patience must be at least 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
  if (!(boundary_weight >= 0.0)) fail("boundary_weight must be non-negative");
  if (!(time_budget_s >= 0.0)) fail("time_budget_s must be non-negative");
  for (auto w : hidden) if (w == 0) fail("hidden widths must be positive");
  for (auto w : forward_hidden) if (w == 0) fail("forward_hidden widths must be positive");
  if (na_iterations == 0) fail("na_iterations must be at least 1");
  if (!(na_lr > 0.0)) fail("na_lr must be positive");
  rate(crossover_rate, "crossover_rate");
  rate(mutation_rate, "mutation_rate");
  if (population < elitism + 2) fail("population must be at least elitism + 2");
  if (components < 1) fail("components (K) must be at least 1");
  if (!(variance_floor > 0.0)) fail("variance_floor must be positive");
  if (latent_dim < 1) fail("latent_dim must be at least 1");
  if (!(kl_weight >= 0.0)) fail("kl_weight (alpha) must be non-negative");
  if (blocks < 1) fail("blocks must be at least 1");
  if (!(sigma > 0.0)) fail("sigma must be positive");
  if (!(clamp >= 0.0)) fail("clamp must be non-negative");
}

// --- Normalizer -------------------------------------------------------------

Normalizer Normalizer::identity(const em::TaskSpec& spec) {
  Normalizer n;
  n.lower = spec.lower;
  n.upper = spec.upper;
  n.spectrum_mean.assign(spec.spectrum_dim, 0.0);
  return n;
}

Normalizer Normalizer::fit(const em::TaskSpec& spec, const data::Dataset& train) {
  if (train.size() == 0) throw ConfigError("normalizer: empty training split");
  Normalizer n = identity(spec);
  const std::size_t d = spec.spectrum_dim;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto s = train.spectrum(i);
    for (std::size_t k = 0; k < d; ++k) n.spectrum_mean[k] += s[k];
  }
  for (auto& m : n.spectrum_mean) m /= static_cast<double>(train.size());
  double var = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto s = train.spectrum(i);
    for (std::size_t k = 0; k < d; ++k) var += (s[k] - n.spectrum_mean[k]) * (s[k] - n.spectrum_mean[k]);
  }
  var /= static_cast<double>(train.size() * d);
  n.spectrum_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  return n;
}

void Normalizer::design_to_unit(std::span<const double> g, std::span<double> u) const {
  for (std::size_t i = 0; i < lower.size(); ++i) {
    u[i] = (2.0 * g[i] - (lower[i] + upper[i])) / (upper[i] - lower[i]);
  }
}

void Normalizer::unit_to_design(std::span<const double> u, std::span<double> g) const {
  for (std::size_t i = 0; i < lower.size(); ++i) {
    const double v = 0.5 * (lower[i] + upper[i]) + 0.5 * (upper[i] - lower[i]) * u[i];
    g[i] = std::clamp(v, lower[i], upper[i]);
  }
}

void Normalizer::spectrum_to_unit(std::span<const double> s, std::span<double> out) const {
  for (std::size_t k = 0; k < spectrum_mean.size(); ++k) out[k] = (s[k] - spectrum_mean[k]) / spectrum_scale;
}

void Normalizer::write(Checkpoint& ckpt) const {
  ckpt.put("norm.lower", {lower.size()}, lower);
  ckpt.put("norm.upper", {upper.size()}, upper);
  ckpt.put("norm.spectrum_mean", {spectrum_mean.size()}, spectrum_mean);
  ckpt.put_scalar("norm.spectrum_scale", spectrum_scale);
}

Normalizer Normalizer::read(const Checkpoint& ckpt) {
  Normalizer n;
  n.lower = ckpt.get("norm.lower").values;
  n.upper = ckpt.get("norm.upper").values;
  n.spectrum_mean = ckpt.get("norm.spectrum_mean").values;
  n.spectrum_scale = ckpt.get_scalar("norm.spectrum_scale");
  return n;
}

// --- boundary loss ----------------------------------------------------------

std::vector<double> boundary_loss(std::span<const double> designs, std::size_t rows, std::span<const double> mu,
                                  std::span<const double> range) {
  const std::size_t d = mu.size();
  if (range.size() != d || designs.size() != rows * d) {
    throw ShapeError("boundary_loss: designs do not match the dimension of mu and R");
  }
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      out[r] += std::max(0.0, std::fabs(designs[r * d + i] - mu[i]) - 0.5 * range[i]);
    }
  }
  return out;
}

double boundary_loss(std::span<const double> design, std::span<const double> mu, std::span<const double> range) {
  return boundary_loss(design, 1, mu, range)[0];
}

ad::Tensor boundary_loss_unit(const ad::Tensor& u) {
  return ad::mean(ad::row_sum(ad::relu(ad::abs(u) - 1.0)));
}

// --- InverseSolver ----------------------------------------------------------

InverseSolver::InverseSolver(SolverConfig config, em::TaskSpec spec)
    : config_(std::move(config)), spec_(std::move(spec)), norm_(Normalizer::identity(spec_)) {
  config_.validate();
}

void InverseSolver::set_normalizer(Normalizer norm) {
  if (norm.design_dim() != spec_.design_dim || norm.spectrum_dim() != spec_.spectrum_dim) {
    throw ShapeError(spec_.name + ": normalizer dimensions do not match the task");
  }
  norm_ = std::move(norm);
}

namespace {

ad::Tensor design_tensor(const Normalizer& norm, const data::Dataset& d) {
  std::vector<double> u(d.size() * d.design_dim);
  for (std::size_t i = 0; i < d.size(); ++i) {
    norm.design_to_unit(d.design(i), {u.data() + i * d.design_dim, d.design_dim});
  }
  return ad::Tensor::matrix(d.size(), d.design_dim, std::move(u));
}

ad::Tensor spectrum_tensor(const Normalizer& norm, const data::Dataset& d) {
  std::vector<double> s(d.size() * d.spectrum_dim);
  for (std::size_t i = 0; i < d.size(); ++i) {
    norm.spectrum_to_unit(d.spectrum(i), {s.data() + i * d.spectrum_dim, d.spectrum_dim});
  }
  return ad::Tensor::matrix(d.size(), d.spectrum_dim, std::move(s));
}

}  // namespace

TrainReport InverseSolver::train(const data::Dataset& data) {
  if (data.design_dim != spec_.design_dim || data.spectrum_dim != spec_.spectrum_dim) {
    throw ShapeError(std::string(to_string(kind())) + ": dataset shape does not match task '" + spec_.name + "'");
  }
  const auto tr = data.subset(data::Split::Train);
  if (tr.size() < 2) throw ConfigError(std::string(to_string(kind())) + ": need at least two training rows");
  norm_ = Normalizer::fit(spec_, tr);
  auto report = fit(make_batch(data, data::Split::Train), make_batch(data, data::Split::Val));
  trained_ = true;
  return report;
}

InverseSolver::Batch InverseSolver::make_batch(const data::Dataset& data, data::Split split) const {
  const auto rows = data.subset(split);
  if (rows.size() == 0) return {};
  return {design_tensor(norm_, rows), spectrum_tensor(norm_, rows)};
}

ProposalSet InverseSolver::propose(std::span<const double> target, std::size_t T, std::uint64_t seed) const {
  const char* name = to_string(kind());
  if (!trained_) throw ConfigError(std::string(name) + ": propose called before training or loading");
  if (T == 0) throw ConfigError(std::string(name) + ": T must be at least 1");
  if (target.size() != spec_.spectrum_dim) {
    throw ShapeError(std::string(name) + ": target has " + std::to_string(target.size()) + " values, expected " +
                     std::to_string(spec_.spectrum_dim));
  }
  std::vector<double> s(spec_.spectrum_dim);
  norm_.spectrum_to_unit(target, s);
  const auto st = ad::Tensor::matrix(1, spec_.spectrum_dim, std::move(s));
  std::mt19937_64 rng(seed);
  ProposalSet out;
  out.design_dim = spec_.design_dim;
  std::vector<double> predicted;
  const auto units = propose_unit(st, T, rng, &predicted);
  if (units.size() != T * spec_.design_dim) {
    throw ShapeError(std::string(name) + ": solver produced the wrong number of proposals");
  }
  out.designs.resize(units.size());
  for (std::size_t i = 0; i < T; ++i) {
    norm_.unit_to_design({units.data() + i * out.design_dim, out.design_dim},
                         {out.designs.data() + i * out.design_dim, out.design_dim});
  }
  if (predicted.size() == T) out.predicted_errors = std::move(predicted);
  return out;
}

nn::MlpSpec InverseSolver::mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                               std::uint64_t stream, nn::Activation output) const {
  return nn::MlpSpec::make(in, hidden, out, config_.activation, output, config_.batchnorm,
                           data::mix_seed(config_.seed, stream));
}

void InverseSolver::save(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, std::string>>& extra) const {
  if (!trained_) throw ConfigError(std::string(to_string(kind())) + ": nothing to save before training");
  Checkpoint ckpt;
  norm_.write(ckpt);
  write_state(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ckpt.save(path);
  std::ofstream ms(data::manifest_path(path));
  if (!ms) throw MissingArtifact("solver: cannot write manifest for " + path.string());
  ms << "task = " << spec_.name << '\n';
  for (const auto& [k, v] : config_.entries()) ms << "solver." << k << " = " << v << '\n';
  for (const auto& [k, v] : extra) ms << k << " = " << v << '\n';
}

// --- training loop ----------------------------------------------------------

namespace detail {

LoopSpec loop_spec(const SolverConfig& config, std::string label, std::uint64_t stream) {
  LoopSpec s;
  s.label = std::move(label);
  s.epochs = config.epochs;
  s.batch_size = config.batch_size;
  s.lr = config.lr;
  s.patience = config.patience;
  s.lr_decay = config.lr_decay;
  s.time_budget_s = config.time_budget_s;
  s.seed = data::mix_seed(config.seed, stream);
  return s;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

ad::Tensor gather_rows(const ad::Tensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t c = t.cols();
  const auto src = t.values();
  std::vector<double> out(rows.size() * c);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[r] * c), c, out.begin() + static_cast<std::ptrdiff_t>(r * c));
  }
  return ad::Tensor::matrix(rows.size(), c, std::move(out));
}

ad::Tensor normal_tensor(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n * d);
  for (auto& x : v) x = dist(rng);
  return ad::Tensor::matrix(n, d, std::move(v));
}

TrainReport run_training(const LoopSpec& spec, std::size_t rows, std::vector<nn::NamedParameter> params,
                         const LoopHooks& hooks) {
  using clock = std::chrono::steady_clock;
  if (rows == 0) throw ConfigError(spec.label + ": no training rows");
  const auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  optim::Adam adam(std::move(params), {.lr = spec.lr});
  optim::PlateauScheduler scheduler(spec.lr, {.patience = spec.patience, .factor = spec.lr_decay});
  std::mt19937_64 rng(spec.seed);
  auto order = all_rows(rows);
  const std::size_t bs = std::clamp<std::size_t>(spec.batch_size, 1, rows);

  TrainReport report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < rows; b += bs) {
      const std::size_t e = std::min(rows, b + bs);
      // A trailing single row would break batch statistics; it rejoins the shuffle next epoch.
      if (e - b < 2 && b > 0) break;
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                         order.begin() + static_cast<std::ptrdiff_t>(e));
      const auto loss = hooks.batch_loss(idx);
      const double v = loss.item();
      if (!std::isfinite(v)) {
        throw NumericError(spec.label + ": training loss became non-finite at epoch " + std::to_string(epoch));
      }
      ad::backward(loss);
      adam.step();
      total += v * static_cast<double>(e - b);
      seen += e - b;
    }
    const double train_loss = total / static_cast<double>(seen);
    double val = train_loss;
    if (hooks.val_loss) {
      ad::NoGradGuard no_grad;
      val = hooks.val_loss();
    }
    if (!std::isfinite(val)) {
      throw NumericError(spec.label + ": validation loss became non-finite at epoch " + std::to_string(epoch));
    }
    report.train_loss.push_back(train_loss);
    report.val_loss.push_back(val);
    if (val < report.best_val_loss) {
      report.best_val_loss = val;
      report.best_epoch = epoch;
      hooks.snapshot();
    }
    scheduler.step(train_loss);
    adam.set_learning_rate(scheduler.learning_rate());
    if (spec.time_budget_s > 0.0 && elapsed() > spec.time_budget_s) {
      report.budget_exhausted = true;
      break;
    }
  }
  hooks.restore();
  report.seconds = elapsed();
  return report;
}

}  // namespace detail
}  // namespace invbench::solvers
