#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "invbench/flows.hpp"
#include "invbench/solvers.hpp"

namespace invbench::solvers {
namespace {

using ad::Tensor;

constexpr double kLog2Pi = 1.8378770664093454836;

data::Dataset make_data(const em::ForwardModel& model, data::SplitCounts counts, std::uint64_t seed) {
  return data::generate_dataset(model, counts, seed);
}

SolverConfig small(Kind kind, std::size_t epochs = 5) {
  SolverConfig c;
  c.kind = kind;
  c.seed = 3;
  c.hidden = {16, 16};
  c.forward_hidden = {16, 16};
  c.epochs = epochs;
  c.batch_size = 64;
  c.na_iterations = 20;
  c.population = 24;
  c.generations = 3;
  c.latent_dim = 2;
  c.blocks = 2;
  return c;
}

// --- boundary loss ----------------------------------------------------------

TEST(BoundaryLoss, SpotValues) {
  const std::vector<double> mu{0.5}, range{1.0};
  EXPECT_EQ(boundary_loss(std::vector<double>{0.5}, mu, range), 0.0);
  EXPECT_EQ(boundary_loss(std::vector<double>{1.0}, mu, range), 0.0);
  EXPECT_EQ(boundary_loss(std::vector<double>{0.0}, mu, range), 0.0);
  EXPECT_DOUBLE_EQ(boundary_loss(std::vector<double>{1.25}, mu, range), 0.25);
  EXPECT_DOUBLE_EQ(boundary_loss(std::vector<double>{-0.5, 3.0}, std::vector<double>{0, 0}, std::vector<double>{2, 2}),
                   2.0);
}

TEST(BoundaryLoss, UnitTensorMatchesScalar) {
  const auto u = Tensor::matrix(2, 2, {0.2, -1.5, 2.0, 0.0});
  EXPECT_DOUBLE_EQ(boundary_loss_unit(u).item(), 0.5 * (0.5 + 1.0));
}

// --- config -----------------------------------------------------------------

TEST(SolverConfig, EntriesRoundTrip) {
  SolverConfig c = small(Kind::MDN);
  c.lr = 0.1 + 0.2;
  c.hidden = {};
  SolverConfig back;
  for (const auto& [k, v] : c.entries()) back.set(k, v);
  EXPECT_EQ(back.entries(), c.entries());
  EXPECT_EQ(back.lr, c.lr);
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  c.kl_weight = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.mutation_rate = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.components = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(c.set("no_such_key", "1"), ConfigError);
  EXPECT_THROW(c.set("lr", "fast"), ConfigError);
  c = {};
  c.kind = Kind::VAE;
  c.kl_weight = -0.5;
  EXPECT_THROW(make_solver(c, em::task_spec("toy")), ConfigError);
}

// --- NN ---------------------------------------------------------------------

TEST(DirectNetwork, OverfitsBijectiveLinearToy) {
  em::LinearModel lin;
  const auto d = make_data(lin, {20, 0, 0}, 1);
  SolverConfig c;
  c.kind = Kind::NN;
  c.hidden = {};
  c.lr = 0.02;
  c.epochs = 3000;
  c.batch_size = 20;
  c.patience = 200;
  DirectNetwork nn(c, lin.spec());
  nn.train(d);
  double mse = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto p = nn.propose(d.spectrum(i), 1, 0);
    for (std::size_t j = 0; j < 2; ++j) mse += std::pow(p.designs[j] - d.design(i)[j], 2);
  }
  EXPECT_LT(mse / 40.0, 1e-6);
}

TEST(DirectNetwork, RepeatsOneClippedPrediction) {
  em::ToyModel toy;
  auto nn = make_solver(small(Kind::NN), toy.spec());
  nn->train(make_data(toy, {200, 50, 0}, 2));
  std::vector<double> wild(32, 25.0);  // far outside the training spectra
  const auto p = nn->propose(wild, 5, 9);
  ASSERT_EQ(p.size(), 5u);
  for (std::size_t i = 1; i < 5; ++i) {
    EXPECT_EQ(std::vector<double>(p.design(i).begin(), p.design(i).end()),
              std::vector<double>(p.design(0).begin(), p.design(0).end()));
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_TRUE(toy.spec().contains(p.design(i)));
}

// --- TD ---------------------------------------------------------------------

TEST(Tandem, StageTwoNeedsStageOne) {
  em::ToyModel toy;
  Tandem td(small(Kind::TD), toy.spec());
  EXPECT_THROW(td.train_inverse(make_data(toy, {100, 20, 0}, 1)), MissingArtifact);
}

TEST(Tandem, ForwardFrozenDuringStageTwo) {
  em::ToyModel toy;
  const auto d = make_data(toy, {400, 100, 0}, 5);
  Tandem td(small(Kind::TD, 8), toy.spec());
  td.train_forward(d);
  const auto before = td.forward_fingerprint();
  td.train_inverse(d);
  EXPECT_EQ(td.forward_fingerprint(), before);
  const auto p = td.propose(d.spectrum(0), 3, 1);
  EXPECT_EQ(std::vector<double>(p.design(0).begin(), p.design(0).end()),
            std::vector<double>(p.design(2).begin(), p.design(2).end()));
}

TEST(Tandem, StageTwoLossDecreasesOnAverage) {
  em::ToyModel toy;
  const auto d = make_data(toy, {1000, 200, 0}, 6);
  auto c = small(Kind::TD, 30);
  c.hidden = {32, 32};
  c.forward_hidden = {32, 32};
  Tandem td(c, toy.spec());
  td.train_forward(d);
  const auto r = td.train_inverse(d);
  ASSERT_EQ(r.train_loss.size(), 30u);
  // Mean epoch-to-epoch change is negative and late epochs sit below early ones.
  double early = 0, late = 0;
  for (int i = 0; i < 5; ++i) {
    early += r.train_loss[i];
    late += r.train_loss[25 + i];
  }
  EXPECT_LT(late, early);
  EXPECT_LT(r.train_loss.back() - r.train_loss.front(), 0.0);
}

// --- NA ---------------------------------------------------------------------

// A linear surrogate reproducing the linear toy exactly in normalized units.
nn::Mlp exact_linear_surrogate(const Normalizer& norm) {
  nn::Mlp net(nn::MlpSpec::make(2, {}, 2, nn::Activation::Linear, nn::Activation::Linear, false, 0));
  auto p = net.parameters();
  auto w = p[0].tensor.mutable_values();  // in x out
  auto b = p[1].tensor.mutable_values();
  for (std::size_t out = 0; out < 2; ++out) {
    for (std::size_t in = 0; in < 2; ++in) w[in * 2 + out] = em::LinearModel::kMatrix[out][in] / norm.spectrum_scale;
    b[out] = -norm.spectrum_mean[out] / norm.spectrum_scale;
  }
  return net;
}

TEST(NeuralAdjoint, PerfectSurrogateConverges) {
  em::LinearModel lin;
  const auto d = make_data(lin, {200, 0, 0}, 4);
  auto c = small(Kind::NA);
  c.na_iterations = 1500;
  c.na_lr = 0.02;
  NeuralAdjoint na(c, lin.spec());
  na.set_normalizer(Normalizer::fit(lin.spec(), d));
  na.set_surrogate(exact_linear_surrogate(na.normalizer()));
  const std::vector<double> g{0.3, -0.6};
  const auto target = lin.simulate(g);
  const auto p = na.propose(target, 5, 11);
  ASSERT_EQ(p.predicted_errors.size(), 5u);
  EXPECT_LT(p.predicted_errors[0], 1e-8);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_LE(p.predicted_errors[i - 1], p.predicted_errors[i]);
  EXPECT_NEAR(p.design(0)[0], 0.3, 1e-3);
  EXPECT_NEAR(p.design(0)[1], -0.6, 1e-3);
}

TEST(NeuralAdjoint, RankedInBoundsAndNeedsEnoughCandidates) {
  em::ToyModel toy;
  auto c = small(Kind::NA);
  NeuralAdjoint na(c, toy.spec());
  na.train(make_data(toy, {300, 50, 0}, 8));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = na.propose(toy.simulate(std::vector<double>{u(rng), u(rng)}), 6, trial);
    ASSERT_EQ(p.size(), 6u);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_TRUE(toy.spec().contains(p.design(i)));
    for (std::size_t i = 1; i < p.size(); ++i) EXPECT_LE(p.predicted_errors[i - 1], p.predicted_errors[i]);
  }
  c.na_candidates = 3;
  NeuralAdjoint few(c, toy.spec());
  few.set_surrogate(na.surrogate());
  EXPECT_THROW(few.propose(toy.simulate(std::vector<double>{0.1, 0.1}), 4, 0), ConfigError);
}

// --- GA ---------------------------------------------------------------------

TEST(Genetic, SelectionProportionalToFitness) {
  const auto p = select_probabilities(std::vector<double>{1.0, 3.0});
  EXPECT_DOUBLE_EQ(p[0], 0.25);
  EXPECT_DOUBLE_EQ(p[1], 0.75);
}

TEST(Genetic, SinglePointCrossover) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{-1, -2, -3, -4, -5};
  const auto [c1, c2] = single_point_crossover(a, b, 2);
  EXPECT_EQ(c1, (std::vector<double>{1, 2, -3, -4, -5}));
  EXPECT_EQ(c2, (std::vector<double>{-1, -2, 3, 4, 5}));
}

TEST(Genetic, ElitismKeepsBestFitnessMonotone) {
  const std::vector<double> goal{0.3, -0.2, 0.7};
  BatchErrors errors = [&](std::span<const double> rows, std::size_t count) {
    std::vector<double> out(count, 0.0);
    for (std::size_t r = 0; r < count; ++r) {
      for (std::size_t j = 0; j < 3; ++j) out[r] += std::pow(rows[r * 3 + j] - goal[j], 2) / 3.0;
    }
    return out;
  };
  GaOptions o{.population = 30, .generations = 40, .crossover_rate = 0.8, .mutation_rate = 0.1, .elitism = 1};
  std::mt19937_64 rng(12);
  const auto r = ga_evolve(3, errors, o, rng);
  ASSERT_EQ(r.best_fitness.size(), 41u);
  for (std::size_t g = 1; g < r.best_fitness.size(); ++g) EXPECT_GE(r.best_fitness[g], r.best_fitness[g - 1]);
  EXPECT_GT(r.best_fitness.back(), r.best_fitness.front());
  for (std::size_t i = 1; i < o.population; ++i) EXPECT_GE(r.fitness[i - 1], r.fitness[i]);
}

TEST(Genetic, ProposalsInBoundsAndPopulationChecked) {
  em::ToyModel toy;
  auto c = small(Kind::GA);
  GeneticAlgorithm ga(c, toy.spec());
  ga.train(make_data(toy, {300, 50, 0}, 8));
  const auto p = ga.propose(toy.simulate(std::vector<double>{0.4, 0.1}), 10, 2);
  ASSERT_EQ(p.size(), 10u);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_TRUE(toy.spec().contains(p.design(i)));
  EXPECT_THROW(ga.propose(toy.simulate(std::vector<double>{0.4, 0.1}), 25, 2), ConfigError);
}

// --- MDN --------------------------------------------------------------------

TEST(Mdn, NllSpotValues) {
  MixtureParams m{.dim = 2, .weights = {1.0}, .means = {0.3, -0.1}, .variances = {1.0, 1.0}};
  EXPECT_NEAR(mdn_nll(m, std::vector<double>{0.3, -0.1}, false), 0.0, 1e-12);
  MixtureParams std_normal{.dim = 1, .weights = {1.0}, .means = {0.0}, .variances = {1.0}};
  EXPECT_NEAR(mdn_nll(std_normal, std::vector<double>{0.0}, true), 0.5 * std::log(2 * M_PI), 1e-12);
  EXPECT_NEAR(mdn_nll(std_normal, std::vector<double>{0.0}, true), 0.9189385332046727, 1e-12);
}

TEST(Mdn, TwoComponentBruteForce) {
  MixtureParams m{.dim = 2, .weights = {0.5, 0.5}, .means = {0.0, 1.0, -0.5, 0.2}, .variances = {0.3, 0.8, 1.7, 0.05}};
  const std::vector<double> g{0.25, 0.4};
  double density = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    double comp = m.weights[i];
    for (std::size_t j = 0; j < 2; ++j) {
      const double v = m.variances[i * 2 + j], diff = g[j] - m.means[i * 2 + j];
      comp *= std::exp(-0.5 * diff * diff / v) / std::sqrt(2 * M_PI * v);
    }
    density += comp;
  }
  EXPECT_NEAR(mdn_nll(m, g, true), -std::log(density), 1e-12);
  m.variances[0] = 0.0;
  EXPECT_THROW(mdn_nll(m, g), DomainError);
}

TEST(Mdn, NetworkLossMatchesScalarNll) {
  em::ToyModel toy;
  auto c = small(Kind::MDN);
  c.components = 3;
  MixtureDensity mdn(c, toy.spec());
  std::vector<double> sv(32), uv{0.2, -0.4};
  for (std::size_t k = 0; k < 32; ++k) sv[k] = std::sin(0.3 * static_cast<double>(k));
  const auto s = Tensor::matrix(1, 32, sv);
  const auto u = Tensor::matrix(1, 2, uv);
  EXPECT_NEAR(mdn.loss(s, u, nn::Mode::Eval).item(), mdn_nll(mdn.mixture(s), uv, true), 1e-12);
  c.nll_constant = false;
  MixtureDensity bare(c, toy.spec());
  EXPECT_NEAR(bare.loss(s, u, nn::Mode::Eval).item(), mdn_nll(bare.mixture(s), uv, false), 1e-12);
  EXPECT_NEAR(mdn.loss(s, u, nn::Mode::Eval).item() - bare.loss(s, u, nn::Mode::Eval).item(), kLog2Pi, 1e-12);
}

TEST(Mdn, ComponentFrequenciesWithinBinomialBand) {
  MixtureParams m{.dim = 1, .weights = {0.2, 0.5, 0.3}, .means = {-5, 0, 5}, .variances = {0.01, 0.01, 0.01}};
  std::mt19937_64 rng(77);
  const std::size_t n = 10000;
  const auto draw = sample_mixture(m, n, rng);
  std::vector<double> counts(3, 0.0);
  for (auto c : draw.components) counts[c] += 1;
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = m.weights[i];
    EXPECT_NEAR(counts[i] / n, p, 3.0 * std::sqrt(p * (1 - p) / n)) << i;
  }
  // Ordered by component weight: all draws of component 1 first, then 2, then 0.
  std::vector<std::size_t> rank{2, 0, 1};
  for (std::size_t t = 1; t < n; ++t) EXPECT_LE(rank[draw.components[t - 1]], rank[draw.components[t]]);
}

TEST(Mdn, CollapsedMixtureReturnsMean) {
  MixtureParams m{.dim = 2, .weights = {1.0}, .means = {0.1, -0.7}, .variances = {1e-12, 1e-12}};
  std::mt19937_64 rng(1);
  const auto draw = sample_mixture(m, 4, rng);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_NEAR(draw.designs[t * 2], 0.1, 1e-5);
    EXPECT_NEAR(draw.designs[t * 2 + 1], -0.7, 1e-5);
  }
}

// --- VAE --------------------------------------------------------------------

TEST(Vae, KlSpotValues) {
  EXPECT_EQ(vae_kl(std::vector<double>{0, 0}, std::vector<double>{1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(vae_kl(std::vector<double>{1}, std::vector<double>{1}), 0.5);
  const auto mu = Tensor::matrix(2, 1, {1.0, 0.0});
  const auto logvar = Tensor::matrix(2, 1, {0.0, std::log(2.0)});
  EXPECT_NEAR(vae_kl(mu, logvar).item(), 0.5 * (0.5 + vae_kl(std::vector<double>{0}, std::vector<double>{2})), 1e-15);
}

// --- shared contracts -------------------------------------------------------

class EverySolver : public ::testing::TestWithParam<Kind> {};

TEST_P(EverySolver, ProposalsInBoundsAndReproducible) {
  em::ToyModel toy;
  const auto d = make_data(toy, {300, 60, 0}, 21);
  auto solver = make_solver(small(GetParam(), 3), toy.spec());
  solver->train(d);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 3; ++trial) {
    const auto target = toy.simulate(std::vector<double>{u(rng), u(rng)});
    const auto a = solver->propose(target, 7, 100 + trial);
    ASSERT_EQ(a.size(), 7u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(toy.spec().contains(a.design(i)));
    EXPECT_EQ(a.designs, solver->propose(target, 7, 100 + trial).designs);
  }
}

TEST_P(EverySolver, CheckpointRoundTrip) {
  em::ToyModel toy;
  const auto d = make_data(toy, {200, 40, 0}, 22);
  auto solver = make_solver(small(GetParam(), 2), toy.spec());
  solver->train(d);
  const auto path = std::filesystem::temp_directory_path() /
                    ("invbench_solver_" + std::string(to_string(GetParam())) + ".ibchk");
  solver->save(path, {{"val_r1", "0.5"}});
  const auto back = load_solver(path);
  EXPECT_EQ(back->kind(), GetParam());
  EXPECT_EQ(back->parameter_count(), solver->parameter_count());
  const auto target = d.spectrum(3);
  EXPECT_EQ(back->propose(target, 4, 8).designs, solver->propose(target, 4, 8).designs);
  std::filesystem::remove(path);
  std::filesystem::remove(data::manifest_path(path));
}

INSTANTIATE_TEST_SUITE_P(Kinds, EverySolver, ::testing::ValuesIn(kAllKinds),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Solvers, UntrainedProposeRejected) {
  auto solver = make_solver(small(Kind::NN), em::task_spec("toy"));
  EXPECT_THROW(solver->propose(std::vector<double>(32, 0.0), 1, 0), ConfigError);
}

TEST(Solvers, DivergentTrainingReported) {
  em::ToyModel toy;
  auto c = small(Kind::NN, 20);
  c.lr = 1e300;
  c.hidden = {64, 64};
  auto solver = make_solver(c, toy.spec());
  EXPECT_THROW(solver->train(make_data(toy, {300, 50, 0}, 1)), NumericError);
}

}  // namespace
}  // namespace invbench::solvers
