#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "invbench/physics.hpp"
#include "invbench/tasks.hpp"
#include "support/optics_oracle.hpp"

namespace invbench::em {
namespace {

using cplx = std::complex<double>;
using testing::airy_slab;
using testing::bhmie_efficiency;

TEST(FilmStack, MatchesAirySlab) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> thick(5, 500), lam(240, 2000), idx(1.2, 3.5);
  for (int trial = 0; trial < 200; ++trial) {
    const double n1 = idx(rng), d = thick(rng), l = lam(rng);
    const FilmLayer layer{n1, d, {}};
    const auto got = solve_film_stack({&layer, 1}, 1.0, 1.45, l);
    const auto [r, t] = airy_slab(1.0, n1, 1.45, d, l);
    EXPECT_NEAR(got.reflectance, r, 1e-10);
    EXPECT_NEAR(got.transmittance, t, 1e-10);
    EXPECT_EQ(got.absorptance, 0.0);
  }
}

TEST(FilmStack, BareSheetOnInterface) {
  // A conductive sheet between two half spaces: r = (n0 - ns - s)/(n0 + ns + s).
  const cplx sheet(0.3, -0.7);
  const FilmLayer layer{1.45, 0.0, sheet};
  const auto got = solve_film_stack({&layer, 1}, 1.0, 1.45, 800);
  const cplx denom = 1.0 + 1.45 + sheet;
  const cplx r = (1.0 - 1.45 - sheet) / denom;
  const cplx t = 2.0 / denom;
  EXPECT_NEAR(got.reflectance, std::norm(r), 1e-14);
  EXPECT_NEAR(got.transmittance, 1.45 * std::norm(t), 1e-14);
  EXPECT_NEAR(got.absorptance, sheet.real() * std::norm(t), 1e-14);
}

TEST(FilmStack, EnergyConservedOnRandomDesigns) {
  StackModel model;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> thick(20, 100);
  const auto& grid = model.spec().grid;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<FilmLayer> layers(5);
    for (auto& l : layers) l.thickness_nm = thick(rng);
    for (double lambda : grid) {
      const auto sheet = graphene_drude_sheet(lambda, 1.0, 5e-15);
      for (auto& l : layers) {
        l.index = 2.0;
        l.sheet = sheet;
      }
      const auto r = solve_film_stack(layers, 1.0, 1.45, lambda);
      worst = std::max(worst, std::fabs(r.reflectance + r.transmittance + r.absorptance - 1.0));
      ASSERT_GE(r.absorptance, 0.0);
      ASSERT_LE(r.absorptance, 1.0);
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(FilmStack, NoSheetsNoAbsorption) {
  StackModel model({.graphene = false});
  const auto a = model.simulate(std::vector<double>{20, 40, 60, 80, 100});
  for (double v : a) EXPECT_EQ(v, 0.0);
}

TEST(Graphene, DrudeClosedForm) {
  const double lambda = 1000.0, ef = 0.5, tau = 1e-14;
  const double omega = 2 * kPi * kSpeedOfLight / (lambda * 1e-9);
  const double e = kElementaryCharge;
  const cplx expected = e * e * ef * e / (kPi * kHbar * kHbar) * tau / cplx(1, omega * tau) * kVacuumImpedance;
  const auto got = graphene_drude_sheet(lambda, ef, tau);
  EXPECT_NEAR(std::abs(got - expected) / std::abs(expected), 0.0, 1e-14);
  EXPECT_GT(got.real(), 0.0);
}

TEST(Mie, IndexMatchedShellsDoNotScatter) {
  const std::vector<double> radii{30, 60, 90};
  const std::vector<double> idx{1.33, 1.33, 1.33};
  for (double lambda : {400.0, 600.0, 800.0}) {
    EXPECT_LT(layered_sphere_scattering(radii, idx, 1.33, lambda).efficiency, 1e-20);
  }
}

TEST(Mie, HomogeneousLimitMatchesSingleSphere) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> thick(30, 70), index(1.2, 2.8);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> radii(8);
    double r = 0;
    for (auto& v : radii) v = (r += thick(rng));
    const double n = index(rng);
    const std::vector<double> idx(8, n);
    for (double lambda = 400; lambda <= 800; lambda += 20) {
      const double got = layered_sphere_scattering(radii, idx, 1.0, lambda).efficiency;
      const double want = bhmie_efficiency(n, 2 * kPi * radii.back() / lambda);
      worst = std::max(worst, std::fabs(got - want) / want);
    }
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(Mie, SmallSphereRayleighScaling) {
  ShellModel shell;
  std::vector<double> radii(8);
  for (std::size_t i = 0; i < 8; ++i) radii[i] = 0.6 * static_cast<double>(i + 1);
  const auto idx = shell.shell_indices();
  const auto& grid = shell.spec().grid;
  // Least-squares fit of C = A / lambda^4.
  double num = 0, den = 0;
  std::vector<double> c(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    c[k] = layered_sphere_scattering(radii, idx, 1.0, grid[k]).cross_section_nm2;
    const double basis = std::pow(grid[k], -4.0);
    num += c[k] * basis;
    den += basis * basis;
  }
  const double amp = num / den;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    EXPECT_NEAR(c[k] / (amp * std::pow(grid[k], -4.0)), 1.0, 0.02) << grid[k];
  }
}

TEST(Mie, HomogeneousRayleighAmplitude) {
  const double a = 5.0, n = 1.5;
  const std::vector<double> radii{a};
  const std::vector<double> idx{n};
  const double pol = (n * n - 1) / (n * n + 2);
  for (double lambda : {400.0, 800.0}) {
    const double k = 2 * kPi / lambda;
    const double rayleigh = 8.0 * kPi / 3.0 * std::pow(k, 4) * std::pow(a, 6) * pol * pol;
    EXPECT_NEAR(layered_sphere_scattering(radii, idx, 1.0, lambda).cross_section_nm2 / rayleigh, 1.0, 0.02);
  }
}

TEST(Mie, RejectsBadGeometry) {
  const std::vector<double> radii{50, 40};
  const std::vector<double> idx{1.5, 2.0};
  EXPECT_THROW(layered_sphere_scattering(radii, idx, 1.0, 500), DomainError);
  EXPECT_THROW(layered_sphere_scattering(std::vector<double>{50}, idx, 1.0, 500), DomainError);
}

}  // namespace
}  // namespace invbench::em
