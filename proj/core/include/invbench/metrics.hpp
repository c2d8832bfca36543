#pragma once

// Evaluation mathematics: re-simulation error, r_T curves, gamma, D_r,
// nearest-spectra clusters and timing.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invbench/dataset.hpp"
#include "invbench/solvers.hpp"
#include "invbench/tasks.hpp"

namespace invbench::metrics {

// Mean over coordinates of (s_k - s_hat_k)^2.
double resim_mse(std::span<const double> s, std::span<const double> s_hat);

struct RtCurve {
  std::string solver;
  std::string task;
  std::size_t targets = 0;
  std::size_t t_max = 0;
  std::vector<double> r;    // r[T-1], mean over targets of the best error in the first T
  std::vector<double> p25;  // percentile bands of the same per-target values
  std::vector<double> p75;
  std::vector<double> best;  // targets x t_max running minima

  double at(std::size_t T) const { return r.at(T - 1); }
};

// `errors` is targets x t_max, row i holding the re-simulation errors of
// target i's proposals in the solver's order.
RtCurve rt_from_errors(std::span<const double> errors, std::size_t targets, std::size_t t_max);

// Linear interpolation between order statistics (q in [0, 1]).
double percentile(std::vector<double> values, double q);

struct RtRun {
  RtCurve curve;
  std::vector<double> proposals;  // targets x t_max x design_dim
  std::vector<double> errors;     // targets x t_max
  double propose_seconds = 0.0;   // summed over targets, simulation excluded
};

// Proposals for row i of `test` come from seed mix_seed(seed, i); each is
// re-simulated through `model`. Results do not depend on `jobs`.
RtRun rt_curve(const solvers::InverseSolver& solver, const em::ForwardModel& model, const data::Dataset& test,
               std::size_t t_max, std::uint64_t seed, unsigned jobs = 1);

// r_NN / r_NA at T = 1; larger means more non-unique.
double gamma(double r_nn_1, double r_na_1);

// Mean within-cluster pairwise squared distance over the mean all-pairs
// squared distance, on designs scaled to [0, 1] by the bounds. Each cluster
// is a row-major block of K >= 2 designs.
double d_r(std::span<const double> designs, std::size_t dim, const std::vector<std::vector<double>>& clusters,
           std::span<const double> lower, std::span<const double> upper);

// Sum over pairs i < j of |x_i - x_j|^2 for n row-major points.
double pairwise_sq_sum(std::span<const double> points, std::size_t n, std::size_t dim);

struct Neighbours {
  std::vector<std::size_t> rows;  // indices into the searched dataset
  std::vector<double> distances;
  std::vector<double> designs;  // k x design_dim
  std::vector<double> spectra;  // k x spectrum_dim
};

// k nearest rows by Euclidean spectrum distance; ties go to the lower row.
Neighbours nearest_spectra(const data::Dataset& data, std::span<const double> query, std::size_t k);

// C clusters, each a randomly chosen query row and its K - 1 nearest
// neighbours by spectrum.
std::vector<std::vector<double>> spectral_clusters(const data::Dataset& data, std::size_t C, std::size_t K,
                                                   std::uint64_t seed);

struct Timing {
  double train_seconds = 0.0;
  double seconds_per_200 = 0.0;
};

Timing timing_report(double train_seconds, double propose_seconds, std::size_t proposals);

struct EvalReport {
  std::string task;
  std::string solver;
  bool deterministic = false;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string dataset_hash;
  std::size_t parameter_count = 0;
  std::size_t targets = 0;
  std::size_t t_max = 0;
  std::vector<double> r, p25, p75;
  Timing timing;
  std::optional<double> gamma;
  std::optional<double> d_r;

  double r_at(std::size_t T) const { return r.at(T - 1); }
};

EvalReport make_report(const RtCurve& curve, const solvers::InverseSolver& solver);

void write_report(std::ostream& os, const EvalReport& report);
EvalReport read_report(std::istream& is);
void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

}  // namespace invbench::metrics
