#include "invbench/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "invbench/errors.hpp"
#include "invbench/text.hpp"

namespace invbench::metrics {

double resim_mse(std::span<const double> s, std::span<const double> s_hat) {
  if (s.size() != s_hat.size()) {
    throw ShapeError("resim_mse: lengths " + std::to_string(s.size()) + " and " + std::to_string(s_hat.size()));
  }
  if (s.empty()) throw ShapeError("resim_mse: empty spectra");
  double sum = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) sum += (s[k] - s_hat[k]) * (s[k] - s_hat[k]);
  return sum / static_cast<double>(s.size());
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ShapeError("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

RtCurve rt_from_errors(std::span<const double> errors, std::size_t targets, std::size_t t_max) {
  if (targets == 0 || t_max == 0) throw ConfigError("rt_curve: need at least one target and T_max >= 1");
  if (errors.size() != targets * t_max) throw ShapeError("rt_curve: error matrix does not match targets x T_max");
  RtCurve c;
  c.targets = targets;
  c.t_max = t_max;
  c.best.resize(errors.size());
  for (std::size_t i = 0; i < targets; ++i) {
    double m = errors[i * t_max];
    for (std::size_t t = 0; t < t_max; ++t) {
      m = std::min(m, errors[i * t_max + t]);
      c.best[i * t_max + t] = m;
    }
  }
  std::vector<double> column(targets);
  for (std::size_t t = 0; t < t_max; ++t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < targets; ++i) {
      column[i] = c.best[i * t_max + t];
      sum += column[i];
    }
    c.r.push_back(sum / static_cast<double>(targets));
    c.p25.push_back(percentile(column, 0.25));
    c.p75.push_back(percentile(column, 0.75));
  }
  return c;
}

RtRun rt_curve(const solvers::InverseSolver& solver, const em::ForwardModel& model, const data::Dataset& test,
               std::size_t t_max, std::uint64_t seed, unsigned jobs) {
  const std::size_t n = test.size(), dim = model.spec().design_dim;
  if (n == 0) throw ConfigError("rt_curve: empty test set");
  if (t_max == 0) throw ConfigError("rt_curve: T_max must be at least 1");
  if (test.spectrum_dim != model.spec().spectrum_dim || test.design_dim != dim) {
    throw ShapeError("rt_curve: test set does not match task " + model.spec().name);
  }
  RtRun run;
  run.proposals.resize(n * t_max * dim);
  run.errors.resize(n * t_max);
  std::vector<double> seconds(n, 0.0);

  auto work = [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const auto p = solver.propose(test.spectrum(i), t_max, data::mix_seed(seed, i));
    seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<double> s_hat(model.spec().spectrum_dim);
    for (std::size_t t = 0; t < t_max; ++t) {
      const auto g = p.design(t);
      if (!model.spec().contains(g)) {
        throw DomainError("rt_curve: " + std::string(solvers::to_string(solver.kind())) + " proposal " +
                          std::to_string(t) + " for target " + std::to_string(i) + " is outside the bounds");
      }
      std::copy(g.begin(), g.end(), run.proposals.begin() + static_cast<std::ptrdiff_t>((i * t_max + t) * dim));
      model.simulate_into(g, s_hat);
      run.errors[i * t_max + t] = resim_mse(test.spectrum(i), s_hat);
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::exception_ptr> failures(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) work(i);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }
  run.propose_seconds = std::accumulate(seconds.begin(), seconds.end(), 0.0);
  run.curve = rt_from_errors(run.errors, n, t_max);
  run.curve.solver = solvers::to_string(solver.kind());
  run.curve.task = model.spec().name;
  return run;
}

double gamma(double r_nn_1, double r_na_1) {
  if (!(r_na_1 > 0.0)) throw DomainError("gamma: r_NA must be positive");
  if (!(r_nn_1 > 0.0)) throw DomainError("gamma: r_NN must be positive");
  return r_nn_1 / r_na_1;
}

double pairwise_sq_sum(std::span<const double> points, std::size_t n, std::size_t dim) {
  // sum_{i<j} |x_i - x_j|^2 = n sum_i |x_i - mean|^2, shifted by x_0 so that
  // identical points give exactly zero.
  double total = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double x0 = points[j];
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += points[i * dim + j] - x0;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = points[i * dim + j] - x0 - mean;
      ss += d * d;
    }
    total += ss;
  }
  return static_cast<double>(n) * total;
}

namespace {

std::vector<double> unit_scaled(std::span<const double> designs, std::size_t dim, std::span<const double> lower,
                                std::span<const double> upper) {
  std::vector<double> out(designs.begin(), designs.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t j = i % dim;
    out[i] = (out[i] - lower[j]) / (upper[j] - lower[j]);
  }
  return out;
}

double pair_count(std::size_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

}  // namespace

double d_r(std::span<const double> designs, std::size_t dim, const std::vector<std::vector<double>>& clusters,
           std::span<const double> lower, std::span<const double> upper) {
  if (dim == 0 || designs.size() % dim != 0) throw ShapeError("d_r: designs are not a multiple of the dimension");
  if (lower.size() != dim || upper.size() != dim) throw ShapeError("d_r: bounds do not match the dimension");
  const std::size_t n = designs.size() / dim;
  if (n < 2) throw ConfigError("d_r: need at least two designs");
  if (clusters.empty()) throw ConfigError("d_r: no clusters");
  const auto all = unit_scaled(designs, dim, lower, upper);
  const double denom = pairwise_sq_sum(all, n, dim) / pair_count(n);
  if (!(denom > 0.0)) throw NumericError("d_r: all designs are identical");

  double within = 0.0, pairs = 0.0;
  for (const auto& c : clusters) {
    if (c.size() % dim != 0 || c.size() / dim < 2) throw ConfigError("d_r: each cluster needs at least two designs");
    const std::size_t k = c.size() / dim;
    within += pairwise_sq_sum(unit_scaled(c, dim, lower, upper), k, dim);
    pairs += pair_count(k);
  }
  return (within / pairs) / denom;
}

Neighbours nearest_spectra(const data::Dataset& data, std::span<const double> query, std::size_t k) {
  if (query.size() != data.spectrum_dim) throw ShapeError("nearest_spectra: query length does not match the data");
  if (k == 0 || k >= data.size()) {
    throw ConfigError("nearest_spectra: k = " + std::to_string(k) + " must be in [1, " +
                      std::to_string(data.size()) + ")");
  }
  std::vector<double> dist(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto s = data.spectrum(i);
    double d = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) d += (s[j] - query[j]) * (s[j] - query[j]);
    dist[i] = d;
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return dist[a] != dist[b] ? dist[a] < dist[b] : a < b; });
  Neighbours out;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t r = order[i];
    out.rows.push_back(r);
    out.distances.push_back(std::sqrt(dist[r]));
    out.designs.insert(out.designs.end(), data.design(r).begin(), data.design(r).end());
    out.spectra.insert(out.spectra.end(), data.spectrum(r).begin(), data.spectrum(r).end());
  }
  return out;
}

std::vector<std::vector<double>> spectral_clusters(const data::Dataset& data, std::size_t C, std::size_t K,
                                                   std::uint64_t seed) {
  if (C == 0 || K < 2) throw ConfigError("spectral_clusters: need C >= 1 and K >= 2");
  if (C > data.size()) throw ConfigError("spectral_clusters: more clusters than rows");
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  std::vector<std::vector<double>> clusters;
  for (std::size_t c = 0; c < C; ++c) clusters.push_back(nearest_spectra(data, data.spectrum(rows[c]), K).designs);
  return clusters;
}

Timing timing_report(double train_seconds, double propose_seconds, std::size_t proposals) {
  if (proposals == 0) throw DomainError("timing: zero proposals");
  if (train_seconds < 0.0 || propose_seconds < 0.0) throw DomainError("timing: negative duration");
  return {train_seconds, propose_seconds * 200.0 / static_cast<double>(proposals)};
}

EvalReport make_report(const RtCurve& curve, const solvers::InverseSolver& solver) {
  EvalReport r;
  r.task = curve.task;
  r.solver = curve.solver;
  r.deterministic = solver.deterministic();
  r.seed = solver.config().seed;
  r.parameter_count = solver.parameter_count();
  r.targets = curve.targets;
  r.t_max = curve.t_max;
  r.r = curve.r;
  r.p25 = curve.p25;
  r.p75 = curve.p75;
  return r;
}

namespace {
constexpr const char* kReportMagic = "invbench-eval 1";
}

void write_report(std::ostream& os, const EvalReport& r) {
  using text::format_double;
  os << kReportMagic << '\n';
  os << "task = " << r.task << '\n';
  os << "solver = " << r.solver << '\n';
  os << "deterministic = " << (r.deterministic ? "true" : "false") << '\n';
  os << "seed = " << r.seed << '\n';
  os << "config_hash = " << r.config_hash << '\n';
  os << "dataset_hash = " << r.dataset_hash << '\n';
  os << "parameter_count = " << r.parameter_count << '\n';
  os << "targets = " << r.targets << '\n';
  os << "t_max = " << r.t_max << '\n';
  os << "train_seconds = " << format_double(r.timing.train_seconds) << '\n';
  os << "seconds_per_200 = " << format_double(r.timing.seconds_per_200) << '\n';
  if (r.gamma) os << "gamma = " << format_double(*r.gamma) << '\n';
  if (r.d_r) os << "d_r = " << format_double(*r.d_r) << '\n';
  os << "curve\n";
  for (std::size_t t = 0; t < r.r.size(); ++t) {
    os << t + 1 << ',' << format_double(r.r[t]) << ',' << format_double(r.p25[t]) << ',' << format_double(r.p75[t])
       << '\n';
  }
}

EvalReport read_report(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kReportMagic) throw FormatError("report: missing header");
  std::map<std::string, std::string, std::less<>> kv;
  bool curve = false;
  while (std::getline(is, line)) {
    if (line == "curve") {
      curve = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("report: malformed line '" + line + "'");
    kv[std::string(text::trim(std::string_view(line).substr(0, eq)))] =
        std::string(text::trim(std::string_view(line).substr(eq + 1)));
  }
  if (!curve) throw FormatError("report: missing curve section");
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("report: missing field ") + key);
    return it->second;
  };
  EvalReport r;
  try {
    r.task = need("task");
    r.solver = need("solver");
    r.deterministic = text::parse_bool(need("deterministic"), "deterministic");
    r.seed = text::parse_u64(need("seed"), "seed");
    r.config_hash = need("config_hash");
    r.dataset_hash = need("dataset_hash");
    r.parameter_count = text::parse_u64(need("parameter_count"), "parameter_count");
    r.targets = text::parse_u64(need("targets"), "targets");
    r.t_max = text::parse_u64(need("t_max"), "t_max");
    r.timing.train_seconds = text::parse_double(need("train_seconds"), "train_seconds");
    r.timing.seconds_per_200 = text::parse_double(need("seconds_per_200"), "seconds_per_200");
    if (auto it = kv.find("gamma"); it != kv.end()) r.gamma = text::parse_double(it->second, "gamma");
    if (auto it = kv.find("d_r"); it != kv.end()) r.d_r = text::parse_double(it->second, "d_r");
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto f = text::split(line, ',');
      if (f.size() != 4) throw FormatError("report: malformed curve row '" + line + "'");
      if (text::parse_u64(f[0], "T") != r.r.size() + 1) throw FormatError("report: curve rows out of order");
      r.r.push_back(text::parse_double(f[1], "r"));
      r.p25.push_back(text::parse_double(f[2], "p25"));
      r.p75.push_back(text::parse_double(f[3], "p75"));
    }
  } catch (const ConfigError& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  if (r.r.size() != r.t_max) throw FormatError("report: curve length does not match t_max");
  return r;
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingArtifact("report: cannot write " + path.string());
  write_report(os, report);
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifact("report: cannot open " + path.string());
  return read_report(is);
}

}  // namespace invbench::metrics
