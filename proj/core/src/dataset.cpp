#include "invbench/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

namespace invbench::data {

const char* to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw FormatError("unknown split label '" + std::string(name) + "'");
}

SplitCounts split_counts(std::size_t n, SplitFractions f) {
  if (n == 0) throw ConfigError("dataset: size must be positive");
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::fabs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("dataset: split fractions must be non-negative and sum to 1");
  }
  SplitCounts c;
  c.val = static_cast<std::size_t>(std::floor(f.val * static_cast<double>(n) + 1e-9));
  c.test = static_cast<std::size_t>(std::floor(f.test * static_cast<double>(n) + 1e-9));
  c.train = n - c.val - c.test;
  return c;
}

SplitCounts desk_scale_counts(std::string_view) { return {4000, 1000, 100}; }

SplitCounts paper_scale_counts(std::string_view task) {
  if (task == "adm-surrogate") return {8000, 2000, 500};
  return {40000, 10000, 500};
}

std::vector<std::size_t> Dataset::rows(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

SplitCounts Dataset::counts() const {
  SplitCounts c;
  for (auto s : splits) {
    switch (s) {
      case Split::Train: ++c.train; break;
      case Split::Val: ++c.val; break;
      case Split::Test: ++c.test; break;
    }
  }
  return c;
}

Dataset Dataset::subset(Split split) const {
  Dataset out;
  out.task = task;
  out.seed = seed;
  out.design_dim = design_dim;
  out.spectrum_dim = spectrum_dim;
  for (auto row : rows(split)) out.push_back(design(row), spectrum(row), split);
  return out;
}

void Dataset::push_back(std::span<const double> g, std::span<const double> s, Split split) {
  if (g.size() != design_dim || s.size() != spectrum_dim) {
    throw ShapeError("dataset: row shape does not match (" + std::to_string(design_dim) + ", " +
                     std::to_string(spectrum_dim) + ")");
  }
  designs.insert(designs.end(), g.begin(), g.end());
  spectra.insert(spectra.end(), s.begin(), s.end());
  splits.push_back(split);
}

void Dataset::validate(const em::TaskSpec& spec) const {
  if (design_dim != spec.design_dim || spectrum_dim != spec.spectrum_dim) {
    throw ShapeError("dataset: dimensions do not match task '" + spec.name + "'");
  }
  if (designs.size() != size() * design_dim || spectra.size() != size() * spectrum_dim) {
    throw FormatError("dataset: inconsistent array sizes");
  }
  for (std::size_t i = 0; i < size(); ++i) spec.require_contains(design(i));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Dataset generate_dataset(const em::ForwardModel& model, SplitCounts counts, std::uint64_t seed, unsigned jobs) {
  const auto& spec = model.spec();
  const std::size_t n = counts.total();
  if (n == 0) throw ConfigError("dataset: size must be positive");
  Dataset data;
  data.task = spec.name;
  data.seed = seed;
  data.design_dim = spec.design_dim;
  data.spectrum_dim = spec.spectrum_dim;
  data.designs.resize(n * spec.design_dim);
  data.spectra.resize(n * spec.spectrum_dim);
  data.splits.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.splits[i] = i < counts.train ? Split::Train : (i < counts.train + counts.val ? Split::Val : Split::Test);
  }

  auto fill = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      std::mt19937_64 rng(mix_seed(seed, i));
      std::span<double> g(data.designs.data() + i * spec.design_dim, spec.design_dim);
      for (std::size_t d = 0; d < spec.design_dim; ++d) {
        std::uniform_real_distribution<double> dist(spec.lower[d], spec.upper[d]);
        g[d] = dist(rng);
      }
      model.simulate_into(g, {data.spectra.data() + i * spec.spectrum_dim, spec.spectrum_dim});
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs == 1) {
    fill(0, n);
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk = (n + jobs - 1) / jobs;
    for (unsigned j = 0; j < jobs; ++j) {
      const std::size_t begin = j * chunk, end = std::min(n, begin + chunk);
      if (begin < end) workers.emplace_back(fill, begin, end);
    }
    for (auto& w : workers) w.join();
  }
  return data;
}

Dataset generate_dataset(const em::ForwardModel& model, std::size_t n, std::uint64_t seed,
                         SplitFractions fractions, unsigned jobs) {
  return generate_dataset(model, split_counts(n, fractions), seed, jobs);
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  return dataset_path.string() + ".manifest";
}

namespace {

void write_list(std::ostream& os, const char* key, const std::vector<double>& values) {
  os << key << " =";
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? ", " : " ") << values[i];
  os << '\n';
}

}  // namespace

void save_dataset(const Dataset& data, const em::TaskSpec& spec, const std::filesystem::path& path) {
  data.validate(spec);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream os(path);
    if (!os) throw MissingArtifact("dataset: cannot write " + path.string());
    os << std::setprecision(17);
    for (std::size_t d = 0; d < data.design_dim; ++d) os << 'g' << d << ',';
    for (std::size_t k = 0; k < data.spectrum_dim; ++k) os << 's' << k << ',';
    os << "split\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (double v : data.design(i)) os << v << ',';
      for (double v : data.spectrum(i)) os << v << ',';
      os << to_string(data.splits[i]) << '\n';
    }
  }
  std::ofstream ms(manifest_path(path));
  if (!ms) throw MissingArtifact("dataset: cannot write manifest for " + path.string());
  const auto c = data.counts();
  ms << std::setprecision(17);
  ms << "task = " << spec.name << '\n';
  ms << "seed = " << data.seed << '\n';
  ms << "rows = " << data.size() << '\n';
  ms << "train = " << c.train << '\n';
  ms << "val = " << c.val << '\n';
  ms << "test = " << c.test << '\n';
  ms << "design_dim = " << spec.design_dim << '\n';
  ms << "spectrum_dim = " << spec.spectrum_dim << '\n';
  write_list(ms, "lower", spec.lower);
  write_list(ms, "upper", spec.upper);
  ms << "grid_unit = " << spec.grid_unit << '\n';
  write_list(ms, "grid", spec.grid);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("dataset: cannot open " + path.string());
  std::string header;
  if (!std::getline(is, header)) throw FormatError("dataset: empty file " + path.string());
  Dataset data;
  {
    std::stringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.size() > 1 && col[0] == 'g') ++data.design_dim;
      else if (col.size() > 1 && col[0] == 's' && col != "split") ++data.spectrum_dim;
    }
  }
  if (data.design_dim == 0 || data.spectrum_dim == 0) throw FormatError("dataset: malformed header");
  const std::size_t width = data.design_dim + data.spectrum_dim;
  std::string line;
  std::vector<double> row(width);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    for (std::size_t c = 0; c < width; ++c) {
      if (!std::getline(ls, cell, ',')) throw FormatError("dataset: short row in " + path.string());
      try {
        row[c] = std::stod(cell);
      } catch (const std::exception&) {
        throw FormatError("dataset: bad number '" + cell + "'");
      }
    }
    if (!std::getline(ls, cell, ',')) throw FormatError("dataset: missing split label");
    data.push_back(std::span<const double>(row).first(data.design_dim),
                   std::span<const double>(row).subspan(data.design_dim), parse_split(cell));
  }
  std::ifstream ms(manifest_path(path));
  if (ms) {
    std::string mline;
    while (std::getline(ms, mline)) {
      const auto eq = mline.find('=');
      if (eq == std::string::npos) continue;
      auto key = mline.substr(0, eq);
      auto value = mline.substr(eq + 1);
      key.erase(key.find_last_not_of(' ') + 1);
      value.erase(0, value.find_first_not_of(' '));
      if (key == "task") data.task = value;
      if (key == "seed") data.seed = std::stoull(value);
    }
  }
  return data;
}

}  // namespace invbench::data
