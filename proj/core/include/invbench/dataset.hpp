#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "invbench/tasks.hpp"

namespace invbench::data {

enum class Split : std::uint8_t { Train, Val, Test };

const char* to_string(Split split);
Split parse_split(std::string_view name);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + val + test; }
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.2;
  double test = 0.0;
};

// Validation and test sizes are floored; the remainder goes to training.
SplitCounts split_counts(std::size_t n, SplitFractions fractions);

// 4000/1000/100 for every task.
SplitCounts desk_scale_counts(std::string_view task);
// Sizes of the original benchmark datasets (train/val/test).
SplitCounts paper_scale_counts(std::string_view task);

// Row-major designs (N x design_dim) and spectra (N x spectrum_dim).
struct Dataset {
  std::string task;
  std::uint64_t seed = 0;
  std::size_t design_dim = 0;
  std::size_t spectrum_dim = 0;
  std::vector<double> designs;
  std::vector<double> spectra;
  std::vector<Split> splits;

  std::size_t size() const { return splits.size(); }
  std::span<const double> design(std::size_t row) const {
    return {designs.data() + row * design_dim, design_dim};
  }
  std::span<const double> spectrum(std::size_t row) const {
    return {spectra.data() + row * spectrum_dim, spectrum_dim};
  }
  std::vector<std::size_t> rows(Split split) const;
  SplitCounts counts() const;
  // Rows of one split, in their original order.
  Dataset subset(Split split) const;
  // Appends one row.
  void push_back(std::span<const double> design, std::span<const double> spectrum, Split split);
  // Every design inside the task bounds and consistent array sizes.
  void validate(const em::TaskSpec& spec) const;
};

// Designs are i.i.d. uniform over the bounds; row i draws from a stream
// derived from (seed, i) alone, so the output does not depend on `jobs`.
Dataset generate_dataset(const em::ForwardModel& model, SplitCounts counts, std::uint64_t seed,
                         unsigned jobs = 1);
Dataset generate_dataset(const em::ForwardModel& model, std::size_t n, std::uint64_t seed,
                         SplitFractions fractions, unsigned jobs = 1);

// Comma-separated values with header g0..,s0..,split plus `<path>.manifest`.
void save_dataset(const Dataset& data, const em::TaskSpec& spec, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);

// splitmix64 finalizer, used to derive independent per-row seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace invbench::data
