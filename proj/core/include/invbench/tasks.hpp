#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invbench/nn.hpp"

namespace invbench::em {

// A benchmark task: design space, spectral grid and units.
struct TaskSpec {
  std::string name;
  std::size_t design_dim = 0;
  std::size_t spectrum_dim = 0;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> grid;  // uniformly spaced, strictly monotone
  std::string grid_unit;     // "nm", "THz" or "1"

  double mean(std::size_t i) const { return 0.5 * (lower[i] + upper[i]); }
  double range(std::size_t i) const { return upper[i] - lower[i]; }
  std::vector<double> means() const;
  std::vector<double> ranges() const;

  bool contains(std::span<const double> design) const;
  // Throws DomainError naming the first offending coordinate.
  void require_contains(std::span<const double> design) const;
  void validate() const;
};

std::vector<double> uniform_grid(double first, double last, std::size_t points);

// Names accepted by task_spec / make_forward_model.
inline constexpr std::string_view kTaskNames[] = {"stack", "shell", "adm-surrogate", "toy", "linear"};

TaskSpec task_spec(std::string_view name);

// Pure map from a design to its spectrum. Implementations hold no mutable
// state, so a single instance may be shared across threads.
class ForwardModel {
 public:
  explicit ForwardModel(TaskSpec spec);
  virtual ~ForwardModel() = default;

  const TaskSpec& spec() const { return spec_; }

  // Validates bounds, then evaluates.
  std::vector<double> simulate(std::span<const double> design) const;
  void simulate_into(std::span<const double> design, std::span<double> out) const;

 protected:
  virtual void evaluate(std::span<const double> design, std::span<double> out) const = 0;

 private:
  TaskSpec spec_;
};

// 5 graphene sheets each on top of a dielectric slab of thickness g_i (nm),
// over a semi-infinite substrate; spectrum is the absorptance on 240-2000 nm.
struct StackOptions {
  double dielectric_index = 2.0;  // Si3N4-like, lossless
  double incident_index = 1.0;
  double substrate_index = 1.45;
  double fermi_level_ev = 1.0;
  double scattering_time_s = 5e-15;
  bool graphene = true;  // false removes the sheets entirely
};

class StackModel final : public ForwardModel {
 public:
  explicit StackModel(StackOptions options = {});
  const StackOptions& options() const { return options_; }

 protected:
  void evaluate(std::span<const double> design, std::span<double> out) const override;

 private:
  StackOptions options_;
};

// 8 concentric shells of thickness g_i (nm), core first, alternating
// high/low index; spectrum is C_sca / (pi r_outer^2) on 400-800 nm.
struct ShellOptions {
  double high_index = 2.5;
  double low_index = 1.45;
  double host_index = 1.0;
};

class ShellModel final : public ForwardModel {
 public:
  explicit ShellModel(ShellOptions options = {});
  const ShellOptions& options() const { return options_; }
  std::vector<double> shell_indices() const;

 protected:
  void evaluate(std::span<const double> design, std::span<double> out) const override;

 private:
  ShellOptions options_;
};

// s_k = sin(3 pi (g_1^2 + g_2^2) x_k) on x_k = (k + 1) / 32: every circle of
// designs maps to one spectrum.
class ToyModel final : public ForwardModel {
 public:
  ToyModel();

 protected:
  void evaluate(std::span<const double> design, std::span<double> out) const override;
};

// s = M g with a fixed well-conditioned invertible 2 x 2 matrix M.
class LinearModel final : public ForwardModel {
 public:
  LinearModel();
  static constexpr double kMatrix[2][2] = {{1.0, 0.4}, {-0.3, 0.9}};

 protected:
  void evaluate(std::span<const double> design, std::span<double> out) const override;
};

// A trained network standing in for an expensive simulator; evaluated in
// inference mode on raw design coordinates.
class SurrogateModel final : public ForwardModel {
 public:
  SurrogateModel(TaskSpec spec, nn::Mlp network);
  // Reads the network stored under the "surrogate" prefix.
  static std::unique_ptr<SurrogateModel> load(TaskSpec spec, const std::filesystem::path& checkpoint);
  static void save(const nn::Mlp& network, const std::filesystem::path& checkpoint);

  const nn::Mlp& network() const { return network_; }

 protected:
  void evaluate(std::span<const double> design, std::span<double> out) const override;

 private:
  nn::Mlp network_;
};

struct TaskOptions {
  StackOptions stack;
  ShellOptions shell;
  std::filesystem::path surrogate_checkpoint;  // required for adm-surrogate
};

std::unique_ptr<ForwardModel> make_forward_model(std::string_view name, const TaskOptions& options = {});

}  // namespace invbench::em
