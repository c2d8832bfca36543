#include "invbench/tasks.hpp"

#include <cmath>
#include <sstream>

#include "invbench/physics.hpp"

namespace invbench::em {

std::vector<double> uniform_grid(double first, double last, std::size_t points) {
  if (points < 2) throw ConfigError("grid: need at least two points");
  std::vector<double> grid(points);
  const double step = (last - first) / static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k) grid[k] = first + step * static_cast<double>(k);
  grid.back() = last;
  return grid;
}

std::vector<double> TaskSpec::means() const {
  std::vector<double> out(design_dim);
  for (std::size_t i = 0; i < design_dim; ++i) out[i] = mean(i);
  return out;
}

std::vector<double> TaskSpec::ranges() const {
  std::vector<double> out(design_dim);
  for (std::size_t i = 0; i < design_dim; ++i) out[i] = range(i);
  return out;
}

bool TaskSpec::contains(std::span<const double> design) const {
  if (design.size() != design_dim) return false;
  for (std::size_t i = 0; i < design_dim; ++i) {
    if (!(design[i] >= lower[i] && design[i] <= upper[i])) return false;
  }
  return true;
}

void TaskSpec::require_contains(std::span<const double> design) const {
  if (design.size() != design_dim) {
    throw ShapeError(name + ": design has " + std::to_string(design.size()) + " coordinates, expected " +
                     std::to_string(design_dim));
  }
  for (std::size_t i = 0; i < design_dim; ++i) {
    if (!(design[i] >= lower[i] && design[i] <= upper[i])) {
      std::ostringstream os;
      os.precision(17);
      os << name << ": design coordinate " << i << " = " << design[i] << " outside [" << lower[i] << ", "
         << upper[i] << "]";
      throw DomainError(os.str());
    }
  }
}

void TaskSpec::validate() const {
  if (design_dim == 0 || spectrum_dim == 0) throw ConfigError(name + ": empty design or spectrum");
  if (lower.size() != design_dim || upper.size() != design_dim) {
    throw ConfigError(name + ": bounds do not match design dimension");
  }
  for (std::size_t i = 0; i < design_dim; ++i) {
    if (!(lower[i] < upper[i])) throw ConfigError(name + ": lower bound must be below upper bound");
  }
  if (grid.size() != spectrum_dim) throw ConfigError(name + ": grid does not match spectrum dimension");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) throw ConfigError(name + ": grid must be strictly increasing");
  }
}

TaskSpec task_spec(std::string_view name) {
  TaskSpec spec;
  spec.name = std::string(name);
  if (name == "stack") {
    spec.design_dim = 5;
    spec.spectrum_dim = 256;
    spec.lower.assign(5, 20.0);
    spec.upper.assign(5, 100.0);
    spec.grid = uniform_grid(240.0, 2000.0, 256);
    spec.grid_unit = "nm";
  } else if (name == "shell") {
    spec.design_dim = 8;
    spec.spectrum_dim = 201;
    spec.lower.assign(8, 30.0);
    spec.upper.assign(8, 70.0);
    spec.grid = uniform_grid(400.0, 800.0, 201);
    spec.grid_unit = "nm";
  } else if (name == "adm-surrogate") {
    spec.design_dim = 14;
    spec.spectrum_dim = 2000;
    spec.lower.assign(14, -1.0);
    spec.upper.assign(14, 1.0);
    spec.grid = uniform_grid(100.0, 500.0, 2000);
    spec.grid_unit = "THz";
  } else if (name == "toy") {
    spec.design_dim = 2;
    spec.spectrum_dim = 32;
    spec.lower.assign(2, -1.0);
    spec.upper.assign(2, 1.0);
    spec.grid.resize(32);
    for (std::size_t k = 0; k < 32; ++k) spec.grid[k] = static_cast<double>(k + 1) / 32.0;
    spec.grid_unit = "1";
  } else if (name == "linear") {
    spec.design_dim = 2;
    spec.spectrum_dim = 2;
    spec.lower.assign(2, -1.0);
    spec.upper.assign(2, 1.0);
    spec.grid = {0.0, 1.0};
    spec.grid_unit = "1";
  } else {
    throw ConfigError("unknown task '" + std::string(name) + "'");
  }
  spec.validate();
  return spec;
}

// --- ForwardModel -----------------------------------------------------------

ForwardModel::ForwardModel(TaskSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

std::vector<double> ForwardModel::simulate(std::span<const double> design) const {
  std::vector<double> out(spec_.spectrum_dim);
  simulate_into(design, out);
  return out;
}

void ForwardModel::simulate_into(std::span<const double> design, std::span<double> out) const {
  spec_.require_contains(design);
  if (out.size() != spec_.spectrum_dim) {
    throw ShapeError(spec_.name + ": output buffer has " + std::to_string(out.size()) + " entries, expected " +
                     std::to_string(spec_.spectrum_dim));
  }
  evaluate(design, out);
}

// --- stack ------------------------------------------------------------------

StackModel::StackModel(StackOptions options) : ForwardModel(task_spec("stack")), options_(options) {}

void StackModel::evaluate(std::span<const double> design, std::span<double> out) const {
  const auto& grid = spec().grid;
  std::vector<FilmLayer> layers(design.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const std::complex<double> sheet =
        options_.graphene ? graphene_drude_sheet(grid[k], options_.fermi_level_ev, options_.scattering_time_s)
                          : std::complex<double>{};
    for (std::size_t i = 0; i < design.size(); ++i) {
      layers[i] = {options_.dielectric_index, design[i], sheet};
    }
    out[k] = solve_film_stack(layers, options_.incident_index, options_.substrate_index, grid[k]).absorptance;
  }
}

// --- shell ------------------------------------------------------------------

ShellModel::ShellModel(ShellOptions options) : ForwardModel(task_spec("shell")), options_(options) {}

std::vector<double> ShellModel::shell_indices() const {
  std::vector<double> indices(spec().design_dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    indices[i] = i % 2 == 0 ? options_.high_index : options_.low_index;
  }
  return indices;
}

void ShellModel::evaluate(std::span<const double> design, std::span<double> out) const {
  std::vector<double> radii(design.size());
  double r = 0.0;
  for (std::size_t i = 0; i < design.size(); ++i) radii[i] = (r += design[i]);
  const auto indices = shell_indices();
  const auto& grid = spec().grid;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    out[k] = layered_sphere_scattering(radii, indices, options_.host_index, grid[k]).efficiency;
  }
}

// --- toys -------------------------------------------------------------------

ToyModel::ToyModel() : ForwardModel(task_spec("toy")) {}

void ToyModel::evaluate(std::span<const double> design, std::span<double> out) const {
  const double radius_sq = design[0] * design[0] + design[1] * design[1];
  const auto& grid = spec().grid;
  for (std::size_t k = 0; k < grid.size(); ++k) out[k] = std::sin(3.0 * kPi * radius_sq * grid[k]);
}

LinearModel::LinearModel() : ForwardModel(task_spec("linear")) {}

void LinearModel::evaluate(std::span<const double> design, std::span<double> out) const {
  for (std::size_t r = 0; r < 2; ++r) out[r] = kMatrix[r][0] * design[0] + kMatrix[r][1] * design[1];
}

// --- surrogate --------------------------------------------------------------

SurrogateModel::SurrogateModel(TaskSpec spec, nn::Mlp network)
    : ForwardModel(std::move(spec)), network_(std::move(network)) {
  if (network_.spec().input_width() != this->spec().design_dim ||
      network_.spec().output_width() != this->spec().spectrum_dim) {
    throw ShapeError(this->spec().name + ": surrogate maps " + std::to_string(network_.spec().input_width()) +
                     " -> " + std::to_string(network_.spec().output_width()) + ", task needs " +
                     std::to_string(this->spec().design_dim) + " -> " + std::to_string(this->spec().spectrum_dim));
  }
  network_.set_trainable(false);
}

std::unique_ptr<SurrogateModel> SurrogateModel::load(TaskSpec spec, const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint)) {
    throw MissingArtifact(spec.name + ": surrogate checkpoint '" + checkpoint.string() + "' not found");
  }
  return std::make_unique<SurrogateModel>(std::move(spec), nn::Mlp::read(Checkpoint::load(checkpoint), "surrogate"));
}

void SurrogateModel::save(const nn::Mlp& network, const std::filesystem::path& checkpoint) {
  Checkpoint ckpt;
  network.write(ckpt, "surrogate");
  ckpt.save(checkpoint);
}

void SurrogateModel::evaluate(std::span<const double> design, std::span<double> out) const {
  ad::NoGradGuard no_grad;
  const auto x = ad::Tensor::row(std::vector<double>(design.begin(), design.end()));
  const auto y = network_.forward(x);
  std::copy(y.values().begin(), y.values().end(), out.begin());
}

std::unique_ptr<ForwardModel> make_forward_model(std::string_view name, const TaskOptions& options) {
  if (name == "stack") return std::make_unique<StackModel>(options.stack);
  if (name == "shell") return std::make_unique<ShellModel>(options.shell);
  if (name == "toy") return std::make_unique<ToyModel>();
  if (name == "linear") return std::make_unique<LinearModel>();
  if (name == "adm-surrogate") {
    if (options.surrogate_checkpoint.empty()) {
      throw MissingArtifact("adm-surrogate: no surrogate checkpoint configured");
    }
    return SurrogateModel::load(task_spec(name), options.surrogate_checkpoint);
  }
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

}  // namespace invbench::em
