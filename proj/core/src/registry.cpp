#include <fstream>

#include "invbench/flows.hpp"
#include "invbench/solvers.hpp"
#include "invbench/text.hpp"

namespace invbench::solvers {

std::unique_ptr<InverseSolver> make_solver(const SolverConfig& config, const em::TaskSpec& spec) {
  switch (config.kind) {
    case Kind::NN: return std::make_unique<DirectNetwork>(config, spec);
    case Kind::TD: return std::make_unique<Tandem>(config, spec);
    case Kind::NA: return std::make_unique<NeuralAdjoint>(config, spec);
    case Kind::GA: return std::make_unique<GeneticAlgorithm>(config, spec);
    case Kind::MDN: return std::make_unique<MixtureDensity>(config, spec);
    case Kind::VAE: return std::make_unique<ConditionalVae>(config, spec);
    case Kind::INN: return std::make_unique<flows::InvertibleNetwork>(config, spec);
    case Kind::CINN: return std::make_unique<flows::ConditionalInvertibleNetwork>(config, spec);
  }
  throw ConfigError("unknown solver kind");
}

std::unique_ptr<InverseSolver> load_solver(const std::filesystem::path& path) {
  std::ifstream ms(data::manifest_path(path));
  if (!ms) throw MissingArtifact("solver: no manifest next to " + path.string());
  std::string line, task;
  SolverConfig config;
  while (std::getline(ms, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = text::trim(std::string_view(line).substr(0, eq));
    const auto value = text::trim(std::string_view(line).substr(eq + 1));
    if (key == "task") task = std::string(value);
    else if (key.starts_with("solver.")) config.set(key.substr(7), value);
  }
  if (task.empty()) throw FormatError("solver: manifest for " + path.string() + " names no task");
  auto solver = make_solver(config, em::task_spec(task));
  const auto ckpt = Checkpoint::load(path);
  solver->set_normalizer(Normalizer::read(ckpt));
  solver->read_state(ckpt);
  solver->trained_ = true;
  return solver;
}

}  // namespace invbench::solvers
