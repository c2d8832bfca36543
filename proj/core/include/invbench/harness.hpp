#pragma once

// Experiment orchestration: configuration files, data generation, training
// with cached run records, grid sweeps, evaluation and consolidated reports.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "invbench/metrics.hpp"
#include "invbench/solvers.hpp"

namespace invbench::harness {

// `key = value` lines grouped under `[section]` headers; `#` starts a comment.
// Keys keep their file order.
class Ini {
 public:
  static Ini parse(std::string_view text, const std::string& origin = "config");
  static Ini load(const std::filesystem::path& path);

  // `section.key=value`; the section is everything before the first dot.
  void apply_override(std::string_view assignment);
  void set(const std::string& section, const std::string& key, std::string value);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& section(const std::string& name) const;
  std::vector<std::string> sections() const;
  std::string str() const;

 private:
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> data_;
};

struct SweepAxis {
  std::string key;  // a SolverConfig key
  std::vector<std::string> values;
};

struct ExperimentConfig {
  std::string task = "toy";
  std::filesystem::path out_dir = "invbench-out";
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  bool paper_scale = false;

  // [data]
  std::filesystem::path dataset;  // empty = <out_dir>/data/<task>.csv
  data::SplitCounts counts;
  std::filesystem::path surrogate_checkpoint;  // adm-surrogate only

  // [solver]
  solvers::SolverConfig solver;

  // [sweep]
  std::vector<SweepAxis> grid;
  std::size_t max_cells = 0;  // 0 = every cell
  double sweep_budget_s = 0.0;

  // [eval]
  std::size_t t_max = 50;
  std::size_t val_targets = 200;  // validation rows used for r_1 during model selection
  std::size_t test_targets = 0;   // 0 = whole test split
  std::size_t clusters = 5;
  std::size_t cluster_size = 5;

  std::filesystem::path dataset_path() const;
  em::TaskOptions task_options() const;
};

// Desk-scale defaults (epochs 50, batch 256, T_max 50, 4000/1000/100 rows);
// paper_scale switches to batch 1024, epochs 300, T_max 200 and the original
// dataset sizes. Explicit entries in `ini` win over both.
ExperimentConfig make_config(const Ini& ini, bool paper_scale = false);

using Logger = std::function<void(const std::string&)>;

struct Context {
  ExperimentConfig config;
  bool force = false;
  Logger log = [](const std::string&) {};
};

// --- data -----------------------------------------------------------------------

// Writes the dataset and its manifest; refuses to overwrite without force.
std::filesystem::path gen_data(const Context& ctx);

// FNV-1a of the dataset file and its manifest.
std::string dataset_hash(const std::filesystem::path& dataset);

// --- training ---------------------------------------------------------------------

struct RunRecord {
  std::string task;
  std::string solver;
  std::string config_hash;
  std::string input_hash;
  std::string status;  // "ok" or "failed"
  std::string message;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::optional<double> val_r1;
  double train_seconds = 0.0;
  std::filesystem::path checkpoint;

  bool ok() const { return status == "ok"; }
};

void save_record(const RunRecord& record, const std::filesystem::path& path);
RunRecord load_record(const std::filesystem::path& path);

// Hash of the task name and every solver setting.
std::string config_hash(const std::string& task, const solvers::SolverConfig& config);

struct TrainOutcome {
  RunRecord record;
  bool cached = false;
};

// Trains one cell under <out>/runs/<task>/<solver>-<hash>/. A completed cell
// with matching hashes is returned as cached. A numeric failure is recorded
// and rethrown.
TrainOutcome train_cell(const Context& ctx, const solvers::SolverConfig& config, const data::Dataset& data,
                        const std::string& input_hash);

// Trains ctx.config.solver and marks it as the selected model for its kind.
TrainOutcome cmd_train(const Context& ctx);

// --- sweeps -------------------------------------------------------------------------

// Cartesian product in axis order; the last axis varies fastest.
std::vector<solvers::SolverConfig> expand_grid(const solvers::SolverConfig& base, const std::vector<SweepAxis>& grid);

struct SweepResult {
  std::vector<RunRecord> records;  // grid order
  std::size_t best = 0;            // index into records
  std::size_t cached = 0;
};

// Index of the smallest validation r_1 among successful records; ties go to
// the earliest. Throws NumericError if none succeeded.
std::size_t select_best(const std::vector<RunRecord>& records);

SweepResult cmd_sweep(const Context& ctx);

// --- evaluation ---------------------------------------------------------------------

std::filesystem::path selected_path(const ExperimentConfig& config, solvers::Kind kind);
std::filesystem::path report_path(const ExperimentConfig& config, solvers::Kind kind);

// Evaluates the selected checkpoint of ctx.config.solver.kind on the test
// split and writes the report plus a proposal dump. gamma is filled in for NN
// and NA reports when the counterpart report exists.
metrics::EvalReport cmd_eval(const Context& ctx);

// --- reports --------------------------------------------------------------------------

struct ReportFiles {
  std::filesystem::path table;          // r_T at T=1 and T=T_max
  std::filesystem::path curves;         // solver,task,T,r_T,p25,p75
  std::filesystem::path nonuniqueness;  // gamma and D_r per task
  std::filesystem::path timing;         // wall-clock, kept apart from the deterministic tables
  std::filesystem::path provenance;     // seed, config hash and dataset hash per report
};

// Reads every *.report under <run_dir>/reports and writes the merged tables
// into <run_dir>/summary.
ReportFiles cmd_report(const std::filesystem::path& run_dir, const Logger& log = {});

// Exit status for an exception escaping a command: 2 config, 3 numeric,
// 4 missing or malformed artifact, 1 anything else.
int exit_code(const std::exception& e);

}  // namespace invbench::harness
