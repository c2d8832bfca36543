#include "invbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "invbench/errors.hpp"
#include "invbench/hash.hpp"
#include "invbench/text.hpp"

namespace invbench::harness {

namespace fs = std::filesystem;

// --- Ini --------------------------------------------------------------------

Ini Ini::parse(std::string_view input, const std::string& origin) {
  Ini ini;
  std::string current;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(input, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError(where + ": malformed section header");
      current = std::string(text::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    if (current.empty()) throw ConfigError(where + ": key outside any [section]");
    const auto key = std::string(text::trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    ini.set(current, key, std::string(text::trim(line.substr(eq + 1))));
  }
  return ini;
}

Ini Ini::load(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifact("config: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

void Ini::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("override '" + std::string(assignment) + "' is not section.key=value");
  }
  const auto section = std::string(text::trim(assignment.substr(0, dot)));
  const auto key = std::string(text::trim(assignment.substr(dot + 1, eq - dot - 1)));
  if (section.empty() || key.empty()) throw ConfigError("override '" + std::string(assignment) + "' has an empty name");
  set(section, key, std::string(text::trim(assignment.substr(eq + 1))));
}

void Ini::set(const std::string& section, const std::string& key, std::string value) {
  auto it = std::find_if(data_.begin(), data_.end(), [&](const auto& s) { return s.first == section; });
  if (it == data_.end()) {
    data_.push_back({section, {}});
    it = std::prev(data_.end());
  }
  for (auto& [k, v] : it->second) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  it->second.emplace_back(key, std::move(value));
}

bool Ini::has(const std::string& section, const std::string& key) const { return get(section, key).has_value(); }

std::optional<std::string> Ini::get(const std::string& section, const std::string& key) const {
  for (const auto& [k, v] : this->section(section)) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::vector<std::pair<std::string, std::string>>& Ini::section(const std::string& name) const {
  static const std::vector<std::pair<std::string, std::string>> empty;
  for (const auto& s : data_) {
    if (s.first == name) return s.second;
  }
  return empty;
}

std::vector<std::string> Ini::sections() const {
  std::vector<std::string> out;
  for (const auto& s : data_) out.push_back(s.first);
  return out;
}

std::string Ini::str() const {
  std::ostringstream os;
  for (const auto& [name, entries] : data_) {
    os << '[' << name << "]\n";
    for (const auto& [k, v] : entries) os << k << " = " << v << '\n';
  }
  return os.str();
}

// --- ExperimentConfig -----------------------------------------------------------

fs::path ExperimentConfig::dataset_path() const {
  return dataset.empty() ? out_dir / "data" / (task + ".csv") : dataset;
}

em::TaskOptions ExperimentConfig::task_options() const {
  em::TaskOptions o;
  o.surrogate_checkpoint = surrogate_checkpoint;
  return o;
}

namespace {

const std::set<std::string, std::less<>> kKnownSections{"experiment", "data", "solver", "sweep", "eval"};

void check_keys(const Ini& ini, const std::string& section, std::initializer_list<std::string_view> keys) {
  for (const auto& [k, v] : ini.section(section)) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError("config: unknown key '" + k + "' in [" + section + "]");
    }
  }
}

std::vector<std::string> sweep_values(const std::string& value) {
  // Values containing commas themselves (layer widths) are separated by ';'.
  const char sep = value.find(';') != std::string::npos ? ';' : ',';
  std::vector<std::string> out;
  for (const auto& v : text::split(value, sep)) {
    const auto t = text::trim(v);
    if (t.empty()) throw ConfigError("config: empty value in sweep list '" + value + "'");
    out.emplace_back(t);
  }
  return out;
}

}  // namespace

ExperimentConfig make_config(const Ini& ini, bool paper_scale) {
  for (const auto& s : ini.sections()) {
    if (!kKnownSections.contains(s)) throw ConfigError("config: unknown section [" + s + "]");
  }
  check_keys(ini, "experiment", {"task", "out_dir", "seed", "jobs", "paper_scale"});
  check_keys(ini, "data", {"path", "train", "val", "test", "surrogate_checkpoint"});
  check_keys(ini, "eval", {"t_max", "val_targets", "test_targets", "clusters", "cluster_size"});

  ExperimentConfig c;
  if (auto v = ini.get("experiment", "paper_scale")) paper_scale = paper_scale || text::parse_bool(*v, "paper_scale");
  c.paper_scale = paper_scale;
  if (auto v = ini.get("experiment", "task")) c.task = *v;
  em::task_spec(c.task);  // validates the name
  if (auto v = ini.get("experiment", "out_dir")) c.out_dir = *v;
  if (auto v = ini.get("experiment", "seed")) c.seed = text::parse_u64(*v, "experiment.seed");
  if (auto v = ini.get("experiment", "jobs")) {
    c.jobs = static_cast<unsigned>(text::parse_u64(*v, "experiment.jobs"));
    if (c.jobs == 0) throw ConfigError("config: experiment.jobs must be at least 1");
  }

  c.counts = paper_scale ? data::paper_scale_counts(c.task) : data::desk_scale_counts(c.task);
  if (auto v = ini.get("data", "path")) c.dataset = *v;
  if (auto v = ini.get("data", "train")) c.counts.train = text::parse_u64(*v, "data.train");
  if (auto v = ini.get("data", "val")) c.counts.val = text::parse_u64(*v, "data.val");
  if (auto v = ini.get("data", "test")) c.counts.test = text::parse_u64(*v, "data.test");
  if (auto v = ini.get("data", "surrogate_checkpoint")) c.surrogate_checkpoint = *v;

  c.solver.seed = c.seed;
  if (paper_scale) {
    c.solver.batch_size = 1024;
    c.solver.epochs = 300;
    c.t_max = 200;
  }
  for (const auto& [k, v] : ini.section("solver")) {
    if (k == "kind") {
      c.solver.kind = solvers::parse_kind(v);
    } else {
      c.solver.set(k, v);
    }
  }
  c.solver.validate();

  for (const auto& [k, v] : ini.section("sweep")) {
    if (k == "max_cells") {
      c.max_cells = text::parse_u64(v, "sweep.max_cells");
    } else if (k == "budget_s") {
      c.sweep_budget_s = text::parse_double(v, "sweep.budget_s");
    } else {
      solvers::SolverConfig probe = c.solver;
      auto values = sweep_values(v);
      for (const auto& value : values) probe.set(k, value);
      c.grid.push_back({k, std::move(values)});
    }
  }

  if (auto v = ini.get("eval", "t_max")) c.t_max = text::parse_u64(*v, "eval.t_max");
  if (auto v = ini.get("eval", "val_targets")) c.val_targets = text::parse_u64(*v, "eval.val_targets");
  if (auto v = ini.get("eval", "test_targets")) c.test_targets = text::parse_u64(*v, "eval.test_targets");
  if (auto v = ini.get("eval", "clusters")) c.clusters = text::parse_u64(*v, "eval.clusters");
  if (auto v = ini.get("eval", "cluster_size")) c.cluster_size = text::parse_u64(*v, "eval.cluster_size");
  if (c.t_max == 0) throw ConfigError("config: eval.t_max must be at least 1");
  if (c.cluster_size < 2) throw ConfigError("config: eval.cluster_size must be at least 2");
  return c;
}

// --- data ---------------------------------------------------------------------------

fs::path gen_data(const Context& ctx) {
  const auto& c = ctx.config;
  const auto path = c.dataset_path();
  if (fs::exists(path) && !ctx.force) {
    throw ConfigError("gen-data: " + path.string() + " exists; pass --force to overwrite");
  }
  const auto model = em::make_forward_model(c.task, c.task_options());
  ctx.log("gen-data: " + c.task + " " + std::to_string(c.counts.train) + "/" + std::to_string(c.counts.val) + "/" +
          std::to_string(c.counts.test) + " rows, seed " + std::to_string(c.seed));
  const auto d = data::generate_dataset(*model, c.counts, c.seed, c.jobs);
  data::save_dataset(d, model->spec(), path);
  return path;
}

namespace {

void hash_file(Fnv1a& h, const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifact("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  h.update(ss.str());
}

}  // namespace

std::string dataset_hash(const fs::path& dataset) {
  Fnv1a h;
  hash_file(h, dataset);
  hash_file(h, data::manifest_path(dataset));
  return h.hex();
}

// --- run records ----------------------------------------------------------------------

std::string config_hash(const std::string& task, const solvers::SolverConfig& config) {
  Fnv1a h;
  h.update("task=" + task + "\n");
  for (const auto& [k, v] : config.entries()) h.update(k + "=" + v + "\n");
  return h.hex();
}

void save_record(const RunRecord& r, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingArtifact("record: cannot write " + path.string());
  os << "task = " << r.task << '\n';
  os << "solver = " << r.solver << '\n';
  os << "config_hash = " << r.config_hash << '\n';
  os << "input_hash = " << r.input_hash << '\n';
  os << "status = " << r.status << '\n';
  os << "message = " << r.message << '\n';
  for (const auto& [k, v] : r.config) os << "solver." << k << " = " << v << '\n';
  os << "train_loss = " << text::format_list(r.train_loss) << '\n';
  os << "val_loss = " << text::format_list(r.val_loss) << '\n';
  if (r.val_r1) os << "val_r1 = " << text::format_double(*r.val_r1) << '\n';
  os << "train_seconds = " << text::format_double(r.train_seconds) << '\n';
  os << "checkpoint = " << r.checkpoint.string() << '\n';
}

RunRecord load_record(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifact("record: cannot open " + path.string());
  RunRecord r;
  std::string line;
  try {
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto eq = line.find(" = ");
      const auto key = line.substr(0, eq);
      const auto value = eq == std::string::npos ? std::string() : line.substr(eq + 3);
      if (eq == std::string::npos && line.back() != '=') throw FormatError("record: malformed line '" + line + "'");
      if (key == "task") r.task = value;
      else if (key == "solver") r.solver = value;
      else if (key == "config_hash") r.config_hash = value;
      else if (key == "input_hash") r.input_hash = value;
      else if (key == "status") r.status = value;
      else if (key == "message") r.message = value;
      else if (key.starts_with("solver.")) r.config.emplace_back(key.substr(7), value);
      else if (key == "train_loss") r.train_loss = text::parse_double_list(value, "train_loss");
      else if (key == "val_loss") r.val_loss = text::parse_double_list(value, "val_loss");
      else if (key == "val_r1") r.val_r1 = text::parse_double(value, "val_r1");
      else if (key == "train_seconds") r.train_seconds = text::parse_double(value, "train_seconds");
      else if (key == "checkpoint") r.checkpoint = value;
      else throw FormatError("record: unknown key '" + key + "'");
    }
  } catch (const ConfigError& e) {
    throw FormatError(std::string("record ") + path.string() + ": " + e.what());
  }
  if (r.status.empty()) throw FormatError("record: " + path.string() + " has no status");
  return r;
}

namespace {

fs::path cell_dir(const ExperimentConfig& c, solvers::Kind kind, const std::string& hash) {
  return c.out_dir / "runs" / c.task / (std::string(solvers::to_string(kind)) + "-" + hash);
}

std::unique_ptr<em::ForwardModel> true_model(const ExperimentConfig& c) {
  return em::make_forward_model(c.task, c.task_options());
}

data::Dataset head(const data::Dataset& d, std::size_t limit) {
  if (limit == 0 || limit >= d.size()) return d;
  data::Dataset out;
  out.task = d.task;
  out.seed = d.seed;
  out.design_dim = d.design_dim;
  out.spectrum_dim = d.spectrum_dim;
  for (std::size_t i = 0; i < limit; ++i) out.push_back(d.design(i), d.spectrum(i), d.splits[i]);
  return out;
}

data::Dataset load_task_data(const ExperimentConfig& c) {
  auto d = data::load_dataset(c.dataset_path());
  if (d.task != c.task) {
    throw ConfigError("dataset " + c.dataset_path().string() + " holds task '" + d.task + "', config asks for '" +
                      c.task + "'");
  }
  return d;
}

void write_selected(const ExperimentConfig& c, solvers::Kind kind, const RunRecord& r, const fs::path& record) {
  const auto path = selected_path(c, kind);
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingArtifact("cannot write " + path.string());
  os << "record = " << record.string() << '\n';
  os << "checkpoint = " << r.checkpoint.string() << '\n';
}

fs::path selected_record(const ExperimentConfig& c, solvers::Kind kind) {
  const auto path = selected_path(c, kind);
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw MissingArtifact("no trained " + std::string(solvers::to_string(kind)) + " model for task " + c.task +
                          "; run train or sweep first");
  }
  std::string line;
  while (std::getline(is, line)) {
    if (line.starts_with("record = ")) return line.substr(9);
  }
  throw FormatError("malformed selection file " + path.string());
}

}  // namespace

TrainOutcome train_cell(const Context& ctx, const solvers::SolverConfig& config, const data::Dataset& data,
                        const std::string& input_hash) {
  const auto& c = ctx.config;
  const auto hash = config_hash(c.task, config);
  const auto dir = cell_dir(c, config.kind, hash);
  const auto record_path = dir / "record.txt";
  const std::string label = std::string(solvers::to_string(config.kind)) + "-" + hash;

  if (fs::exists(record_path)) {
    auto old = load_record(record_path);
    if (old.ok() && old.config_hash == hash && old.input_hash == input_hash && fs::exists(old.checkpoint)) {
      ctx.log("train: " + label + " cached");
      return {std::move(old), true};
    }
  }

  RunRecord r;
  r.task = c.task;
  r.solver = solvers::to_string(config.kind);
  r.config_hash = hash;
  r.input_hash = input_hash;
  r.config = config.entries();
  r.checkpoint = dir / "model.ibchk";
  try {
    auto solver = solvers::make_solver(config, em::task_spec(c.task));
    const auto report = solver->train(data);
    r.train_loss = report.train_loss;
    r.val_loss = report.val_loss;
    r.train_seconds = report.seconds;
    const auto val = head(data.subset(data::Split::Val), c.val_targets);
    if (val.size() > 0) {
      const auto model = true_model(c);
      r.val_r1 = metrics::rt_curve(*solver, *model, val, 1, data::mix_seed(config.seed, 101)).curve.at(1);
    }
    solver->save(r.checkpoint, {{"config_hash", hash}, {"input_hash", input_hash}});
    r.status = "ok";
    std::string msg = "train: " + label + " done in " + text::format_double(report.seconds) + " s";
    if (r.val_r1) msg += ", val r1 " + text::format_double(*r.val_r1);
    ctx.log(msg);
  } catch (const Error& e) {
    r.status = "failed";
    r.message = e.what();
    save_record(r, record_path);
    ctx.log("train: " + label + " failed: " + e.what());
    throw;
  }
  save_record(r, record_path);
  return {std::move(r), false};
}

TrainOutcome cmd_train(const Context& ctx) {
  const auto& c = ctx.config;
  const auto d = load_task_data(c);
  const auto input = dataset_hash(c.dataset_path());
  auto out = train_cell(ctx, c.solver, d, input);
  write_selected(c, c.solver.kind, out.record, cell_dir(c, c.solver.kind, out.record.config_hash) / "record.txt");
  return out;
}

// --- sweeps -------------------------------------------------------------------------------

std::vector<solvers::SolverConfig> expand_grid(const solvers::SolverConfig& base, const std::vector<SweepAxis>& grid) {
  if (grid.empty()) throw ConfigError("sweep: grid is empty");
  std::vector<solvers::SolverConfig> cells{base};
  for (const auto& axis : grid) {
    if (axis.values.empty()) throw ConfigError("sweep: axis '" + axis.key + "' has no values");
    std::vector<solvers::SolverConfig> next;
    for (const auto& cell : cells) {
      for (const auto& v : axis.values) {
        auto copy = cell;
        copy.set(axis.key, v);
        next.push_back(copy);
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::size_t select_best(const std::vector<RunRecord>& records) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].ok() || !records[i].val_r1) continue;
    if (!best || *records[i].val_r1 < *records[*best].val_r1) best = i;
  }
  if (!best) throw NumericError("sweep: every cell failed");
  return *best;
}

SweepResult cmd_sweep(const Context& ctx) {
  const auto& c = ctx.config;
  auto cells = expand_grid(c.solver, c.grid);
  if (c.max_cells > 0 && cells.size() > c.max_cells) cells.resize(c.max_cells);
  const auto d = load_task_data(c);
  const auto input = dataset_hash(c.dataset_path());
  ctx.log("sweep: " + std::to_string(cells.size()) + " cells for " + solvers::to_string(c.solver.kind) + " on " +
          c.task);

  std::mutex log_mutex;
  Context local = ctx;
  local.log = [&](const std::string& m) {
    std::lock_guard lock(log_mutex);
    ctx.log(m);
  };

  std::vector<std::optional<RunRecord>> records(cells.size());
  std::vector<char> cached(cells.size(), 0);
  std::atomic<std::size_t> next{0};
  const auto start = std::chrono::steady_clock::now();
  auto over_budget = [&] {
    return c.sweep_budget_s > 0.0 &&
           std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() > c.sweep_budget_s;
  };
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      if (over_budget()) return;
      try {
        auto out = train_cell(local, cells[i], d, input);
        cached[i] = out.cached;
        records[i] = std::move(out.record);
      } catch (const Error& e) {
        RunRecord failed;
        failed.task = c.task;
        failed.solver = solvers::to_string(cells[i].kind);
        failed.config_hash = config_hash(c.task, cells[i]);
        failed.input_hash = input;
        failed.status = "failed";
        failed.message = e.what();
        failed.config = cells[i].entries();
        records[i] = std::move(failed);
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(c.jobs, static_cast<unsigned>(cells.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!records[i]) continue;  // skipped by the budget
    result.cached += cached[i];
    result.records.push_back(std::move(*records[i]));
  }
  if (result.records.size() < cells.size()) {
    ctx.log("sweep: budget reached after " + std::to_string(result.records.size()) + " cells");
  }
  result.best = select_best(result.records);
  const auto& best = result.records[result.best];
  write_selected(c, c.solver.kind, best, cell_dir(c, c.solver.kind, best.config_hash) / "record.txt");

  const auto summary = c.out_dir / "sweeps" / (c.task + "-" + solvers::to_string(c.solver.kind) + ".csv");
  fs::create_directories(summary.parent_path());
  std::ofstream os(summary, std::ios::binary);
  os << "cell,config_hash,status,val_r1";
  for (const auto& axis : c.grid) os << ',' << axis.key;
  os << '\n';
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    os << i << ',' << r.config_hash << ',' << r.status << ',' << (r.val_r1 ? text::format_double(*r.val_r1) : "");
    for (const auto& axis : c.grid) {
      for (const auto& [k, v] : r.config) {
        if (k == axis.key) os << ",\"" << v << '"';
      }
    }
    os << '\n';
  }
  ctx.log("sweep: best cell " + std::to_string(result.best) + " (" + best.config_hash + "), val r1 " +
          text::format_double(*best.val_r1));
  return result;
}

// --- evaluation ----------------------------------------------------------------------------

fs::path selected_path(const ExperimentConfig& c, solvers::Kind kind) {
  return c.out_dir / "selected" / (c.task + "-" + solvers::to_string(kind) + ".txt");
}

fs::path report_path(const ExperimentConfig& c, solvers::Kind kind) {
  return c.out_dir / "reports" / c.task / (std::string(solvers::to_string(kind)) + ".report");
}

metrics::EvalReport cmd_eval(const Context& ctx) {
  const auto& c = ctx.config;
  const auto kind = c.solver.kind;
  const auto record = load_record(selected_record(c, kind));
  if (!record.ok()) throw ConfigError("eval: selected run failed: " + record.message);
  const auto solver = solvers::load_solver(record.checkpoint);
  if (solver->spec().name != c.task) throw ConfigError("eval: checkpoint task does not match " + c.task);

  const auto d = load_task_data(c);
  const auto test = head(d.subset(data::Split::Test), c.test_targets);
  if (test.size() == 0) throw ConfigError("eval: the dataset has no test rows");
  const auto model = true_model(c);
  const auto run = metrics::rt_curve(*solver, *model, test, c.t_max, data::mix_seed(c.seed, 202), c.jobs);

  auto report = metrics::make_report(run.curve, *solver);
  report.config_hash = record.config_hash;
  report.dataset_hash = dataset_hash(c.dataset_path());
  report.timing = metrics::timing_report(record.train_seconds, run.propose_seconds, test.size() * c.t_max);

  const auto train = d.subset(data::Split::Train);
  if (train.size() > c.cluster_size && c.clusters > 0) {
    const auto clusters = metrics::spectral_clusters(train, c.clusters, c.cluster_size, data::mix_seed(c.seed, 303));
    report.d_r = metrics::d_r(train.designs, train.design_dim, clusters, model->spec().lower, model->spec().upper);
  }

  const auto path = report_path(c, kind);
  if (kind == solvers::Kind::NN || kind == solvers::Kind::NA) {
    const auto other = kind == solvers::Kind::NN ? solvers::Kind::NA : solvers::Kind::NN;
    const auto other_path = report_path(c, other);
    if (fs::exists(other_path)) {
      auto counterpart = metrics::load_report(other_path);
      const double r_nn = kind == solvers::Kind::NN ? report.r_at(1) : counterpart.r_at(1);
      const double r_na = kind == solvers::Kind::NA ? report.r_at(1) : counterpart.r_at(1);
      report.gamma = metrics::gamma(r_nn, r_na);
      counterpart.gamma = report.gamma;
      metrics::save_report(counterpart, other_path);
    } else {
      ctx.log("eval: no " + std::string(solvers::to_string(other)) + " report for " + c.task +
              " yet; gamma left out");
    }
  }
  metrics::save_report(report, path);

  auto dump_path = path;
  dump_path.replace_extension(".proposals.csv");
  std::ofstream os(dump_path, std::ios::binary);
  if (!os) throw MissingArtifact("eval: cannot write " + dump_path.string());
  const std::size_t dim = model->spec().design_dim;
  os << "target,t";
  for (std::size_t j = 0; j < dim; ++j) os << ",g" << j;
  os << ",error\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (std::size_t t = 0; t < c.t_max; ++t) {
      os << i << ',' << t + 1;
      for (std::size_t j = 0; j < dim; ++j) os << ',' << text::format_double(run.proposals[(i * c.t_max + t) * dim + j]);
      os << ',' << text::format_double(run.errors[i * c.t_max + t]) << '\n';
    }
  }
  ctx.log("eval: " + std::string(solvers::to_string(kind)) + " on " + c.task + ": r1 " +
          text::format_double(report.r_at(1)) + ", r" + std::to_string(c.t_max) + " " +
          text::format_double(report.r_at(c.t_max)));
  return report;
}

// --- reports -----------------------------------------------------------------------------------

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

int kind_rank(const std::string& name) {
  const auto k = solvers::parse_kind(name);
  for (int i = 0; i < static_cast<int>(std::size(solvers::kAllKinds)); ++i) {
    if (solvers::kAllKinds[i] == k) return i;
  }
  return 0;
}

}  // namespace

ReportFiles cmd_report(const fs::path& run_dir, const Logger& log) {
  const auto root = run_dir / "reports";
  std::vector<metrics::EvalReport> reports;
  if (fs::exists(root)) {
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file() && entry.path().extension() == ".report") {
        reports.push_back(metrics::load_report(entry.path()));
      }
    }
  }
  if (reports.empty()) throw MissingArtifact("report: no evaluation reports under " + root.string());
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    return a.task != b.task ? a.task < b.task : kind_rank(a.solver) < kind_rank(b.solver);
  });

  std::vector<std::string> tasks;
  std::map<std::string, std::pair<std::size_t, std::size_t>> grid;  // task -> (t_max, targets)
  std::vector<std::string> solver_cols;
  for (const auto& r : reports) {
    auto [it, inserted] = grid.try_emplace(r.task, r.t_max, r.targets);
    if (inserted) tasks.push_back(r.task);
    if (it->second != std::pair{r.t_max, r.targets}) {
      throw ConfigError("report: task " + r.task + " mixes evaluation grids (T_max or test size differ)");
    }
    if (std::find(solver_cols.begin(), solver_cols.end(), r.solver) == solver_cols.end()) solver_cols.push_back(r.solver);
  }
  std::sort(solver_cols.begin(), solver_cols.end(),
            [](const auto& a, const auto& b) { return kind_rank(a) < kind_rank(b); });

  auto find = [&](const std::string& task, const std::string& solver) -> const metrics::EvalReport* {
    for (const auto& r : reports) {
      if (r.task == task && r.solver == solver) return &r;
    }
    return nullptr;
  };

  const auto out = run_dir / "summary";
  fs::create_directories(out);
  ReportFiles files{out / "table.csv", out / "curves.csv", out / "nonuniqueness.csv", out / "timing.csv",
                    out / "provenance.csv"};

  {
    std::ofstream os(files.table, std::ios::binary);
    os << "T,task";
    for (const auto& s : solver_cols) os << ',' << s;
    os << '\n';
    for (const bool at_max : {false, true}) {
      for (const auto& task : tasks) {
        const auto t_max = grid.at(task).first;
        os << (at_max ? t_max : 1) << ',' << task;
        for (const auto& s : solver_cols) {
          os << ',';
          const auto* r = find(task, s);
          if (!r) continue;
          if (at_max && r->deterministic) {
            os << '-';
          } else {
            os << sci(r->r_at(at_max ? t_max : 1));
          }
        }
        os << '\n';
      }
    }
  }
  {
    std::ofstream os(files.curves, std::ios::binary);
    os << "solver,task,T,r_T,p25,p75\n";
    for (const auto& r : reports) {
      for (std::size_t t = 0; t < r.t_max; ++t) {
        os << r.solver << ',' << r.task << ',' << t + 1 << ',' << text::format_double(r.r[t]) << ','
           << text::format_double(r.p25[t]) << ',' << text::format_double(r.p75[t]) << '\n';
      }
    }
  }
  {
    std::ofstream os(files.nonuniqueness, std::ios::binary);
    os << "task,gamma,r_nn_1,r_na_1,nn_parameters,na_parameters,d_r,gamma_convention\n";
    for (const auto& task : tasks) {
      const auto* nn = find(task, "nn");
      const auto* na = find(task, "na");
      std::optional<double> d_r;
      for (const auto& r : reports) {
        if (r.task == task && r.d_r) d_r = r.d_r;
      }
      os << task << ',';
      if (nn && na) os << sci(metrics::gamma(nn->r_at(1), na->r_at(1)));
      os << ',' << (nn ? sci(nn->r_at(1)) : "") << ',' << (na ? sci(na->r_at(1)) : "") << ',';
      if (nn) os << nn->parameter_count;
      os << ',';
      if (na) os << na->parameter_count;
      os << ',' << (d_r ? sci(*d_r) : "") << ",r_nn/r_na\n";
    }
  }
  {
    std::ofstream os(files.timing, std::ios::binary);
    os << "task,solver,train_seconds,seconds_per_200,parameters\n";
    for (const auto& r : reports) {
      os << r.task << ',' << r.solver << ',' << sci(r.timing.train_seconds) << ',' << sci(r.timing.seconds_per_200)
         << ',' << r.parameter_count << '\n';
    }
  }
  {
    std::ofstream os(files.provenance, std::ios::binary);
    os << "task,solver,seed,config_hash,dataset_hash,targets,t_max\n";
    for (const auto& r : reports) {
      os << r.task << ',' << r.solver << ',' << r.seed << ',' << r.config_hash << ',' << r.dataset_hash << ','
         << r.targets << ',' << r.t_max << '\n';
    }
  }
  if (log) log("report: " + std::to_string(reports.size()) + " reports merged into " + out.string());
  return files;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const DomainError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const MissingArtifact*>(&e) || dynamic_cast<const FormatError*>(&e)) return 4;
  return 1;
}

}  // namespace invbench::harness
