#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "invbench/harness.hpp"
#include "invbench/text.hpp"

using namespace invbench;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  bool paper_scale = false;
  bool force = false;
  std::string run_dir;  // report only
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("-c,--config", o.config, "experiment config file");
  cmd->add_option("--set", o.overrides, "override, section.key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "experiment seed");
  cmd->add_option("-j,--jobs", o.jobs, "parallel jobs")->check(CLI::PositiveNumber);
  cmd->add_flag("--paper-scale", o.paper_scale, "full-size datasets, batch 1024, 300 epochs, T_max 200");
  cmd->add_flag("--force", o.force, "overwrite existing outputs");
}

harness::Context make_context(const Options& o) {
  auto ini = o.config.empty() ? harness::Ini{} : harness::Ini::load(o.config);
  for (const auto& s : o.overrides) ini.apply_override(s);
  if (o.seed) ini.set("experiment", "seed", std::to_string(*o.seed));
  if (o.jobs) ini.set("experiment", "jobs", std::to_string(*o.jobs));
  harness::Context ctx;
  ctx.config = harness::make_config(ini, o.paper_scale);
  ctx.force = o.force;
  ctx.log = [](const std::string& m) { std::cerr << m << '\n'; };
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"invbench: inverse-design benchmark harness"};
  app.require_subcommand(1);
  Options o;
  auto* gen = app.add_subcommand("gen-data", "generate a dataset for the configured task");
  auto* train = app.add_subcommand("train", "train the configured solver");
  auto* sweep = app.add_subcommand("sweep", "train every cell of the [sweep] grid and keep the best");
  auto* eval = app.add_subcommand("eval", "evaluate the selected model on the test split");
  auto* report = app.add_subcommand("report", "merge evaluation reports into summary tables");
  for (auto* cmd : {gen, train, sweep, eval, report}) add_common(cmd, o);
  report->add_option("run_dir", o.run_dir, "output directory (default: experiment.out_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto ctx = make_context(o);
    if (gen->parsed()) {
      std::cout << harness::gen_data(ctx).string() << '\n';
    } else if (train->parsed()) {
      const auto out = harness::cmd_train(ctx);
      std::cout << out.record.checkpoint.string() << '\n';
    } else if (sweep->parsed()) {
      const auto result = harness::cmd_sweep(ctx);
      const auto& best = result.records[result.best];
      std::cout << "best " << best.config_hash << " val_r1 " << text::format_double(*best.val_r1) << '\n';
    } else if (eval->parsed()) {
      harness::cmd_eval(ctx);
      std::cout << harness::report_path(ctx.config, ctx.config.solver.kind).string() << '\n';
    } else if (report->parsed()) {
      const auto dir = o.run_dir.empty() ? ctx.config.out_dir : std::filesystem::path(o.run_dir);
      const auto files = harness::cmd_report(dir, ctx.log);
      std::cout << files.table.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return harness::exit_code(e);
  }
  return 0;
}
