// mffals: measure-costs | falsify | validate | report
//
//   mffals measure-costs --config exp.json --out out/
//   mffals falsify --config exp.json --out out/ [--jobs N] [--seed-offset K]
//   mffals validate --config exp.json --out out/
//   mffals report --out out/ [--runs path ...]
//
// Exit codes: 0 ok, 1 usage, 2 bad config or input, 3 runtime failure.

#include <CLI11.hpp>

#include "mffals/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity falsification of controller specifications"};
  app.require_subcommand(1);

  std::string config, out = "out";
  int jobs = 1;
  std::uint64_t seed_offset = 0;
  std::vector<std::string> runs;

  auto* measure = app.add_subcommand("measure-costs", "Measure per-fidelity cost ratios and write costs.json");
  measure->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  measure->add_option("--out", out, "Output directory");

  auto* falsify = app.add_subcommand("falsify", "Run every method for every seed");
  falsify->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  falsify->add_option("--out", out, "Output directory");
  falsify->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  falsify->add_option("--seed-offset", seed_offset, "Added to every configured seed");

  auto* validate = app.add_subcommand("validate", "Re-run counterexamples at the top fidelity");
  validate->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  validate->add_option("--out", out, "Output directory holding runs/");

  auto* report = app.add_subcommand("report", "Aggregate run summaries into tables");
  report->add_option("--out", out, "Output directory");
  report->add_option("--runs", runs, "Summary files or directories (default: <out>/runs)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (measure->parsed()) return mffals::cmd_measure_costs(config, out);
  if (falsify->parsed()) return mffals::cmd_falsify(config, out, jobs, seed_offset);
  if (validate->parsed()) return mffals::cmd_validate(config, out);
  std::vector<std::filesystem::path> inputs(runs.begin(), runs.end());
  if (inputs.empty()) inputs.push_back(std::filesystem::path(out) / "runs");
  return mffals::cmd_report(inputs, out);
}
