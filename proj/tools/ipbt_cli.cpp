#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ipbt/cli.hpp"

int main(int argc, char** argv) {
  using namespace ipbt;
  CLI::App app{"Iterated population based training: run experiments, compare optimizers, export plot data"};
  app.require_subcommand(1);

  cli::RunOptions run;
  std::uint64_t seed = 0;
  auto* run_cmd = app.add_subcommand("run", "run every seed of an experiment config");
  run_cmd->add_option("config", run.config_path, "experiment config (YAML)")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run_cmd->add_option("--seed", seed, "run only this seed");
  run_cmd->add_option("--parallel-seeds", run.parallel_seeds, "seeds to run concurrently")->default_val(1);
  run_cmd->add_option("--set", run.overrides, "override a config value, key.path=value (repeatable)");
  run_cmd->add_flag("--resume", run.resume, "continue from existing checkpoints");

  cli::CompareOptions cmp;
  std::string method = "percentile";
  auto* cmp_cmd = app.add_subcommand("compare", "IQM, confidence intervals and Holm-corrected paired tests");
  cmp_cmd->add_option("inputs", cmp.inputs, "run directories, summary.json files or score-table CSVs");
  cmp_cmd->add_option("--reference", cmp.reference, "algorithm tested against all others")->default_val("ipbt");
  cmp_cmd->add_option("--algorithms", cmp.algorithms, "restrict to these algorithm labels")->delimiter(',');
  cmp_cmd->add_option("--replicates", cmp.stats.test_replicates, "paired-test replicates")->default_val(50000);
  cmp_cmd->add_option("--ci-replicates", cmp.stats.ci_replicates, "confidence-interval replicates")
      ->default_val(10000);
  cmp_cmd->add_option("--confidence", cmp.stats.confidence)->default_val(0.95);
  cmp_cmd->add_option("--alpha", cmp.stats.alpha, "family-wise significance level")->default_val(0.05);
  cmp_cmd->add_option("--interval", method, "percentile or bca")
      ->check(CLI::IsMember({"percentile", "bca"}))
      ->default_val("percentile");
  cmp_cmd->add_option("--seed", cmp.stats.seed, "bootstrap seed")->default_val(0);
  cmp_cmd->add_option("--threads", cmp.stats.threads)->default_val(1);
  cmp_cmd->add_option("--out", cmp.out_dir, "report directory (default <output root>/compare)");
  cmp_cmd->add_option("--p-values", cmp.p_values, "Holm-correct these p-values instead")->delimiter(',');
  cmp_cmd->add_option("--names", cmp.names, "names for --p-values")->delimiter(',');

  cli::PlotdataOptions plot;
  auto* plot_cmd = app.add_subcommand("plotdata", "export best-score and HP-schedule series of a run");
  plot_cmd->add_option("run_dir", plot.run_dir, "seed directory written by run")->required();
  plot_cmd->add_option("--out", plot.out_dir, "output directory (default <run_dir>/plotdata)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfigError;
  }

  if (*run_cmd) {
    if (*seed_opt) run.seed = seed;
    return cli::cmd_run(run, std::cout, std::cerr);
  }
  if (*cmp_cmd) {
    cmp.stats.method = method == "bca" ? stats::IntervalMethod::bca : stats::IntervalMethod::percentile;
    if (cmp.inputs.empty() && cmp.p_values.empty()) {
      std::cerr << "config error: compare needs inputs or --p-values\n";
      return cli::kConfigError;
    }
    return cli::cmd_compare(cmp, std::cout, std::cerr);
  }
  return cli::cmd_plotdata(plot, std::cout, std::cerr);
}
