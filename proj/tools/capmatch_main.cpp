// Command-line front end: run experiments, verify the minimax theory on
// exact discrete tables, and reproduce the ablation ladder.
//
// Exit codes: 0 ok, 1 usage error, 2 check failure, 3 runtime failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "capmatch/config.hpp"
#include "capmatch/theory_suite.hpp"
#include "capmatch/trainer.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  // only applied when the flag was actually given
  std::uint64_t seed = 0;
  std::string variant;
  double paired_fraction = 0.0;
  double pool_fraction = 0.0;
  int epochs = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "key=value configuration file");
  cmd->add_option("--out-dir", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "master seed");
  cmd->add_option("--variant", opts.variant,
                  "paired-only|ver1|ver2|final|final-concept|cyclegan");
  cmd->add_option("--paired-fraction", opts.paired_fraction,
                  "fraction of samples keeping pair labels");
  cmd->add_option("--pool-fraction", opts.pool_fraction,
                  "pseudo-label search pool fraction");
  cmd->add_option("--epochs", opts.epochs, "training epochs");
}

capmatch::ExperimentConfig resolve_config(const CLI::App* cmd,
                                          const CommonOpts& opts) {
  capmatch::ExperimentConfig cfg;
  if (!opts.config_path.empty())
    cfg = capmatch::parse_config_file(opts.config_path);
  if (cmd->count("--seed"))
    capmatch::apply_override(cfg, "seed", std::to_string(opts.seed));
  if (cmd->count("--variant"))
    capmatch::apply_override(cfg, "variant", opts.variant);
  if (cmd->count("--paired-fraction"))
    capmatch::apply_override(cfg, "paired_fraction",
                             std::to_string(opts.paired_fraction));
  if (cmd->count("--pool-fraction"))
    capmatch::apply_override(cfg, "pool_fraction",
                             std::to_string(opts.pool_fraction));
  if (cmd->count("--epochs"))
    capmatch::apply_override(cfg, "epochs", std::to_string(opts.epochs));
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised adversarial caption association, desk scale"};
  app.require_subcommand(1);

  // verify-theory
  auto* verify = app.add_subcommand(
      "verify-theory", "exact checks of the minimax objective's guarantees");
  capmatch::TheoryOptions theory;
  verify->add_option("--trials", theory.trials, "random joints per check");
  verify->add_option("--support", theory.support, "table side length");
  verify->add_option("--tol", theory.tolerance, "identity tolerance");
  verify->add_option("--seed", theory.seed, "rng seed");
  verify->add_option("--grid", theory.brute_force_grid,
                     "brute-force grid resolution");

  // run
  auto* run = app.add_subcommand("run", "train one variant and write logs");
  CommonOpts run_opts;
  add_common(run, run_opts);

  // ablate
  auto* ablate = app.add_subcommand(
      "ablate", "train every variant over several seeds and compare");
  CommonOpts ablate_opts;
  add_common(ablate, ablate_opts);
  int seeds = 0;
  ablate->add_option("--seeds", seeds, "number of seeds per variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (verify->parsed()) {
      if (theory.trials < 1) {
        std::cerr << "verify-theory: trials must be >= 1\n";
        return 1;
      }
      const capmatch::TheoryReport report = capmatch::verify_theory(theory);
      std::cout << report.to_string();
      if (!report.all_pass()) {
        std::cout << "theory verification FAILED\n";
        return 2;
      }
      std::cout << "theory verification passed\n";
      return 0;
    }

    if (run->parsed()) {
      const capmatch::ExperimentConfig cfg = resolve_config(run, run_opts);
      const capmatch::MetricsLog log =
          capmatch::run_experiment(cfg, run_opts.out_dir);
      std::cout << log.to_csv();
      std::cout << "wrote " << run_opts.out_dir << "/metrics.csv\n";
      return 0;
    }

    if (ablate->parsed()) {
      capmatch::ExperimentConfig cfg = resolve_config(ablate, ablate_opts);
      const int n = ablate->count("--seeds") ? seeds : cfg.ablation_seeds;
      const capmatch::AblationResult result =
          capmatch::run_ablation(cfg, n, ablate_opts.out_dir);
      std::cout << result.to_csv() << '\n' << result.ordering_summary();
      std::cout << "wrote " << ablate_opts.out_dir << "/ablation.csv\n";
      if (!result.ladder_ok()) {
        std::cout << "ablation ordering FAILED\n";
        return 2;
      }
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
