#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ctkrm/commands.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace {

struct Flags {
  std::string config;
  std::string bank;
  long trials = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string combo;
  std::string transient;
  int jobs = 0;
  std::string out;
  std::string data;
  std::string estimates;
  double ts = 0.0;
  long n = 0;
  std::optional<double> snr_db;
  int starts = -1;
  long draws = -1;
  double perturb = 0.0;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config; flags given on the command line override it")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Master seed")->each([&f](const std::string&) { f.seed_set = true; });
  cmd->add_option("--jobs", f.jobs, "Worker threads for trials")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory");
}

ctkrm::ExperimentConfig resolve(const std::string& command, const Flags& f) {
  ctkrm::ExperimentConfig cfg;
  cfg.command = command;
  if (!f.config.empty()) ctkrm::apply_config(cfg, ctkrm::io::read_json(f.config));
  cfg.command = command;
  if (!f.bank.empty()) {
    if (f.bank == "custom") {
      cfg.bank.name = "custom";
    } else {
      cfg.bank = ctkrm::databank_spec(f.bank);
    }
  }
  if (f.ts > 0.0) cfg.bank.ts = f.ts;
  if (f.n > 0) cfg.bank.n = f.n;
  if (f.snr_db) cfg.bank.snr_db = *f.snr_db;
  if (f.trials > 0) cfg.trials = f.trials;
  if (f.seed_set) cfg.seed = f.seed;
  if (!f.combo.empty()) cfg.combo = ctkrm::parse_combo(f.combo);
  if (!f.transient.empty()) cfg.transient = f.transient == "on";
  if (f.jobs > 0) cfg.jobs = f.jobs;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.data.empty()) cfg.data = f.data;
  if (!f.estimates.empty()) cfg.estimates = f.estimates;
  if (f.starts >= 0) cfg.hyperopt.n_starts = f.starts;
  if (f.draws > 0) cfg.validation.draws = f.draws;
  if (f.perturb != 0.0) cfg.validation.lambda1_perturbation = f.perturb;
  if (command == "validate-kernels" && !f.combo.empty()) cfg.validation.combos = {cfg.combo};
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep large Gram buffers on the heap between objective evaluations
  // instead of returning them to the kernel each time.
  mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
  CLI::App app{"Continuous-time kernel-regularized impulse response estimation"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("generate", "Simulate a Monte Carlo data bank");
  add_common(gen, f);
  gen->add_option("--bank", f.bank, "Data bank")->check(CLI::IsMember({"D1", "D2", "D3", "D4", "custom"}));
  gen->add_option("--trials", f.trials, "Number of trials")->check(CLI::PositiveNumber);
  gen->add_option("--ts", f.ts, "Sampling interval (custom bank)")->check(CLI::PositiveNumber);
  gen->add_option("--n", f.n, "Training samples (custom bank)")->check(CLI::PositiveNumber);
  gen->add_option("--snr", f.snr_db, "Signal-to-noise ratio in dB");

  auto* est = app.add_subcommand("estimate", "Fit the estimator to every trial of a data bank");
  add_common(est, f);
  est->add_option("--data", f.data, "Data bank directory written by generate");
  est->add_option("--trials", f.trials, "Only the first N trials")->check(CLI::PositiveNumber);
  est->add_option("--combo", f.combo, "Assumed input behavior")->check(CLI::IsMember({"zoh-pa", "zoh-za", "bl-pa"}));
  est->add_option("--transient", f.transient, "Transient term for the unknown past")
      ->check(CLI::IsMember({"on", "off"}));
  est->add_option("--starts", f.starts, "Optimizer starts (0: five per hyperparameter)")->check(CLI::NonNegativeNumber);

  auto* eva = app.add_subcommand("evaluate", "Score estimates against the true system");
  add_common(eva, f);
  eva->add_option("--data", f.data, "Data bank directory");
  eva->add_option("--estimates", f.estimates, "Directory written by estimate");

  auto* val = app.add_subcommand("validate-kernels", "Check every closed form against its quadrature oracle");
  add_common(val, f);
  val->add_option("--draws", f.draws, "Random hyperparameter draws")->check(CLI::PositiveNumber);
  val->add_option("--combo", f.combo, "Only the kernels used by this combo")
      ->check(CLI::IsMember({"zoh-pa", "zoh-za", "bl-pa"}));
  val->add_option("--perturb-lambda1", f.perturb, "Test mode: relative perturbation of the off-diagonal cell constant");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ctkrm::cmd_generate(resolve("generate", f));
      return EXIT_SUCCESS;
    }
    if (est->parsed()) {
      const long failures = ctkrm::cmd_estimate(resolve("estimate", f));
      if (failures > 0) std::cerr << "estimate: " << failures << " trial(s) failed; see error.json files\n";
      return EXIT_SUCCESS;
    }
    if (eva->parsed()) {
      ctkrm::cmd_evaluate(resolve("evaluate", f));
      return EXIT_SUCCESS;
    }
    if (val->parsed()) {
      const auto rep = ctkrm::cmd_validate_kernels(resolve("validate-kernels", f));
      return rep.passed() ? EXIT_SUCCESS : EXIT_FAILURE;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return EXIT_FAILURE;
}
