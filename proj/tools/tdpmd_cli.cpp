// tdpmd: command-line front end for the TD-PMD toolkit.
//
// Exit codes: 0 ok, 1 a check failed, 2 usage or configuration error.

#include "tdpmd/harness.hpp"
#include "tdpmd/mdp_io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace tdpmd;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

void apply_overrides(ExperimentConfig& cfg, const std::optional<std::uint64_t>& seed,
                     const std::string& out_dir) {
  if (seed) cfg.seeds = {*seed};
  if (!out_dir.empty()) {
    cfg.output_dir = out_dir;
    // The flag outranks the environment, which resolve_output_dir consults first.
    ::setenv(kOutputDirEnv, out_dir.c_str(), 1);
  }
  sync_raw(cfg);
}

void print_checks(const TrialResult& trial) {
  for (const auto& c : trial.checks) {
    std::cout << "seed " << trial.seed << " " << c.name << ": " << to_string(c.status);
    if (c.status != CheckStatus::NotApplicable)
      std::cout << " (worst " << c.worst_violation << " at k=" << c.worst_iteration << ", tol "
                << c.tolerance << ")";
    if (!c.note.empty()) std::cout << " " << c.note;
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy mirror descent with TD evaluation on tabular MDPs"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string config_path;
  unsigned threads = 0;

  auto* gen = app.add_subcommand("gen-mdp", "Write a random MDP file");
  std::uint64_t gen_seed = 0;
  long gen_states = 5, gen_actions = 3;
  double gen_gamma = 0.9;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--states", gen_states, "Number of states")->check(CLI::PositiveNumber);
  gen->add_option("--actions", gen_actions, "Number of actions")->check(CLI::PositiveNumber);
  gen->add_option("--gamma", gen_gamma, "Discount factor in [0,1)");
  gen->add_option("-o,--output", gen_out, "Output path (stdout if omitted)");

  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "Master seed; replaces the config's seed list");
    sub->add_option("--out-dir", out_dir, "Output directory (overrides config and environment)");
    sub->add_option("--threads", threads, "Worker threads for trials (0 = hardware)");
  };

  auto* run = app.add_subcommand("run", "Execute an experiment config");
  add_run_options(run);

  auto* compare = app.add_subcommand("compare", "Run two algorithms on one MDP and merge the CSVs");
  add_run_options(compare);
  std::vector<std::string> algorithms;
  compare->add_option("--algorithms", algorithms, "Two algorithm selectors")
      ->required()
      ->expected(2)
      ->delimiter(',');

  auto* validate = app.add_subcommand("validate", "Run every applicable check; exit 1 on failure");
  add_run_options(validate);

  auto* sizes = app.add_subcommand("sample-sizes", "Print Hoeffding sample sizes");
  int sz_T = 10;
  long sz_states = 2, sz_actions = 2;
  double sz_gamma = 0.5, sz_delta = 0.1, sz_alpha = 0.1;
  bool sz_q = false;
  sizes->add_option("-T,--iterations", sz_T, "Iteration count")->required();
  sizes->add_option("--states", sz_states, "Number of states")->required();
  sizes->add_option("--actions", sz_actions, "Number of actions")->required();
  sizes->add_option("--gamma", sz_gamma, "Discount factor")->required();
  sizes->add_option("--delta", sz_delta, "Per-entry error level")->required();
  sizes->add_option("--alpha", sz_alpha, "Failure probability")->required();
  sizes->add_flag("--q-variant", sz_q, "Sizes for the action-value variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      const Mdp mdp = random_mdp(gen_seed, gen_states, gen_actions, gen_gamma);
      if (gen_out.empty())
        std::cout << format_mdp(mdp);
      else
        save_mdp(mdp, gen_out);
      return kOk;
    }

    if (*sizes) {
      const auto s = hoeffding_sizes(sz_T, sz_states, sz_actions, sz_gamma, sz_delta, sz_alpha, sz_q);
      std::cout << "m_q " << s.m_q << "\n";
      if (!sz_q) std::cout << "m_v " << s.m_v << "\n";
      return kOk;
    }

    ExperimentConfig cfg = load_config(config_path);
    apply_overrides(cfg, seed, out_dir);

    if (*run) {
      const auto result = run_experiment(cfg, threads);
      for (const auto& path : write_outputs(result)) std::cout << path << "\n";
      for (const auto& trial : result.trials) print_checks(trial);
      return result.any_failed() ? kCheckFailed : kOk;
    }

    if (*compare) {
      ExperimentConfig other = cfg;
      cfg.algorithm = algorithm_from_string(algorithms[0]);
      other.algorithm = algorithm_from_string(algorithms[1]);
      sync_raw(cfg);
      sync_raw(other);
      const auto a = run_experiment(cfg, threads);
      const auto b = run_experiment(other, threads);
      for (const auto& path : write_comparison(a, b)) std::cout << path << "\n";
      return a.any_failed() || b.any_failed() ? kCheckFailed : kOk;
    }

    if (*validate) {
      cfg.checks = known_checks();
      sync_raw(cfg);
      const auto result = run_experiment(cfg, threads);
      for (const auto& trial : result.trials) print_checks(trial);
      const bool failed = result.any_failed();
      std::cout << (failed ? "FAIL" : "OK") << "\n";
      return failed ? kCheckFailed : kOk;
    }
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const format_error& e) {
    std::cerr << "input file error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
