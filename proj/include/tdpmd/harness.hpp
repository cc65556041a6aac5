#pragma once

#include "tdpmd/algorithms.hpp"
#include "tdpmd/diagnostics.hpp"
#include "tdpmd/mdp.hpp"
#include "tdpmd/sampling.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tdpmd {

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirEnv = "TDPMD_OUTPUT_DIR";

inline constexpr const char* kCsvHeader = "iter,v_err_inf,pol_err_inf,subopt_mass,eta,kappa_term,variant";

/// Invalid experiment configuration; maps to CLI exit code 2.
class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Rewards iid U[0,1); transition rows iid U[0,1) entries divided by their sum.
Mdp random_mdp(std::uint64_t seed, Eigen::Index num_states, Eigen::Index num_actions, double gamma);

struct GeneratorSpec {
  std::uint64_t seed = 0;
  Eigen::Index num_states = 1;
  Eigen::Index num_actions = 1;
  double gamma = 0.9;
};

enum class ValueInit { Zeros, Random, File };
enum class PolicyInit { Uniform, File };

struct ExperimentConfig {
  std::optional<std::string> mdp_file;
  GeneratorSpec generator;
  Algorithm algorithm = Algorithm::TdPmd;
  MirrorMap map = MirrorMap::Euclidean;
  StepSchedule schedule = ConstantStep{0.1};
  EvalScheme scheme = OneStep{};
  int iterations = 100;
  ValueInit v0 = ValueInit::Zeros;
  std::string v0_file;
  PolicyInit pi0 = PolicyInit::Uniform;
  std::string pi0_file;
  double delta = 0.1;
  double alpha = 0.1;
  long m_q = 0;
  long m_v = 0;
  std::vector<std::string> checks;
  double vi_tolerance = 1e-9;
  double opt_tolerance = 1e-6;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "tdpmd_out";
  std::string output_prefix = "run";
  /// Source document with defaults filled in; embedded in every summary.
  nlohmann::json raw;
};

/// Every check name accepted in the "checks" list.
const std::vector<std::string>& known_checks();

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Re-renders cfg.raw after programmatic edits (seed or output overrides).
void sync_raw(ExperimentConfig& cfg);

struct TrialResult {
  std::uint64_t seed = 0;
  Trajectory trajectory;
  MetricSeries metrics;
  std::vector<CheckReport> checks;
  double wall_ms = 0;

  bool any_failed() const;
};

struct ExperimentResult {
  ExperimentConfig config;
  OptimalityData<double> opt;
  std::vector<TrialResult> trials;

  bool any_failed() const;
};

Mdp build_mdp(const ExperimentConfig& cfg);

/// Runs one trial on a prebuilt MDP. Deterministic in (cfg, seed).
TrialResult run_trial(const ExperimentConfig& cfg, const Mdp& mdp, const OptimalityData<double>& opt,
                      std::uint64_t seed);

/// All trials, in parallel over seeds; results keep the order of cfg.seeds.
ExperimentResult run_experiment(const ExperimentConfig& cfg, unsigned max_threads = 0);

std::string format_csv(const std::vector<const TrialResult*>& trials);
nlohmann::json check_to_json(const CheckReport& report);
nlohmann::json summary_json(const ExperimentConfig& cfg, const TrialResult& trial);

/// Output directory after the environment override.
std::string resolve_output_dir(const ExperimentConfig& cfg);

/// Writes <prefix>_seed<seed>.csv and .json per trial; returns the paths written.
std::vector<std::string> write_outputs(const ExperimentResult& result);

/// Writes one merged CSV per seed holding the rows of both runs.
std::vector<std::string> write_comparison(const ExperimentResult& a, const ExperimentResult& b);

}  // namespace tdpmd
