#include "tdpmd/harness.hpp"

#include "tdpmd/mdp_io.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

namespace tdpmd {

using nlohmann::json;
using detail::concat;

namespace {

// Init draws use an epoch no estimator call can reach.
constexpr std::uint64_t kInitEpoch = ~std::uint64_t{0};

template <typename T>
T get_field(const json& obj, const char* name, const std::string& where) {
  try {
    return obj.at(name).get<T>();
  } catch (const json::exception&) {
    throw config_error(concat(where, name, ": missing or wrong type"));
  }
}

template <typename T>
T get_or(const json& obj, const char* name, T fallback, const std::string& where) {
  if (!obj.contains(name)) return fallback;
  return get_field<T>(obj, name, where);
}

const json& object_field(const json& obj, const char* name) {
  if (!obj.contains(name) || !obj.at(name).is_object())
    throw config_error(concat(name, ": missing or not an object"));
  return obj.at(name);
}

StepSchedule parse_schedule(const json& doc) {
  if (!doc.contains("schedule")) return ConstantStep{0.1};
  const json& s = object_field(doc, "schedule");
  const auto kind = get_or<std::string>(s, "kind", "constant", "schedule.");
  StepSchedule out;
  if (kind == "constant") {
    out = ConstantStep{get_field<double>(s, "eta", "schedule.")};
  } else if (kind == "adaptive") {
    out = AdaptiveStep{get_or<double>(s, "c", 1.0, "schedule."),
                       get_or<double>(s, "eta_floor", 1e-3, "schedule.")};
  } else {
    throw config_error("schedule.kind: expected 'constant' or 'adaptive', got '" + kind + "'");
  }
  try {
    validate(out);
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("schedule: ") + e.what());
  }
  return out;
}

EvalScheme parse_scheme(const json& doc) {
  if (!doc.contains("eval")) return OneStep{};
  const json& e = object_field(doc, "eval");
  const auto kind = get_or<std::string>(e, "kind", "one_step", "eval.");
  EvalScheme out;
  if (kind == "one_step")
    out = OneStep{};
  else if (kind == "n_step")
    out = NStep{get_field<int>(e, "n", "eval.")};
  else if (kind == "lambda")
    out = LambdaStep{get_field<double>(e, "lambda", "eval.")};
  else
    throw config_error("eval.kind: expected 'one_step', 'n_step' or 'lambda', got '" + kind + "'");
  try {
    validate(out);
  } catch (const std::invalid_argument& err) {
    throw config_error(std::string("eval: ") + err.what());
  }
  return out;
}

json schedule_json(const StepSchedule& schedule) {
  if (const auto* c = std::get_if<ConstantStep>(&schedule)) return {{"kind", "constant"}, {"eta", c->eta}};
  const auto& a = std::get<AdaptiveStep>(schedule);
  return {{"kind", "adaptive"}, {"c", a.c}, {"eta_floor", a.eta_floor}};
}

json scheme_json(const EvalScheme& scheme) {
  if (const auto* n = std::get_if<NStep>(&scheme)) return {{"kind", "n_step"}, {"n", n->n}};
  if (const auto* l = std::get_if<LambdaStep>(&scheme)) return {{"kind", "lambda"}, {"lambda", l->lambda}};
  return {{"kind", "one_step"}};
}

json config_to_json(const ExperimentConfig& cfg) {
  json doc;
  if (cfg.mdp_file) {
    doc["mdp"] = {{"file", *cfg.mdp_file}};
  } else {
    doc["mdp"] = {{"generator",
                   {{"seed", cfg.generator.seed},
                    {"num_states", cfg.generator.num_states},
                    {"num_actions", cfg.generator.num_actions},
                    {"gamma", cfg.generator.gamma}}}};
  }
  doc["algorithm"] = std::string(to_string(cfg.algorithm));
  doc["mirror"] = std::string(to_string(cfg.map));
  doc["schedule"] = schedule_json(cfg.schedule);
  doc["eval"] = scheme_json(cfg.scheme);
  doc["iterations"] = cfg.iterations;
  json init;
  switch (cfg.v0) {
    case ValueInit::Zeros: init["v0"] = "zeros"; break;
    case ValueInit::Random: init["v0"] = "random"; break;
    case ValueInit::File: init["v0"] = {{"file", cfg.v0_file}}; break;
  }
  if (cfg.pi0 == PolicyInit::Uniform)
    init["pi0"] = "uniform";
  else
    init["pi0"] = {{"file", cfg.pi0_file}};
  doc["init"] = init;
  doc["sampling"] = {{"delta", cfg.delta}, {"alpha", cfg.alpha}, {"m_q", cfg.m_q}, {"m_v", cfg.m_v}};
  doc["checks"] = cfg.checks;
  doc["vi_tolerance"] = cfg.vi_tolerance;
  doc["opt_tolerance"] = cfg.opt_tolerance;
  doc["seeds"] = cfg.seeds;
  doc["output"] = {{"dir", cfg.output_dir}, {"prefix", cfg.output_prefix}};
  return doc;
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

VectorD random_values(std::uint64_t seed, Eigen::Index n, double hi) {
  std::mt19937_64 gen(substream_seed(seed, kInitEpoch, 0, 0));
  VectorD v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = hi * uniform01(gen);
  return v;
}

MatrixD random_action_values(std::uint64_t seed, Eigen::Index s, Eigen::Index a, double hi) {
  std::mt19937_64 gen(substream_seed(seed, kInitEpoch, 1, 0));
  MatrixD q(s, a);
  for (Eigen::Index i = 0; i < s; ++i)
    for (Eigen::Index j = 0; j < a; ++j) q(i, j) = hi * uniform01(gen);
  return q;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

Mdp random_mdp(std::uint64_t seed, Eigen::Index num_states, Eigen::Index num_actions, double gamma) {
  if (num_states < 1 || num_actions < 1)
    throw std::invalid_argument("random_mdp: num_states and num_actions must be >= 1");
  std::mt19937_64 gen(seed);
  MatrixD rewards(num_states, num_actions);
  for (Eigen::Index s = 0; s < num_states; ++s)
    for (Eigen::Index a = 0; a < num_actions; ++a) rewards(s, a) = uniform01(gen);

  MatrixD transitions(num_states * num_actions, num_states);
  for (Eigen::Index row = 0; row < transitions.rows(); ++row) {
    for (;;) {
      for (Eigen::Index t = 0; t < num_states; ++t) transitions(row, t) = uniform01(gen);
      const double sum = transitions.row(row).sum();
      if (sum >= 1e-12) {
        transitions.row(row) /= sum;
        break;
      }
    }
  }
  return Mdp(std::move(rewards), std::move(transitions), gamma);
}

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{"monotone",   "shift",      "sublinear",
                                              "linear",     "pqa_finite", "npg_policy",
                                              "three_point", "error_link", "subopt_bound"};
  return names;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw config_error("config must be a JSON object");
  static const std::set<std::string> allowed{"mdp",      "algorithm", "mirror",       "schedule",
                                             "eval",     "iterations", "init",        "sampling",
                                             "checks",   "vi_tolerance", "opt_tolerance", "seeds",
                                             "output"};
  for (const auto& [key, value] : doc.items())
    if (!allowed.count(key)) throw config_error("unknown config field '" + key + "'");

  ExperimentConfig cfg;
  const json& mdp = object_field(doc, "mdp");
  if (mdp.contains("file")) {
    cfg.mdp_file = get_field<std::string>(mdp, "file", "mdp.");
  } else if (mdp.contains("generator")) {
    const json& g = object_field(mdp, "generator");
    cfg.generator.seed = get_or<std::uint64_t>(g, "seed", 0, "mdp.generator.");
    cfg.generator.num_states = get_field<long>(g, "num_states", "mdp.generator.");
    cfg.generator.num_actions = get_field<long>(g, "num_actions", "mdp.generator.");
    cfg.generator.gamma = get_field<double>(g, "gamma", "mdp.generator.");
    if (cfg.generator.num_states < 1 || cfg.generator.num_actions < 1)
      throw config_error("mdp.generator: num_states and num_actions must be >= 1");
    if (!(cfg.generator.gamma >= 0 && cfg.generator.gamma < 1))
      throw config_error("mdp.generator.gamma must lie in [0,1)");
  } else {
    throw config_error("mdp: needs 'file' or 'generator'");
  }

  try {
    cfg.algorithm = algorithm_from_string(get_or<std::string>(doc, "algorithm", "td_pmd", ""));
    cfg.map = mirror_map_from_string(get_or<std::string>(doc, "mirror", "euclidean", ""));
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  cfg.schedule = parse_schedule(doc);
  cfg.scheme = parse_scheme(doc);
  if (!std::holds_alternative<OneStep>(cfg.scheme) && cfg.algorithm != Algorithm::TdPmd)
    throw config_error("eval: multi-step evaluation is only defined for td_pmd");
  cfg.iterations = get_or<int>(doc, "iterations", 100, "");
  if (cfg.iterations < 1) throw config_error("iterations must be >= 1");

  if (doc.contains("init")) {
    const json& init = object_field(doc, "init");
    if (init.contains("v0")) {
      const json& v = init.at("v0");
      if (v == "zeros") cfg.v0 = ValueInit::Zeros;
      else if (v == "random") cfg.v0 = ValueInit::Random;
      else if (v.is_object()) {
        cfg.v0 = ValueInit::File;
        cfg.v0_file = get_field<std::string>(v, "file", "init.v0.");
      } else throw config_error("init.v0: expected 'zeros', 'random' or {\"file\": ...}");
    }
    if (init.contains("pi0")) {
      const json& p = init.at("pi0");
      if (p == "uniform") cfg.pi0 = PolicyInit::Uniform;
      else if (p.is_object()) {
        cfg.pi0 = PolicyInit::File;
        cfg.pi0_file = get_field<std::string>(p, "file", "init.pi0.");
      } else throw config_error("init.pi0: expected 'uniform' or {\"file\": ...}");
    }
  }

  if (doc.contains("sampling")) {
    const json& s = object_field(doc, "sampling");
    cfg.delta = get_or<double>(s, "delta", cfg.delta, "sampling.");
    cfg.alpha = get_or<double>(s, "alpha", cfg.alpha, "sampling.");
    cfg.m_q = get_or<long>(s, "m_q", 0, "sampling.");
    cfg.m_v = get_or<long>(s, "m_v", 0, "sampling.");
    if (!(cfg.delta > 0)) throw config_error("sampling.delta must be positive");
    if (!(cfg.alpha > 0 && cfg.alpha < 1)) throw config_error("sampling.alpha must lie in (0,1)");
    if (cfg.m_q < 0 || cfg.m_v < 0) throw config_error("sampling: counts must be >= 0");
  }

  if (doc.contains("checks")) {
    const json& c = doc.at("checks");
    if (c == "all") {
      cfg.checks = known_checks();
    } else {
      cfg.checks = get_field<std::vector<std::string>>(doc, "checks", "");
      for (const auto& name : cfg.checks)
        if (std::find(known_checks().begin(), known_checks().end(), name) == known_checks().end())
          throw config_error("checks: unknown check '" + name + "'");
    }
  }

  cfg.vi_tolerance = get_or<double>(doc, "vi_tolerance", cfg.vi_tolerance, "");
  cfg.opt_tolerance = get_or<double>(doc, "opt_tolerance", cfg.opt_tolerance, "");
  if (!(cfg.vi_tolerance > 0) || !(cfg.opt_tolerance > 0))
    throw config_error("vi_tolerance and opt_tolerance must be positive");

  if (doc.contains("seeds")) {
    cfg.seeds = get_field<std::vector<std::uint64_t>>(doc, "seeds", "");
    if (cfg.seeds.empty()) throw config_error("seeds: list is empty");
    if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size())
      throw config_error("seeds: entries must be distinct");
  }

  if (doc.contains("output")) {
    const json& o = object_field(doc, "output");
    cfg.output_dir = get_or<std::string>(o, "dir", cfg.output_dir, "output.");
    cfg.output_prefix = get_or<std::string>(o, "prefix", cfg.output_prefix, "output.");
  }
  cfg.raw = config_to_json(cfg);
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw config_error(e.what());
  }
  try {
    return parse_config_text(text);
  } catch (const config_error& e) {
    throw config_error(path + ": " + e.what());
  }
}

void sync_raw(ExperimentConfig& cfg) { cfg.raw = config_to_json(cfg); }

bool TrialResult::any_failed() const {
  return std::any_of(checks.begin(), checks.end(), [](const CheckReport& r) { return r.failed(); });
}

bool ExperimentResult::any_failed() const {
  return std::any_of(trials.begin(), trials.end(), [](const TrialResult& t) { return t.any_failed(); });
}

Mdp build_mdp(const ExperimentConfig& cfg) {
  if (cfg.mdp_file) return load_mdp(*cfg.mdp_file);
  return random_mdp(cfg.generator.seed, cfg.generator.num_states, cfg.generator.num_actions,
                    cfg.generator.gamma);
}

TrialResult run_trial(const ExperimentConfig& cfg, const Mdp& mdp, const OptimalityData<double>& opt,
                      std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto S = mdp.num_states();
  const auto A = mdp.num_actions();
  const double v_max = 1 / (1 - mdp.gamma());

  VectorD v0 = VectorD::Zero(S);
  if (cfg.v0 == ValueInit::Random) v0 = random_values(seed, S, v_max);
  if (cfg.v0 == ValueInit::File) v0 = load_values(cfg.v0_file, S);
  MatrixD q0 = MatrixD::Zero(S, A);
  if (cfg.v0 == ValueInit::Random) q0 = random_action_values(seed, S, A, v_max);
  if (cfg.v0 == ValueInit::File) q0 = induce_q(mdp, v0);
  const PolicyD pi0 = cfg.pi0 == PolicyInit::Uniform ? PolicyD::uniform(S, A)
                                                     : load_policy(cfg.pi0_file, S, A);

  TrialResult out;
  out.seed = seed;
  const int T = cfg.iterations;
  SampleConfig sample{T, cfg.delta, cfg.alpha, cfg.m_q, cfg.m_v};
  switch (cfg.algorithm) {
    case Algorithm::TdPmd:
      out.trajectory = td_pmd(mdp, cfg.map, cfg.schedule, cfg.scheme, v0, pi0, T);
      break;
    case Algorithm::QTdPmd:
      out.trajectory = q_td_pmd(mdp, cfg.map, cfg.schedule, q0, pi0, T);
      break;
    case Algorithm::Pmd:
      out.trajectory = pmd_baseline(mdp, cfg.map, cfg.schedule, pi0, T);
      break;
    case Algorithm::SampleTdPmd: {
      GenerativeModel gm(mdp, seed);
      out.trajectory = sample_td_pmd(gm, cfg.map, cfg.schedule, sample, v0, pi0);
      break;
    }
    case Algorithm::SampleQTdPmd: {
      GenerativeModel gm(mdp, seed);
      out.trajectory = sample_q_td_pmd(gm, cfg.map, cfg.schedule, sample, q0, pi0);
      break;
    }
  }
  out.metrics = compute_metrics(mdp, opt, out.trajectory);

  const bool sampled = cfg.algorithm == Algorithm::SampleTdPmd || cfg.algorithm == Algorithm::SampleQTdPmd;
  for (const auto& name : cfg.checks) {
    if (name == "monotone") {
      out.checks.push_back(check_monotone(mdp, opt, out.trajectory));
    } else if (name == "shift") {
      if (cfg.algorithm == Algorithm::TdPmd) {
        out.checks.push_back(check_shift(mdp, cfg.map, cfg.schedule, cfg.scheme, v0, pi0, T));
      } else {
        CheckReport r;
        r.name = "shift";
        r.note = "only defined for td_pmd";
        out.checks.push_back(r);
      }
    } else if (name == "sublinear") {
      out.checks.push_back(check_sublinear(mdp, opt, out.trajectory, out.metrics));
    } else if (name == "linear") {
      const auto* adaptive = std::get_if<AdaptiveStep>(&cfg.schedule);
      out.checks.push_back(check_linear(mdp, opt, out.trajectory, out.metrics, adaptive ? adaptive->c : 1.0,
                                        sampled ? std::optional<double>(cfg.delta) : std::nullopt));
    } else if (name == "pqa_finite") {
      out.checks.push_back(check_pqa_finite(mdp, opt, out.trajectory, out.metrics));
    } else if (name == "npg_policy") {
      out.checks.push_back(check_npg_policy_convergence(opt, out.trajectory, out.metrics));
    } else if (name == "three_point") {
      out.checks.push_back(check_three_point(mdp, opt, out.trajectory));
    } else if (name == "error_link") {
      out.checks.push_back(check_error_link(mdp, opt, out.trajectory, out.metrics));
    } else if (name == "subopt_bound") {
      out.checks.push_back(check_subopt_bound(opt, out.metrics));
    }
  }
  out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, unsigned max_threads) {
  ExperimentResult result;
  result.config = cfg;
  const Mdp mdp = build_mdp(cfg);
  result.opt = optimal_values(mdp, cfg.vi_tolerance, cfg.opt_tolerance);
  result.trials.resize(cfg.seeds.size());

  unsigned workers = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(cfg.seeds.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cfg.seeds.size());
  auto work = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      try {
        result.trials[i] = run_trial(cfg, mdp, result.opt, cfg.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

std::string format_csv(const std::vector<const TrialResult*>& trials) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const TrialResult* trial : trials) {
    const auto& m = trial->metrics;
    const std::string variant = trial->trajectory.variant();
    for (std::size_t k = 0; k < m.size(); ++k) {
      out += std::to_string(k) + "," + fmt17(m.v_err[k]) + "," + fmt17(m.pol_err[k]) + "," +
             fmt17(m.subopt_mass[k]) + "," + fmt17(m.eta[k]) + "," + fmt17(m.kappa_term[k]) + "," +
             variant + "\n";
    }
  }
  return out;
}

json check_to_json(const CheckReport& report) {
  return {{"name", report.name},
          {"status", std::string(to_string(report.status))},
          {"worst_violation", finite_or_null(report.worst_violation)},
          {"worst_iteration", report.worst_iteration},
          {"tolerance", report.tolerance},
          {"note", report.note}};
}

json summary_json(const ExperimentConfig& cfg, const TrialResult& trial) {
  json checks = json::array();
  for (const auto& c : trial.checks) checks.push_back(check_to_json(c));
  return {{"config", cfg.raw},
          {"seed", trial.seed},
          {"variant", trial.trajectory.variant()},
          {"kappa0", trial.trajectory.kappa0},
          {"final_v_err", trial.metrics.v_err.back()},
          {"final_pol_err", trial.metrics.pol_err.back()},
          {"checks", checks},
          {"wall_ms", trial.wall_ms}};
}

std::string resolve_output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return cfg.output_dir;
}

std::vector<std::string> write_outputs(const ExperimentResult& result) {
  const std::filesystem::path dir = resolve_output_dir(result.config);
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  for (const auto& trial : result.trials) {
    const std::string stem = concat(result.config.output_prefix, "_seed", trial.seed);
    const auto csv = dir / (stem + ".csv");
    const auto summary = dir / (stem + ".json");
    write_text(csv, format_csv({&trial}));
    write_text(summary, summary_json(result.config, trial).dump(2) + "\n");
    written.push_back(csv.string());
    written.push_back(summary.string());
  }
  return written;
}

std::vector<std::string> write_comparison(const ExperimentResult& a, const ExperimentResult& b) {
  if (a.trials.size() != b.trials.size())
    throw std::invalid_argument("write_comparison: runs have different seed lists");
  const std::filesystem::path dir = resolve_output_dir(a.config);
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    const auto path = dir / concat(a.config.output_prefix, "_compare_seed", a.trials[i].seed, ".csv");
    write_text(path, format_csv({&a.trials[i], &b.trials[i]}));
    written.push_back(path.string());
  }
  return written;
}

}  // namespace tdpmd
