#include "tdpmd/harness.hpp"
#include "tdpmd/mdp_io.hpp"

#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(TDPMD_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  Outcome o;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) o.out += buf.data();
  const int status = ::pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tdpmd_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path.string();
}

const char* kGoodConfig = R"({
  "mdp": {"generator": {"seed": 4, "num_states": 6, "num_actions": 3, "gamma": 0.9}},
  "algorithm": "td_pmd", "mirror": "euclidean",
  "schedule": {"kind": "constant", "eta": 0.5}, "iterations": 40,
  "init": {"v0": "zeros", "pi0": "uniform"}, "seeds": [1]
})";

}  // namespace

TEST_CASE("sample-sizes prints the Hoeffding counts") {
  const auto o = run("sample-sizes -T 10 --states 2 --actions 2 --gamma 0.5 --delta 0.1 --alpha 0.1");
  CHECK(o.code == 0);
  CHECK(o.out.find("m_q 1476\n") != std::string::npos);
  const auto q = run("sample-sizes -T 10 --states 2 --actions 2 --gamma 0.5 --delta 0.1 --alpha 0.1 --q-variant");
  CHECK(q.code == 0);
  CHECK(q.out.find("m_v") == std::string::npos);
  CHECK(run("sample-sizes -T 10 --states 2 --actions 2 --gamma 1.0 --delta 0.1 --alpha 0.1").code == 2);
}

TEST_CASE("usage errors exit 2") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("run").code == 2);
  CHECK(run("run /nonexistent/config.json").code == 2);
  const fs::path dir = scratch("usage");
  CHECK(run("run " + write(dir / "bad.json", "{\"mdp\": ")).code == 2);
  CHECK(run("validate " + write(dir / "unknown.json", R"({"mdp": {"generator": {"num_states": 2, "num_actions": 2, "gamma": 0.5}}, "speed": 1})")).code == 2);
  CHECK(run("run " + write(dir / "missing_mdp.json", R"({"mdp": {"file": "/nonexistent/mdp.json"}})")).code == 2);
  CHECK(run("--help").code == 0);
}

TEST_CASE("validate on a good initialization exits 0") {
  const fs::path dir = scratch("validate");
  const auto o = run("validate " + write(dir / "good.json", kGoodConfig) + " --out-dir " + (dir / "out").string());
  CHECK(o.code == 0);
  CHECK(o.out.find("monotone: pass") != std::string::npos);
  CHECK(o.out.find("OK\n") != std::string::npos);
}

TEST_CASE("a violated check exits 1") {
  const fs::path dir = scratch("failing");
  // One sample per entry with a tiny claimed error level cannot meet the inexact linear bound.
  const std::string cfg = write(dir / "noisy.json", R"({
    "mdp": {"generator": {"seed": 2, "num_states": 5, "num_actions": 3, "gamma": 0.9}},
    "algorithm": "sample_td_pmd", "mirror": "neg_entropy",
    "schedule": {"kind": "adaptive", "c": 1}, "iterations": 30,
    "sampling": {"delta": 1e-9, "alpha": 0.1, "m_q": 1, "m_v": 1},
    "checks": ["linear"], "seeds": [1]
  })");
  const auto o = run("run " + cfg + " --out-dir " + (dir / "out").string());
  CHECK(o.code == 1);
  CHECK(o.out.find("linear: fail") != std::string::npos);
}

TEST_CASE("run is byte-for-byte deterministic and honours overrides") {
  const fs::path dir = scratch("determinism");
  const std::string cfg = write(dir / "cfg.json", kGoodConfig);
  CHECK(run("run " + cfg + " --out-dir " + (dir / "a").string()).code == 0);
  CHECK(run("run " + cfg + " --out-dir " + (dir / "b").string()).code == 0);
  const std::string a = tdpmd::read_file((dir / "a" / "run_seed1.csv").string());
  CHECK(a == tdpmd::read_file((dir / "b" / "run_seed1.csv").string()));
  CHECK(a.rfind("iter,v_err_inf,pol_err_inf,subopt_mass,eta,kappa_term,variant\n", 0) == 0);

  CHECK(run("run " + cfg + " --seed 77 --out-dir " + (dir / "c").string()).code == 0);
  CHECK(fs::exists(dir / "c" / "run_seed77.csv"));
  const json summary = json::parse(tdpmd::read_file((dir / "c" / "run_seed77.json").string()));
  CHECK(summary["seed"] == 77);
  CHECK(summary["config"]["seeds"] == json::array({77}));

  const std::string env = "TDPMD_OUTPUT_DIR=" + (dir / "env").string() + " ";
  const std::string cmd = env + TDPMD_CLI_PATH + " run " + cfg + " > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(tdpmd::read_file((dir / "env" / "run_seed1.csv").string()) == a);

  const std::string both = env + TDPMD_CLI_PATH + " run " + cfg + " --out-dir " + (dir / "flag").string() + " > /dev/null";
  CHECK(std::system(both.c_str()) == 0);
  CHECK(fs::exists(dir / "flag" / "run_seed1.csv"));
}

TEST_CASE("gen-mdp writes a loadable file") {
  const fs::path dir = scratch("gen");
  const auto path = (dir / "m.json").string();
  CHECK(run("gen-mdp --seed 5 --states 4 --actions 2 --gamma 0.8 -o " + path).code == 0);
  const tdpmd::Mdp m = tdpmd::load_mdp(path);
  CHECK(m == tdpmd::random_mdp(5, 4, 2, 0.8));
  const auto o = run("gen-mdp --seed 5 --states 4 --actions 2 --gamma 0.8");
  CHECK(tdpmd::parse_mdp(o.out) == m);
  CHECK(run("gen-mdp --states 0").code == 2);
  CHECK(run("gen-mdp --gamma 1.5").code == 2);
}

TEST_CASE("compare merges two variants") {
  const fs::path dir = scratch("compare");
  const std::string cfg = write(dir / "cfg.json", kGoodConfig);
  const auto o = run("compare " + cfg + " --algorithms td_pmd,pmd --out-dir " + (dir / "out").string());
  CHECK(o.code == 0);
  const std::string csv = tdpmd::read_file((dir / "out" / "run_compare_seed1.csv").string());
  CHECK(csv.find(",td_pmd/euclidean\n") != std::string::npos);
  CHECK(csv.find(",pmd/euclidean\n") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 41);
  CHECK(run("compare " + cfg + " --algorithms td_pmd").code == 2);
  CHECK(run("compare " + cfg + " --algorithms td_pmd,dqn").code == 2);
}
