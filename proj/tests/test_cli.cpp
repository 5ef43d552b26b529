#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eosmute/cli.hpp"

using namespace eosmute;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("eosmute_cli_" + name);
  fs::create_directories(dir);
  return dir;
}

struct CliResult {
  int exit_code;
  std::string out;
};

CliResult run_cli(const std::vector<std::string>& argv) {
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  int code = -1;
  try {
    code = cli::run(argv);
  } catch (...) {
    std::cout.rdbuf(old);
    throw;
  }
  std::cout.rdbuf(old);
  return {code, captured.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// One tiny corpus + cache for the whole test binary.
const fs::path& workspace() {
  static const fs::path dir = [] {
    const fs::path d = temp_dir("workspace");
    fs::remove_all(d);
    fs::create_directories(d / "cache");
    setenv("EOSMUTE_CACHE", (d / "cache").c_str(), 1);
    const CliResult r = run_cli({"make-toy-data", "--out", (d / "corpus").string(),
                                 "--train", "6", "--val", "3", "--test", "4"});
    REQUIRE(r.exit_code == 0);
    return d;
  }();
  return dir;
}

std::string manifest_path() { return (workspace() / "corpus" / "manifest.jsonl").string(); }

}  // namespace

TEST_CASE("unknown subcommands and flags exit with a usage error") {
  CHECK(run_cli({"frobnicate"}).exit_code == 2);
  CHECK(run_cli({}).exit_code == 2);
  CHECK(run_cli({"sweep", "--no-such-flag"}).exit_code == 2);
}

TEST_CASE("make-toy-data generates a loadable corpus") {
  const CliResult r = run_cli({"make-toy-data", "--out",
                               (workspace() / "corpus2").string(), "--train", "2", "--val",
                               "1", "--test", "1"});
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("manifest=") != std::string::npos);
  const auto manifest =
      harness::load_manifest(workspace() / "corpus2" / "manifest.jsonl");
  CHECK(manifest.entries.size() == 4);
}

TEST_CASE("runtime failures exit 1 with a single-line diagnostic") {
  const CliResult r = run_cli({"train-attack", "--manifest", "/does/not/exist.jsonl"});
  CHECK(r.exit_code == 1);
}

TEST_CASE("train-attack writes a snippet whose sidecar echoes the flags") {
  const fs::path snippet = workspace() / "snippet.f32";
  const CliResult r = run_cli({"train-attack",
                               "--manifest", manifest_path(),
                               "--model", "toy:42",
                               "--objective", "complete",
                               "--epsilon", "0.02",
                               "--length", "0.64",
                               "--position", "0",
                               "--iterations", "1",
                               "--seed", "3",
                               "--out", snippet.string()});
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("snippet=") != std::string::npos);
  CHECK(r.out.find("iterations=1") != std::string::npos);

  REQUIRE(fs::exists(snippet));
  REQUIRE(fs::exists(snippet.string() + ".json"));
  std::ifstream side(snippet.string() + ".json");
  const nlohmann::json j = nlohmann::json::parse(side);
  CHECK(j.at("epsilon") == 0.02);
  CHECK(j.at("length_seconds") == 0.64);
  CHECK(j.at("position_seconds") == 0.0);
  CHECK(j.at("objective") == "complete");
  CHECK(j.at("model") == "toy:42");
  CHECK(j.at("seed") == 3);
  CHECK(j.at("losses").size() == 1);

  const attack::AttackSnippet a = attack::load_snippet(snippet);
  CHECK(a.linf_norm() <= 0.02);
  CHECK(a.samples.size() == 10240);
}

TEST_CASE("eval-attack prints one summary line per metric and writes JSON") {
  const fs::path snippet = workspace() / "snippet.f32";
  REQUIRE(fs::exists(snippet));  // produced by the train-attack test
  const fs::path report = workspace() / "eval.json";
  const CliResult r = run_cli({"eval-attack",
                               "--manifest", manifest_path(),
                               "--model", "toy:42",
                               "--snippet", snippet.string(),
                               "--out", report.string()});
  REQUIRE(r.exit_code == 0);
  for (const char* key : {"attacked empty_rate=", "attacked asl=", "attacked bleu=",
                          "attacked wer=", "clean empty_rate=", "clean wer="}) {
    CHECK(r.out.find(key) != std::string::npos);
  }
  REQUIRE(fs::exists(report));
  std::ifstream in(report);
  const nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j.contains("attacked"));
  CHECK(j.contains("clean"));
  CHECK(j.contains("alpha"));
}

TEST_CASE("sweep emits a CSV with one row per model and value") {
  const fs::path out = workspace() / "sweep.csv";
  const std::vector<std::string> argv = {"sweep",
                                         "--manifest", manifest_path(),
                                         "--param", "epsilon",
                                         "--values", "0.01,0.02",
                                         "--models", "toy:42",
                                         "--iterations", "1",
                                         "--length", "0.16",
                                         "--out", out.string()};
  const CliResult r = run_cli(argv);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("rows=2") != std::string::npos);

  const harness::SweepReport report = harness::parse_sweep_csv(slurp(out));
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].model == "toy:42");
  CHECK(report.rows[0].value == 0.01);
  CHECK(report.rows[1].value == 0.02);
  for (const auto& row : report.rows) CHECK(row.error.empty());

  // Identical argv reproduce the artifact bitwise.
  const std::string first = slurp(out);
  REQUIRE(run_cli(argv).exit_code == 0);
  CHECK(slurp(out) == first);
}

TEST_CASE("transfer emits the matrix with a no-attack row") {
  const fs::path out = workspace() / "transfer.json";
  const CliResult r = run_cli({"transfer",
                               "--manifest", manifest_path(),
                               "--surrogates", "toy:42",
                               "--victims", "toy:42",
                               "--iterations", "1",
                               "--length", "0.16",
                               "--format", "json",
                               "--out", out.string()});
  REQUIRE(r.exit_code == 0);
  std::ifstream in(out);
  const nlohmann::json j = nlohmann::json::parse(in);
  REQUIRE(j.at("cells").size() == 2);
  CHECK(j.at("cells")[0].at("surrogate") == "none");
  CHECK(j.at("cells")[1].at("surrogate") == "toy:42");
}

TEST_CASE("defend with the identity chain reports 100 percent retained power") {
  const fs::path snippet = workspace() / "snippet.f32";
  REQUIRE(fs::exists(snippet));
  const fs::path out = workspace() / "defend.csv";
  const CliResult r = run_cli({"defend",
                               "--manifest", manifest_path(),
                               "--model", "toy:42",
                               "--snippet", snippet.string(),
                               "--chain", "identity",
                               "--chain", "mu_decomp_comp",
                               "--chain", "butterworth:4000",
                               "--out", out.string()});
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("defence=none") != std::string::npos);
  CHECK(r.out.find("defence=mu_decomp_comp") != std::string::npos);
  CHECK(r.out.find("defence=butterworth:4000") != std::string::npos);

  // Identity line: every metric is either exactly 100 or undefined.
  std::istringstream lines(r.out);
  std::string line;
  bool saw_identity = false;
  while (std::getline(lines, line)) {
    if (line.rfind("defence=none", 0) != 0) continue;
    saw_identity = true;
    std::istringstream fields(line);
    std::string field;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) continue;
      const std::string value = field.substr(eq + 1);
      if (field.rfind("defence", 0) == 0 || value == "undefined") continue;
      CHECK(std::stod(value) == 100.0);
    }
  }
  CHECK(saw_identity);
  CHECK(fs::exists(out));
}
