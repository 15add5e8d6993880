#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const fs::path tmp = fs::temp_directory_path() / "sacomp_cli_out.txt";
  const std::string cmd =
      std::string(SACOMP_CLI_BIN) + " " + args + " > " + tmp.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(status);
  std::ifstream in(tmp);
  std::stringstream buf;
  buf << in.rdbuf();
  result.out = buf.str();
  return result;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("check passes on a fresh build and fails under fault injection") {
  const RunResult ok = run_cli("check");
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("secagg-exactness") != std::string::npos);
  CHECK(ok.out.find("all checks passed") != std::string::npos);

  const RunResult bad = run_cli("check --inject-fault");
  CHECK(bad.exit_code == 1);
  const auto at = bad.out.find("secagg-exactness");
  REQUIRE(at != std::string::npos);
  const auto line_end = bad.out.find('\n', at);
  CHECK(bad.out.substr(at, line_end - at).find("FAIL") != std::string::npos);
}

TEST_CASE("run emits a deterministic CSV with a unit-factor baseline") {
  const fs::path cfg = fs::path(SACOMP_CONFIG_DIR) / "sq_sweep.json";
  REQUIRE(fs::exists(cfg));
  const fs::path out_a = fs::temp_directory_path() / "sacomp_run_a";
  const fs::path out_b = fs::temp_directory_path() / "sacomp_run_b";

  const RunResult a = run_cli("run --config " + cfg.string() + " --out " +
                              out_a.string() + " --seed 7");
  REQUIRE(a.exit_code == 0);
  const std::string csv = slurp(out_a / "metrics.csv");
  CHECK(csv.rfind("scheme,params,", 0) == 0);
  CHECK(csv.find("baseline") != std::string::npos);
  CHECK(csv.find(",1.0000,") != std::string::npos);  // baseline factor
  CHECK(fs::exists(out_a / "trace.json"));

  const RunResult b = run_cli("run --config " + cfg.string() + " --out " +
                              out_b.string() + " --seed 7");
  REQUIRE(b.exit_code == 0);
  CHECK(slurp(out_b / "metrics.csv") == csv);
  CHECK(slurp(out_b / "trace.json") == slurp(out_a / "trace.json"));

  // A different seed override changes the result.
  const fs::path out_c = fs::temp_directory_path() / "sacomp_run_c";
  const RunResult c = run_cli("run --config " + cfg.string() + " --out " +
                              out_c.string() + " --seed 8");
  REQUIRE(c.exit_code == 0);
  CHECK(slurp(out_c / "metrics.csv") != csv);
}

TEST_CASE("missing or invalid configs exit with code 2") {
  const RunResult missing = run_cli("run --config /nonexistent.json");
  CHECK(missing.exit_code == 2);

  const fs::path bad = fs::temp_directory_path() / "sacomp_bad.json";
  std::ofstream(bad) << "{\"schemes\": []}";
  const RunResult invalid = run_cli("run --config " + bad.string());
  CHECK(invalid.exit_code == 2);
}

TEST_CASE("bench reports the pinned bits-per-weight accounting") {
  const RunResult r = run_cli("bench");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("sq,\"b=8,p=8\",8.0000") != std::string::npos);
  CHECK(r.out.find("prune,\"sparsity=0.9,p=32\",3.2000") != std::string::npos);
  CHECK(r.out.find("pq,\"k=32,d=8\",0.6250") != std::string::npos);
}
