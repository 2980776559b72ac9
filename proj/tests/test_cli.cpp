// Exercises the installed command line surface through a real subprocess:
// exit codes, artifact files, and byte-identical reruns under a fixed seed.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "support/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(RSLQ_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("rslq_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("missing problem file exits with code 2") {
  CHECK(run_cli("solve-follower /nonexistent/missing.prob") == 2);
}

TEST_CASE("malformed problem file exits with code 2") {
  fs::path dir = fresh_dir("bad");
  std::ofstream(dir / "bad.prob") << "[meta]\nT = oops\n";
  CHECK(run_cli("solve-follower " + (dir / "bad.prob").string()) == 2);
}

TEST_CASE("certify passes on the reduced example") {
  fs::path dir = fresh_dir("certify");
  const int code = run_cli("certify " + testsupport::data_path("example2.prob") +
                           " --steps 50 -o " + dir.string());
  CHECK(code == 0);
  const std::string report = slurp(dir / "verify_report.txt");
  CHECK(report.find("PASS certificate regime 1") != std::string::npos);
  CHECK(report.find("PASS certificate regime 2") != std::string::npos);
}

TEST_CASE("equilibrium writes the expected artifacts and the known curve") {
  fs::path dir = fresh_dir("equilibrium");
  const int code = run_cli("equilibrium " +
                           testsupport::data_path("example1.prob") +
                           " --steps 200 --seed 7 -o " + dir.string());
  CHECK(code == 0);
  CHECK(fs::exists(dir / "riccati_P.csv"));
  CHECK(fs::exists(dir / "riccati_Sigma.csv"));
  CHECK(fs::exists(dir / "phi_table.csv"));
  CHECK(fs::exists(dir / "values.csv"));

  // Spot-check the Sigma curve against (s-1)/(s-2) at s = 0: 0.5.
  std::ifstream in(dir / "riccati_Sigma.csv");
  std::string line;
  std::getline(in, line);  // metadata comment
  std::getline(in, line);  // header
  std::getline(in, line);  // first node, regime 1
  const auto last_comma = line.rfind(',');
  const double sigma0 = std::stod(line.substr(last_comma + 1));
  CHECK(std::abs(sigma0 - 0.5) < 1e-8);

  // values.csv carries one row per regime.
  std::ifstream vals(dir / "values.csv");
  int rows = 0;
  while (std::getline(vals, line))
    if (!line.empty() && line.find("regime") == std::string::npos) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("identical configuration and seed produce byte-identical output") {
  fs::path a = fresh_dir("repeat_a");
  fs::path b = fresh_dir("repeat_b");
  const std::string args = "verify " + testsupport::data_path("example1.prob") +
                           " --steps 100 --paths 400 --seed 11 "
                           "--directions 2 --probes 4";
  CHECK(run_cli(args + " -o " + a.string()) == 0);
  CHECK(run_cli(args + " -o " + b.string()) == 0);
  for (const char* name : {"riccati_P.csv", "riccati_Sigma.csv",
                           "phi_table.csv", "values.csv",
                           "verify_report.txt"})
    CHECK(slurp(a / name) == slurp(b / name));
}

TEST_CASE("lambda study writes its table") {
  fs::path dir = fresh_dir("lambda");
  const int code = run_cli("lambda-study " +
                           testsupport::data_path("example2.prob") +
                           " --steps 100 --lambdas 10 100 -o " + dir.string());
  CHECK(code == 0);
  const std::string csv = slurp(dir / "lambda_study.csv");
  CHECK(csv.find("lambda,steps,solved") != std::string::npos);
}

TEST_CASE("verify on the reduced example checks stationarity") {
  fs::path dir = fresh_dir("verify2");
  const int code = run_cli("verify " + testsupport::data_path("example2.prob") +
                           " --steps 100 --paths 400 -o " + dir.string());
  CHECK(code == 0);
  const std::string report = slurp(dir / "verify_report.txt");
  CHECK(report.find("PASS stationarity residual") != std::string::npos);
}
