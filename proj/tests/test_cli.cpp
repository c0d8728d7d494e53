#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#ifndef ORDICC_CLI_PATH
#error "ORDICC_CLI_PATH must point at the ordicc binary"
#endif

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

int counter = 0;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Run the binary with the given arguments, capturing both streams.
RunResult run_cli(const std::string& args) {
  const std::string tag = std::to_string(++counter);
  const std::string out_path = "/tmp/ordicc_cli_out_" + tag;
  const std::string err_path = "/tmp/ordicc_cli_err_" + tag;
  const std::string command = std::string(ORDICC_CLI_PATH) + " " + args +
                              " >" + out_path + " 2>" + err_path;
  const int status = std::system(command.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return result;
}

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = "/tmp/ordicc_cli_" + name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("--version prints the release") {
  const RunResult res = run_cli("--version");
  CHECK(res.exit_code == 0);
  CHECK(res.out == "0.1.0\n");
}

TEST_CASE("a missing subcommand is a usage error") {
  const RunResult res = run_cli("");
  CHECK(res.exit_code == 2);
}

TEST_CASE("generate is deterministic and fit consumes its output") {
  const std::string data = "/tmp/ordicc_cli_gen.csv";
  const RunResult gen = run_cli(
      "generate --seed 99 --n-subjects 20 --replicate 5 --out " + data);
  REQUIRE(gen.exit_code == 0);

  const RunResult again = run_cli(
      "generate --seed 99 --n-subjects 20 --replicate 5");
  CHECK(again.exit_code == 0);
  CHECK(again.out == slurp(data));

  const std::string content = slurp(data);
  CHECK(content.substr(0, content.find('\n')) ==
        "subject_id,ear_id,measurement,category,x1");

  const RunResult fit =
      run_cli("fit " + data + " --link probit --naive");
  REQUIRE(fit.exit_code == 0);
  const nlohmann::json report = nlohmann::json::parse(fit.out);
  CHECK(report.at("schema_version").get<int>() == 1);
  CHECK(report.at("tool").get<std::string>() == "ordicc");
  CHECK(report.at("command").get<std::string>() == "fit");
  REQUIRE(report.at("models").size() == 2);

  const auto& probit = report.at("models").at(0);
  CHECK(probit.at("model").get<std::string>() == "clmm_probit");
  REQUIRE(probit.at("fitted").get<bool>());
  CHECK(probit.at("converged").get<bool>());
  CHECK(probit.at("n_clusters").get<int>() == 20);
  CHECK(probit.at("n_obs").get<int>() == 100);
  CHECK(probit.at("n_ears").is_null());
  CHECK(probit.at("sigma_c_sq").is_null());
  CHECK(probit.at("coefficients").contains("x1"));
  // truth is 0.8; with 20 clusters the sampling sd is roughly 0.05
  const double icc = probit.at("icc").get<double>();
  CHECK(icc > 0.62);
  CHECK(icc < 0.95);
  REQUIRE(probit.at("ci").is_object());
  CHECK(probit.at("ci").at("lower").get<double>() < icc);
  CHECK(probit.at("ci").at("upper").get<double>() > icc);
  CHECK(probit.at("ci_method").get<std::string>() == "profile_transform");

  const auto& naive = report.at("models").at(1);
  CHECK(naive.at("model").get<std::string>() == "naive_lmm");
  CHECK(naive.at("sigma_eps_sq").is_number());
  CHECK(naive.at("icc").get<double>() < icc);

  std::remove(data.c_str());
}

TEST_CASE("text format renders a readable table") {
  const std::string data = "/tmp/ordicc_cli_text.csv";
  REQUIRE(run_cli("generate --seed 4 --n-subjects 12 --out " + data)
              .exit_code == 0);
  const RunResult res =
      run_cli("fit " + data + " --link probit --format text");
  CHECK(res.exit_code == 0);
  CHECK(res.out.find("ordicc 0.1.0") != std::string::npos);
  CHECK(res.out.find("clmm_probit") != std::string::npos);
  CHECK(res.out.find("icc") != std::string::npos);
  std::remove(data.c_str());
}

TEST_CASE("exit codes separate io failures from bad input") {
  const RunResult missing = run_cli("fit /tmp/no_such_file_ordicc.csv");
  CHECK(missing.exit_code == 3);
  CHECK(missing.err.find("cannot open") != std::string::npos);

  const std::string bad = write_temp(
      "bad.csv", "subject_id,ear_id,measurement,category\ns1,,0.5,zero\n");
  const RunResult parse = run_cli("fit " + bad);
  CHECK(parse.exit_code == 2);
  CHECK(parse.err.find(":2:") != std::string::npos);  // file:line diagnostic
  std::remove(bad.c_str());

  const RunResult badflag = run_cli("fit x.csv --link cauchy");
  CHECK(badflag.exit_code == 2);
}

TEST_CASE("nested analysis needs ear ids and excludes --ear") {
  const std::string single = write_temp(
      "single.csv",
      "subject_id,ear_id,measurement,category\n"
      "s1,,0.1,1\ns1,,2.3,2\ns2,,0.2,1\ns2,,2.9,2\n");

  const RunResult nested = run_cli("fit " + single + " --nested");
  CHECK(nested.exit_code == 2);
  CHECK(nested.err.find("ear_id") != std::string::npos);

  const RunResult both = run_cli("fit " + single + " --nested --ear left");
  CHECK(both.exit_code == 2);
  std::remove(single.c_str());
}

TEST_CASE("simulate writes the frozen summary header") {
  const RunResult res = run_cli(
      "simulate --n-subjects 6 --n-obs 2 --replicates 2 --seed 5 "
      "--threads 1");
  REQUIRE(res.exit_code == 0);
  std::istringstream lines(res.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "design,error_family,estimator,bias,sd,coverage,n_ci_unavailable,"
        "n_nonconverged,seed");
  int n_lines = 0;
  for (std::string line; std::getline(lines, line);) {
    ++n_lines;
    CHECK(line.rfind("single,normal,", 0) == 0);
    CHECK(line.substr(line.rfind(',') + 1) == "5");
  }
  CHECK(n_lines == 3);
}

TEST_CASE("config files feed simulate and flags take precedence") {
  const std::string config = write_temp("config.json", R"({
    "design": "single",
    "n_subjects": 6,
    "n_obs": 2,
    "n_replicates": 2,
    "seed": 11,
    "lattice": {"anchor": 0.0, "spacing": 2.0}
  })");

  const RunResult from_file = run_cli("simulate --config " + config +
                                      " --threads 1");
  REQUIRE(from_file.exit_code == 0);
  CHECK(from_file.out.find(",11\n") != std::string::npos);

  // the command-line seed wins over the file's
  const RunResult overridden = run_cli("simulate --config " + config +
                                       " --seed 12 --threads 1");
  REQUIRE(overridden.exit_code == 0);
  CHECK(overridden.out.find(",12\n") != std::string::npos);
  CHECK(overridden.out.find(",11\n") == std::string::npos);

  const std::string unknown = write_temp("unknown.json",
                                         R"({"n_subjcts": 6})");
  const RunResult bad = run_cli("simulate --config " + unknown);
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("unknown field") != std::string::npos);
  CHECK(bad.err.find("n_subjcts") != std::string::npos);

  const RunResult gone = run_cli("simulate --config /tmp/absent_ordicc.json");
  CHECK(gone.exit_code == 3);

  std::remove(config.c_str());
  std::remove(unknown.c_str());
}

TEST_CASE("generate honours the lattice flags") {
  // a huge spacing keeps every draw in two cells around the anchor
  const RunResult res = run_cli(
      "generate --seed 3 --n-subjects 8 --anchor 0 --spacing 1000");
  REQUIRE(res.exit_code == 0);
  std::istringstream lines(res.out);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    const auto last_comma = line.rfind(',');
    const auto prev_comma = line.rfind(',', last_comma - 1);
    const std::string category =
        line.substr(prev_comma + 1, last_comma - prev_comma - 1);
    CHECK((category == "1" || category == "2"));
  }
}

}  // TEST_SUITE
