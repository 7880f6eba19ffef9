#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "carbonedge/csv.hpp"
#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = carbonedge::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "carbonedge_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path make_fixtures(const std::string& name, const std::string& dcs = "6") {
  const fs::path dir = scratch(name);
  const auto r = cli({"--out-dir", dir.string(), "fixtures", "--dcs", dcs, "--zones", "3", "--hours", "72"});
  REQUIRE(r.code == 0);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void shrink_horizon(const fs::path& scenario, int hours) {
  auto doc = nlohmann::json::parse(slurp(scenario));
  doc["end"] = hours == 12 ? "2023-01-01T12:00:00Z" : "2023-01-01T06:00:00Z";
  doc["policy"]["solver"]["time_limit_s"] = 0.5;
  std::ofstream(scenario) << doc.dump(2);
}

}  // namespace

TEST_CASE("cli: validate accepts clean fixtures") {
  const fs::path dir = make_fixtures("validate_ok");
  const auto r = cli({"--data-dir", dir.string(), "validate"});
  CHECK(r.code == 0);
  CHECK(r.out.find("clean") != std::string::npos);
}

TEST_CASE("cli: validate names the zone and hour of a trace gap") {
  const fs::path dir = make_fixtures("validate_gap");
  std::istringstream in(slurp(dir / "carbon.csv"));
  std::ofstream out(dir / "carbon.csv", std::ios::trunc);
  std::string line, dropped;
  for (int k = 0; std::getline(in, line); ++k) {
    if (k == 4) {
      dropped = line;
      continue;
    }
    out << line << '\n';
  }
  out.close();
  const auto fields = carbonedge::csv::split_row(dropped);
  const auto r = cli({"--data-dir", dir.string(), "validate"});
  CHECK(r.code == 2);
  CHECK(r.err.find(fields[0]) != std::string::npos);
  CHECK(r.err.find(fields[1]) != std::string::npos);
  CHECK(cli({"--data-dir", dir.string(), "validate", "--interpolate-gaps"}).code == 0);
}

TEST_CASE("cli: usage and configuration errors exit with 1") {
  CHECK(cli({"run", "--bogus"}).code == 1);
  CHECK(cli({}).code == 1);
  CHECK(cli({"--help"}).code == 0);
  const fs::path dir = make_fixtures("bad_config");
  std::ofstream(dir / "scenario.json") << "{\"start\": ";
  CHECK(cli({"--out-dir", (dir / "out").string(), "run", (dir / "scenario.json").string()}).code == 1);
  std::ofstream(dir / "scenario.json") << "{\"unexpected\": 1}";
  CHECK(cli({"--out-dir", (dir / "out").string(), "run", (dir / "scenario.json").string()}).code == 1);
}

TEST_CASE("cli: missing input files exit with 2") {
  const fs::path dir = scratch("missing");
  CHECK(cli({"--data-dir", dir.string(), "validate"}).code == 2);
}

TEST_CASE("cli: two runs of the same scenario produce identical artifacts") {
  const fs::path dir = make_fixtures("determinism");
  shrink_horizon(dir / "scenario.json", 12);
  const std::string scenario = (dir / "scenario.json").string();
  const auto a = cli({"--out-dir", (dir / "a").string(), "run", scenario});
  const auto b = cli({"--out-dir", (dir / "b").string(), "run", scenario});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
    ++files;
  }
  CHECK(files == 6);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["command"] == "run");
  CHECK(manifest["data"].contains("carbon"));
}

TEST_CASE("cli: a policy override lands in the manifest") {
  const fs::path dir = make_fixtures("override");
  shrink_horizon(dir / "scenario.json", 6);
  const auto r = cli({"--out-dir", (dir / "o").string(), "run", (dir / "scenario.json").string(), "--policy",
                      "latency_aware"});
  REQUIRE(r.code == 0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "o" / "manifest.json"));
  CHECK(manifest["config"]["policy"]["kind"] == "latency_aware");
  const auto report = nlohmann::json::parse(slurp(dir / "o" / "report.json"));
  CHECK(report["policy"] == "latency_aware");
}

TEST_CASE("cli: compare and sweep write their tables") {
  const fs::path dir = make_fixtures("compare");
  shrink_horizon(dir / "scenario.json", 6);
  const std::string scenario = (dir / "scenario.json").string();
  REQUIRE(cli({"--out-dir", (dir / "c").string(), "--jobs", "2", "compare", scenario}).code == 0);
  const auto cmp = nlohmann::json::parse(slurp(dir / "c" / "comparison.json"));
  CHECK(cmp["dominance_violations"] == 0);
  REQUIRE(cli({"--out-dir", (dir / "s").string(), "sweep", scenario, "--dimension", "latency_limit", "--values",
               "10,40"})
              .code == 0);
  CHECK(fs::exists(dir / "s" / "sweep.csv"));
  CHECK(cli({"--out-dir", (dir / "s").string(), "sweep", scenario, "--dimension", "colour", "--values", "1"}).code ==
        1);
}

TEST_CASE("cli: analyze writes one non-decreasing CDF per radius") {
  const fs::path dir = make_fixtures("analyze", "12");
  const fs::path out = dir / "out";
  REQUIRE(cli({"--data-dir", dir.string(), "--out-dir", out.string(), "analyze"}).code == 0);
  for (const char* r : {"200", "500", "1000"}) {
    carbonedge::csv::Reader reader(out / ("cdf_" + std::string(r) + "km.csv"));
    std::vector<std::string> row;
    double prev_x = -1, prev_f = 0, last_f = 0;
    while (reader.next(row)) {
      const double x = *carbonedge::csv::parse_number(row[1]);
      const double f = *carbonedge::csv::parse_number(row[2]);
      CHECK(x >= prev_x);
      CHECK(f >= prev_f);
      prev_x = x;
      prev_f = last_f = f;
    }
    CHECK(last_f == 1.0);
    CHECK(fs::exists(out / ("latency_" + std::string(r) + "km.csv")));
  }
}

TEST_CASE("cli: a single data center gives a degenerate CDF at zero") {
  const fs::path dir = make_fixtures("single", "1");
  const fs::path out = dir / "out";
  REQUIRE(cli({"--data-dir", dir.string(), "--out-dir", out.string(), "analyze", "--radii", "500"}).code == 0);
  carbonedge::csv::Reader reader(out / "cdf_500km.csv");
  std::vector<std::string> row;
  REQUIRE(reader.next(row));
  CHECK(*carbonedge::csv::parse_number(row[1]) == 0.0);
  CHECK(*carbonedge::csv::parse_number(row[2]) == 1.0);
  CHECK(!reader.next(row));
}
