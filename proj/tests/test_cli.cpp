#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef GEOFLOW_CLI
#error "GEOFLOW_CLI must name the geoflow executable"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(GEOFLOW_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("geoflow_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, Nil3RicciOracleCsv) {
  const auto r = run("nil3 --A0 1 --B0 1 --C0 1 --coupling zero --t-end 1e4 --out-csv " + path("r.csv") +
                     " --out-json " + path("r.json"));
  ASSERT_EQ(r.code, 0);
  std::istringstream csv(slurp(path("r.csv")));
  std::string line, last;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,A,B,C,Phi");
  while (std::getline(csv, line)) last = line;
  const double A = std::stod(last.substr(last.find(',') + 1));
  EXPECT_NEAR(A / std::cbrt(1.0 + 3e4), 1.0, 1e-6);
  const auto j = json::parse(slurp(path("r.json")));
  EXPECT_EQ(j["config"]["coupling"], "zero");
  EXPECT_TRUE(j["assertions"]["bounds"].get<bool>());
  EXPECT_LE(j["phi_drift"].get<double>(), 1e-8);
}

TEST_F(Cli, Nil3ConstantCouplingIsLinear) {
  const auto r = run("nil3 --coupling const:0.5 --a 1 --t-end 1e8");
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j["fits"]["exponent_A"].get<double>(), 1.0, 0.01);
  const auto& c = j["constant_regime"];
  EXPECT_LE(c["deviation_from_consistent"].get<double>(), 0.05);
  EXPECT_GE(c["deviation_from_printed"].get<double>(), 0.40);
}

TEST_F(Cli, Nil3PowerCouplingExponents) {
  const auto r = run("nil3 --coupling power:1,1 --a 1 --t-end 1e8");
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j["fits"]["exponent_A"].get<double>(), 1.0 / 3.0, 0.02);
  EXPECT_NEAR(j["fits"]["exponent_B"].get<double>(), 1.0 / 3.0, 0.02);
  EXPECT_NEAR(j["fits"]["exponent_C"].get<double>(), -1.0 / 3.0, 0.02);
}

TEST_F(Cli, Nil3Deterministic) {
  for (const char* tag : {"a", "b"}) {
    ASSERT_EQ(run(std::string("nil3 --coupling power:2,1.5 --a 0.7 --t-end 1e5 --out-csv ") + path(std::string(tag) + ".csv") +
                  " --out-json " + path(std::string(tag) + ".json"))
                  .code,
              0);
  }
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
}

TEST_F(Cli, Nil3InputErrors) {
  EXPECT_EQ(run("nil3 --coupling linear:1").code, 1);
  EXPECT_EQ(run("nil3 --A0 -1").code, 1);
  EXPECT_EQ(run("nil3 --t-end abc").code, 1);
  EXPECT_EQ(run("nil3 --unknown").code, 1);
  EXPECT_EQ(run("").code, 1);
}

TEST_F(Cli, RrfsStationaryEnergyIsZero) {
  const auto r = run("rrfs --init flat --n 2 --size 16 --t-end 0.5 --series-points 5");
  ASSERT_EQ(r.code, 0);
  for (const auto& e : json::parse(r.out)["series"]["energy"]) EXPECT_EQ(e.get<double>(), 0.0);
}

TEST_F(Cli, RrfsCircleEnergyDecreasesAndSnapshotsWritten) {
  const auto r = run("rrfs --init fiber --t-end 1 --snapshots 0,0.5,1 --out-dir " + path("out"));
  ASSERT_EQ(r.code, 0);
  std::istringstream csv(slurp(path("out/series.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,energy,volume,s");
  double prev = INFINITY;
  int rows = 0;
  while (std::getline(csv, line)) {
    const auto first = line.find(',');
    const double e = std::stod(line.substr(first + 1));
    EXPECT_LT(e, prev);
    prev = e;
    ++rows;
  }
  EXPECT_EQ(rows, 21);
  const auto j = json::parse(slurp(path("out/summary.json")));
  ASSERT_EQ(j["snapshots"].size(), 3u);
  for (const auto& s : j["snapshots"]) EXPECT_TRUE(fs::exists(path("out/" + s["file"].get<std::string>())));
}

TEST_F(Cli, RrfsVolumeModeKeepsVolume) {
  const auto r = run("rrfs --rescale volume --t-end 1 --out-dir " + path("vol"));
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(slurp(path("vol/summary.json")));
  const double v0 = j["series"]["volume"][0].get<double>();
  for (const auto& v : j["series"]["volume"]) EXPECT_NEAR(v.get<double>() / v0, 1.0, 1e-6);
}

TEST_F(Cli, RrfsInputErrors) {
  EXPECT_EQ(run("rrfs --n 3").code, 1);
  EXPECT_EQ(run("rrfs --size 4").code, 1);
  EXPECT_EQ(run("rrfs --rescale sometimes").code, 1);
  EXPECT_EQ(run("rrfs --t-end 1 --snapshots 2").code, 1);
}

TEST_F(Cli, VerifyPassesAndDetectsCorruption) {
  EXPECT_EQ(run("verify").code, 0);
  EXPECT_EQ(run("verify --check blowdown --s 4").code, 0);
  EXPECT_EQ(run("verify --check tension --corrupt-christoffel").code, 2);
}

TEST_F(Cli, FitReadsCsv) {
  ASSERT_EQ(run("nil3 --coupling zero --t-end 1e6 --out-csv " + path("f.csv") + " --out-json " + path("f.json")).code,
            0);
  const auto r = run("fit --csv " + path("f.csv") + " --component A --mode power");
  ASSERT_EQ(r.code, 0);
  EXPECT_NEAR(json::parse(r.out)["fit"]["exponent"].get<double>(), 1.0 / 3.0, 0.01);
  EXPECT_EQ(run("fit --csv " + path("missing.csv")).code, 1);
}

TEST_F(Cli, SweepRunsConcurrently) {
  {
    std::ofstream os(path("sweep.json"));
    os << R"({"runs": [{"coupling": "zero", "t_end": 1e4, "out_csv": ")" << path("s0.csv")
       << R"("}, {"coupling": "const:0.5", "a": 1, "t_end": 1e6}, {"coupling": "power:1,2", "a": 1, "t_end": 1e6}]})";
  }
  const auto r = run("sweep --threads 3 --config " + path("sweep.json"));
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  ASSERT_EQ(j["runs"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(j["runs"][i]["index"].get<std::size_t>(), i);
  EXPECT_TRUE(fs::exists(path("s0.csv")));
  ASSERT_EQ(run("nil3 --coupling zero --t-end 1e4 --out-csv " + path("single.csv") + " --out-json " + path("x.json"))
                .code,
            0);
  EXPECT_EQ(slurp(path("s0.csv")), slurp(path("single.csv")));
}
