#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(ROUGHMAL_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(f, l);) out.push_back(l);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<double> row(const std::string& l) {
  std::vector<double> v;
  std::stringstream ss(l);
  for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
  return v;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("roughmal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("nalpha --m 4"), 2);  // --alpha is required
  EXPECT_EQ(run("experiment --config /nonexistent.conf"), 2);
  EXPECT_EQ(run("experiment --config " ROUGHMAL_SOURCE_DIR "/config/defaults.conf --set p=5 --out " + dir.string()), 2);
  EXPECT_EQ(run("solve --preset nope --out " + dir.string()), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, NumericalFailureExitsThree) {
  EXPECT_EQ(run("solve --preset linear-scalar --y0 1e12 --m 4 --out " + dir.string()), 3);
}

TEST_F(Cli, NAlphaSchema) {
  ASSERT_EQ(run("nalpha --alpha 0.5 --hurst 0.5 --m 8 --samples 1000 --out " + dir.string()), 0);
  const auto l = lines(dir / "nalpha.csv");
  ASSERT_EQ(l.size(), 1002u);
  EXPECT_EQ(l[0].rfind("# roughmal ", 0), 0u);
  EXPECT_EQ(l[1], "seed,n_alpha,omega01");
  for (std::size_t k = 2; k < l.size(); ++k) {
    const auto v = row(l[k]);
    ASSERT_EQ(v.size(), 3u);
    EXPECT_LE(0.5 * v[1], v[2] * (1 + 1e-12));
  }
}

TEST_F(Cli, SolveMatchesClosedForm) {
  ASSERT_EQ(run("solve --preset linear-scalar --m 10 --seed 3 --out " + dir.string()), 0);
  const auto y = lines(dir / "solve.csv");
  const auto w = lines(dir / "driver.csv");
  ASSERT_EQ(y.size(), 1027u);  // header, columns, 2^10 + 1 nodes
  const double y1 = row(y.back())[1];
  const double w1 = row(w.back())[1];
  EXPECT_NEAR(y1, std::exp(w1), 1e-4 * std::exp(w1));
}

TEST_F(Cli, SampleLiftAndDerivative) {
  ASSERT_EQ(run("sample --m 5 --dim 2 --copy --out " + dir.string()), 0);
  EXPECT_EQ(lines(dir / "sample.csv")[1], "t,w_1,w_2,w_3,w_4");
  ASSERT_EQ(run("lift --m 4 --hurst 0.4 --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "lift.json"));
  ASSERT_EQ(run("derivative --preset linear-scalar --order 2 --m 6 --out " + dir.string()), 0);
  const auto d = lines(dir / "derivative.csv");
  EXPECT_EQ(d[1], "t,D1_y1,D2_y1");
  // linear field: D^2 y = y h^2 = D^1 y · h at t = 1 (h(1) = 1)
  const auto last = row(d.back());
  EXPECT_NEAR(last[2], last[1], 1e-8 * std::abs(last[1]));
}

TEST_F(Cli, ExperimentIsByteIdenticalAcrossRuns) {
  const std::string cfg = dir.string() + "/exp.conf";
  fs::create_directories(dir);
  std::ofstream(cfg) << "experiment = nalpha_tail\nm_list = 5\nsamples = 120\n";
  ASSERT_EQ(run("experiment --config " + cfg + " --seed 42 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run("experiment --config " + cfg + " --seed 42 --out " + (dir / "b").string()), 0);
  for (const char* f : {"nalpha_tail.csv", "nalpha_tail.json"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  ASSERT_EQ(run("experiment --config " + cfg + " --seed 43 --out " + (dir / "c").string()), 0);
  EXPECT_NE(slurp(dir / "a" / "nalpha_tail.csv"), slurp(dir / "c" / "nalpha_tail.csv"));
}
