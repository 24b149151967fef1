#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "roughmal/config.hpp"
#include "roughmal/errors.hpp"
#include "roughmal/experiments.hpp"

using namespace roughmal;

namespace {

ExperimentConfig small(const std::string& text) {
  ExperimentConfig c = parse_config(text);
  finalize_config(c);
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, DefaultsFileMatchesBuiltInDefaults) {
  ExperimentConfig from_file = load_config(std::string(ROUGHMAL_SOURCE_DIR) + "/config/defaults.conf");
  ExperimentConfig built_in;
  finalize_config(from_file);
  finalize_config(built_in);
  EXPECT_EQ(canonical_text(from_file), canonical_text(built_in));
  EXPECT_EQ(from_file.p, 2.5);
  EXPECT_EQ(from_file.q, 1.0);
}

TEST(Config, ParsesListsCommentsAndBroadcast) {
  const auto c = small("# comment\nexperiment = wong_zakai\npreset = smooth-2d  # trailing\ny0 = 0.25\n"
                       "m_list = 3, 5,7\nalpha_list = 0.5\nseed = 7\nmodel = fbm\nhurst = 0.4\n");
  EXPECT_EQ(c.experiment, "wong_zakai");
  EXPECT_EQ(c.y0, (std::vector<double>{0.25, 0.25}));
  EXPECT_EQ(c.m_list, (std::vector<int>{3, 5, 7}));
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.model.kind, CovarianceKind::FractionalBrownian);
  EXPECT_GT(c.p, 2.5);
  EXPECT_LT(c.p, 4.0);
}

TEST(Config, RejectsInvalidInput) {
  EXPECT_THROW(small("colour = red\n"), ConfigError);
  EXPECT_THROW(small("samples = lots\n"), ConfigError);
  EXPECT_THROW(small("samples = 99\n"), ConfigError);
  EXPECT_THROW(small("p = 2.0\n"), ConfigError);
  EXPECT_THROW(small("p = 4.0\n"), ConfigError);
  EXPECT_THROW(small("model = fbm\nhurst = 0.35\np = 2.5\n"), ConfigError);  // 2ρ ≈ 2.86
  EXPECT_THROW(small("model = fbm\nhurst = 0.2\n"), ConfigError);
  EXPECT_THROW(small("m_list = 5,4\n"), ConfigError);
  EXPECT_THROW(small("preset = nope\n"), ConfigError);
  EXPECT_THROW(small("preset = smooth-2d\ny0 = 1,2,3\n"), ConfigError);
  EXPECT_THROW(small("experiment = everything\n"), ConfigError);
  EXPECT_THROW(small("just a line\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/roughmal.conf"), ConfigError);
}

TEST(Config, HashTracksContent) {
  const auto a = small("seed = 1\n"), b = small("seed = 1\n"), c = small("seed = 2\n");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Statistics, FitLineAndMean) {
  const std::vector<double> x = {0, 1, 2, 3}, y = {1, 3, 5, 7};
  const LinearFit f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
  const std::vector<double> w = {1, 1, 1, 100}, yn = {1, 3.5, 4.5, 7};
  EXPECT_GT(fit_line(x, yn, w).r2, 0.9);
  EXPECT_THROW(fit_line(std::span(x).first(2), std::span(y).first(2)), ArgumentError);
  const std::vector<double> xs = {1, 2, 3, 4};
  const MeanEstimate e = estimate_mean(xs);
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  EXPECT_DOUBLE_EQ(e.variance, 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(e.std_error, std::sqrt(5.0 / 12.0));
}

// E[exp(r |Z|)] by quadrature
TEST(Statistics, ReflectionMomentAgainstQuadrature) {
  for (double r : {1.0, 2.0, 4.0}) {
    const int n = 200000;
    const double top = 12.0 + r, dx = top / n;
    double s = 0.0;
    for (int k = 0; k < n; ++k) {
      const double x = (k + 0.5) * dx;
      s += 2.0 * std::exp(-0.5 * x * x + r * x) / std::sqrt(2.0 * M_PI) * dx;
    }
    EXPECT_NEAR(reflection_moment(r), s, 1e-9 * s);
  }
  EXPECT_NEAR(reflection_moment(2.0), 14.4419, 1e-4);
}

TEST(ParallelFor, CoversAllIndicesAndPropagates) {
  std::vector<int> hit(1000, 0);
  parallel_for(hit.size(), [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(50, [](std::size_t i) {
                 if (i == 17) throw NumericalError("boom");
               }),
               NumericalError);
}

TEST(JacobianMoments, ConstantFieldIsExactlyOne) {
  const auto c = small("preset = constant\nm_list = 3,4,5\nsamples = 100\nr_list = 1,2,4\n");
  const ResultRecord r = run_jacobian_moments(c);
  for (int m : {3, 4, 5})
    for (int q : {1, 2, 4}) {
      EXPECT_EQ(r.stat("J_moment_r" + std::to_string(q), m).value, 1.0);
      EXPECT_EQ(r.stat("K_moment_r" + std::to_string(q), m).value, 1.0);
    }
  EXPECT_EQ(r.stat("J_uniformity_r2").value, 1.0);
  EXPECT_TRUE(r.check("uniformity_r2").passed);
  EXPECT_EQ(r.data.rows.size(), 100u);
}

TEST(JacobianMoments, LinearFieldSmallRun) {
  const auto c = small("m_list = 3,4,5\nsamples = 400\nr_list = 2\n");
  const ResultRecord r = run_jacobian_moments(c);
  EXPECT_TRUE(r.check("uniformity_r2").passed);
  EXPECT_TRUE(r.check("reflection_oracle_r2").passed) << r.check("reflection_oracle_r2").detail;
  // the grid maximum grows with m
  EXPECT_LT(r.stat("J_moment_r2", 3).value, r.stat("J_moment_r2", 5).value);
}

TEST(NAlphaTail, LargeAlphaGivesZeroCounts) {
  const auto c = small("experiment = nalpha_tail\nm_list = 5\nsamples = 100\nalpha_list = 1e6\n");
  const ResultRecord r = run_nalpha_tail(c);
  EXPECT_EQ(r.stat("n_alpha[alpha=1e+06]", 5).value, 0.0);
  EXPECT_TRUE(r.check("nalpha_soundness").passed);
  EXPECT_FALSE(r.notices.empty());  // nothing to fit
}

TEST(NAlphaTail, SoundAndSchema) {
  const auto c = small("experiment = nalpha_tail\nm_list = 6\nsamples = 300\nalpha_list = 0.1,0.3\n");
  const ResultRecord r = run_nalpha_tail(c);
  EXPECT_TRUE(r.check("nalpha_soundness").passed);
  ASSERT_EQ(r.data.columns.size(), 7u);
  EXPECT_EQ(r.data.columns[3], "n_alpha[alpha=0.1]");
  for (const auto& row : r.data.rows) EXPECT_LE(0.1 * row[3], row[2] * (1 + 1e-12));
}

TEST(WongZakai, SmoothDriverConvergesMonotonically) {
  const auto c = small("experiment = wong_zakai\ndriver = smooth\npreset = smooth-2d\ny0 = 0\nm_list = 3,4,5,6\n"
                       "samples = 100\nr_list = 2,4\n");
  const ResultRecord r = run_wong_zakai(c);
  for (const char* q : {"[y]", "[Dh_y]", "[xi1]", "[xi2]"}) {
    EXPECT_TRUE(r.check(std::string("monotone") + q).passed) << q;
    EXPECT_TRUE(r.check(std::string("bounded_r4") + q).passed) << q;
  }
  // deterministic w: the y error has no sampling noise beyond summation roundoff
  const auto& s = r.stat("error_r2[y]", 3);
  EXPECT_GT(s.value, 0.0);
  EXPECT_LE(s.std_error, 1e-12 * s.value);
}

TEST(ChaosCheck, ConstantFieldHasNoGaps) {
  const auto c = small("experiment = chaos_check\npreset = constant\nm_list = 3\nsamples = 100\nb_samples = 200\n");
  const ResultRecord r = run_chaos_check(c);
  EXPECT_TRUE(r.all_passed());
  EXPECT_LE(r.stat("max_gap_1", 3).value, 1e-10);
  EXPECT_NEAR(r.stat("hs_norm_1", 3).value, 0.7, 1e-12);
  EXPECT_EQ(r.stat("xi2_var_exact[w=0]", 3).value, 0.0);
}

TEST(ChaosCheck, LinearFieldIdentities) {
  const auto c = small("experiment = chaos_check\nm_list = 3\nsamples = 100\nb_samples = 2000\n");
  const ResultRecord r = run_chaos_check(c);
  EXPECT_TRUE(r.all_passed()) << record_to_json(r);
}

TEST(Determinism, RepeatAndThreadCountGiveIdenticalBytes) {
  const auto c = small("experiment = nalpha_tail\nm_list = 5\nsamples = 150\n");
  const ResultRecord a = run_experiment(c);
  setenv("ROUGHMAL_THREADS", "1", 1);
  const ResultRecord b = run_experiment(c);
  unsetenv("ROUGHMAL_THREADS");
  EXPECT_EQ(record_to_json(a), record_to_json(b));
  EXPECT_EQ(record_to_csv(a), record_to_csv(b));
}

TEST(Output, FilesCarryHeader) {
  const auto c = small("preset = constant\nm_list = 3\nsamples = 100\n");
  const ResultRecord r = run_experiment(c);
  const auto dir = std::filesystem::temp_directory_path() / "roughmal_output_test";
  std::filesystem::remove_all(dir);
  const auto paths = write_record(r, dir.string());
  const std::string csv = slurp(paths[0]);
  EXPECT_EQ(csv.rfind("# roughmal " + std::string(library_version()) + " config " + r.config_hash, 0), 0u);
  const auto j = nlohmann::json::parse(slurp(paths[1]));
  EXPECT_EQ(j["header"]["config_hash"], r.config_hash);
  EXPECT_EQ(j["header"]["version"], library_version());
  EXPECT_EQ(slurp(paths[1]).find("runtime"), std::string::npos);
  std::filesystem::remove_all(dir);
}
