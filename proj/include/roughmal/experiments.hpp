#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "roughmal/config.hpp"

namespace roughmal {

struct Statistic {
  std::string name;
  int m = -1;  // -1 when not tied to a grid level
  double value = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

struct FittedConstant {
  std::string name;
  double value = 0.0;
  double std_error = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct DataTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct ResultRecord {
  std::string experiment;
  std::string config_hash;
  std::string version;
  std::string canonical_config;
  std::size_t samples = 0;
  std::size_t flagged = 0;  // samples excluded after a numerical failure
  std::vector<Statistic> stats;
  std::vector<FittedConstant> fits;
  std::vector<Check> checks;
  std::vector<std::string> notices;
  DataTable data;
  double runtime_seconds = 0.0;  // console only; never written, so outputs stay byte-identical

  bool all_passed() const;
  // Throws ArgumentError when absent.
  const Statistic& stat(const std::string& name, int m = -1) const;
  const FittedConstant& fit(const std::string& name) const;
  const Check& check(const std::string& name) const;
};

ResultRecord run_experiment(const ExperimentConfig& cfg);
ResultRecord run_jacobian_moments(const ExperimentConfig& cfg);
ResultRecord run_nalpha_tail(const ExperimentConfig& cfg);
ResultRecord run_wong_zakai(const ExperimentConfig& cfg);
ResultRecord run_chaos_check(const ExperimentConfig& cfg);

// Both start with a line carrying the library version and config hash.
std::string record_to_json(const ResultRecord& r);
std::string record_to_csv(const ResultRecord& r);
// Writes <dir>/<experiment>.csv and .json, creating dir; returns the two paths.
std::vector<std::string> write_record(const ResultRecord& r, const std::string& dir);

// Worker count: hardware concurrency capped by ROUGHMAL_THREADS when set.
int worker_count();
// Runs fn(0..n-1) on the worker pool; the first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};
// Weighted least squares; empty weights mean unit weights. Needs at least three points.
LinearFit fit_line(std::span<const double> x, std::span<const double> y, std::span<const double> w = {});

// Sample mean and its standard error.
struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double variance = 0.0;
  std::size_t count = 0;
};
MeanEstimate estimate_mean(std::span<const double> xs);

// E[exp(r max_{[0,1]} B)] for standard Brownian motion, by reflection.
double reflection_moment(double r);

}  // namespace roughmal
