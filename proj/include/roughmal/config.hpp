#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "roughmal/covariance.hpp"

namespace roughmal {

// Flat key = value configuration; every key and default is listed in config/defaults.conf.
struct ExperimentConfig {
  std::string experiment = "jacobian_moments";  // jacobian_moments | nalpha_tail | wong_zakai | chaos_check
  CovarianceModel model;
  std::string driver = "gaussian";  // gaussian | smooth (deterministic w, wong_zakai only)
  double p = 0.0;                   // 0: the model default
  double q = 0.0;                   // 0: the model default
  std::string preset = "linear-scalar";
  std::vector<double> y0 = {1.0};   // a single value is broadcast over the state
  std::vector<int> m_list = {4, 5, 6, 7, 8, 9};
  int samples = 2000;
  std::vector<int> r_list = {2, 4};
  std::vector<double> alpha_list = {0.05, 0.1, 0.2};
  std::uint64_t seed = 42;
  std::string output_dir = "out";
  int b_samples = 10000;    // chaos_check: copies per w for the second-order moments
  int moment_w_samples = 1; // chaos_check: how many w get the b-moment comparison
  double tolerance = 1e-11; // per-cell solver defect, relative to 1 + |state|
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Applies one key = value pair; unknown keys and malformed values throw ConfigError.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);
// Resolves p and q defaults and enforces p ∈ (2ρ, 4), q ∈ [1, 2), 1/p + 1/q > 1, samples ≥ 100.
void finalize_config(ExperimentConfig& cfg);

// Canonical text of a finalized config: every key in a fixed order.
std::string canonical_text(const ExperimentConfig& cfg);
// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& text);
// fnv1a_hex of the canonical text.
std::string config_hash(const ExperimentConfig& cfg);

const char* library_version();

}  // namespace roughmal
