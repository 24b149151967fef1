#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "roughmal/path.hpp"

namespace roughmal {

enum class CovarianceKind { Brownian, FractionalBrownian };

struct CovarianceModel {
  CovarianceKind kind = CovarianceKind::Brownian;
  double hurst = 0.5;

  static CovarianceModel brownian() { return {CovarianceKind::Brownian, 0.5}; }
  static CovarianceModel fbm(double hurst);  // throws for hurst outside (1/4, 1]

  double rho() const;  // max(1, 1/(2H))
};

double covariance_eval(const CovarianceModel& model, double s, double t);

constexpr int kMaxSampleLevel = 14;

// Per-component covariance of the 2^m cell increments.
Eigen::MatrixXd increment_covariance(const CovarianceModel& model, int m);

struct CovarianceFactor {
  int level = 0;
  bool diagonal = false;     // Brownian: Q = 2^-m Id
  double diag_scale = 0.0;   // sqrt of the diagonal entry when diagonal
  double jitter = 0.0;
  std::vector<double> lower;  // row-major lower-triangular Cholesky factor otherwise

  // out = L z
  void apply(std::span<const double> z, std::span<double> out) const;
};

// Cached and shared; concurrent callers receive the same factor.
std::shared_ptr<const CovarianceFactor> covariance_factor(const CovarianceModel& model, int m);

struct GaussianSample {
  CovarianceModel model;
  int level = 0;
  int dim = 0;
  std::uint64_t seed = 0;
  std::vector<double> dw;  // cell-major: dw[l * dim + c]
  std::vector<double> db;  // empty unless sampled with the copy
  bool has_copy() const { return !db.empty(); }
};

GaussianSample sample_gaussian(const CovarianceModel& model, int m, int dim, std::uint64_t seed, bool with_copy);

// Path through cumulative increments, linearly interpolated to eval_level ≥ sample level.
SampledPath piecewise_linear_path(const GaussianSample& sample, int eval_level, bool copy = false);
SampledPath path_from_increments(std::span<const double> increments, int level, int dim);

struct RhoVariationResult {
  double value = 0.0;
  bool exact = false;  // true: exhaustive over axis-1 partitions with exact DP on axis 2
  int level = 0;
  std::vector<int> axis1, axis2;  // optimal (or best found) partitions as grid indices
};

using CovarianceFunction = std::function<double(double, double)>;

RhoVariationResult rho_variation_2d(const CovarianceModel& model, int m, double rho);
RhoVariationResult rho_variation_2d(const CovarianceFunction& cov, int m, double rho);

constexpr int kExactRhoVariationLevel = 4;

double default_q(double hurst);
double default_p(const CovarianceModel& model);

struct CameronMartinCoords {
  int level = 0;
  int dim = 0;
  double p = 0.0;
  double q = 0.0;
  Eigen::MatrixXd covariance;  // Q_m
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  double rank_tolerance = 0.0;
  double embedding_constant = 0.0;  // measured sup of |h|_{q-var} / |h|_H
};

CameronMartinCoords cameron_martin_coords(const CovarianceModel& model, int m, int dim, double p, double q);

// h_increments cell-major like GaussianSample::dw. +inf when outside the range of Q_m.
double cm_norm(const CameronMartinCoords& coords, std::span<const double> h_increments);
double cm_inner(const CameronMartinCoords& coords, std::span<const double> h, std::span<const double> k);

// Level-1 variation of a sampled path with exponent ≥ 1 (over grid partitions).
double path_variation(const SampledPath& path, double exponent);

}  // namespace roughmal
