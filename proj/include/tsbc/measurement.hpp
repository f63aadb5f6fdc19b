#pragma once

#include <vector>

#include "tsbc/linalg.hpp"

namespace tsbc {

inline constexpr double kVarianceFloor = 1e-8;
inline constexpr double kLogitBound = 30.0;

// Linear-normal one-factor measurement model y = mu + lambda * eta + e,
// Var(eta) = factor_variance, Cov(e) = diag(uniquenesses).
struct LinearMeasurement {
  Vec loadings;
  Vec uniquenesses;
  double factor_variance = 1.0;

  Index items() const { return loadings.size(); }
  Mat implied_covariance() const;
};

struct OneFactorLinearFit : LinearMeasurement {
  double loglik = 0.0;
  bool converged = false;
  bool heywood = false;  // some uniqueness pinned at the floor
  int iterations = 0;
  double gradient_norm = 0.0;
};

// ML discrepancy F = log|Sigma| + tr(S Sigma^-1) - log|S| - p.
double fml_objective(const Mat& S, const LinearMeasurement& m);

// Gradient of F with respect to the free parameters packed as
// (loadings[1..p-1], uniquenesses[0..p-1], factor_variance); loadings[0] is fixed.
Vec fml_gradient(const Mat& S, const LinearMeasurement& m);
Vec pack_free(const LinearMeasurement& m);
LinearMeasurement unpack_free(const Vec& x, double first_loading = 1.0);

// Sample covariance with divisor n.
Mat ml_covariance(const Mat& Y);

OneFactorLinearFit fit_onefactor_cov(const Mat& S, Index n);
OneFactorLinearFit fit_onefactor_linear(const Mat& Y_block);

double gaussian_loglik(const Mat& S, Index n, const LinearMeasurement& m);

// Equally spaced grid with N(0,1) density weights normalized to one.
struct Quadrature {
  Vec nodes;
  Vec weights;

  static Quadrature standard(int points = 61, double range = 6.0);
};

// 2PL items with P(y_j = 1 | eta) = logistic(intercept_j + slope_j * eta), eta ~ N(0, 1).
struct TwoPLItems {
  Vec intercepts;
  Vec slopes;

  Index items() const { return intercepts.size(); }
};

struct TwoPLFit : TwoPLItems {
  double loglik = 0.0;
  bool converged = false;
  int cycles = 0;
  // Observed-data log-likelihood at the start of every EM cycle.
  std::vector<double> loglik_trace;
  bool monotone = true;
};

struct TwoPLOptions {
  double tolerance = 1e-5;
  int max_cycles = 500;
};

TwoPLFit fit_2pl(const Mat& Y_block, const Quadrature& quad, const TwoPLOptions& opt = {});

double twopl_loglik(const Mat& Y_block, const TwoPLItems& items, const Quadrature& quad);

Vec score_mean(const Mat& Y_block);
Vec bartlett_weights(const LinearMeasurement& m);
Vec regression_weights(const LinearMeasurement& m);
// Both center the indicators at their sample means.
Vec score_bartlett(const Mat& Y_block, const LinearMeasurement& m);
Vec score_regression(const Mat& Y_block, const LinearMeasurement& m);
Vec score_eap(const Mat& Y_block, const TwoPLItems& items, const Quadrature& quad);

// Squared correlation between the score and the latent variable under the model.
double reliability_mean(const LinearMeasurement& m);
double reliability_bartlett(const LinearMeasurement& m);
double reliability_regression(const LinearMeasurement& m);

// ML estimate of Var(eta) given fixed loadings and uniquenesses:
// Var(Bartlett score) - 1 / (lambda' Psi^-1 lambda), floored at kVarianceFloor.
double conditional_factor_variance(const Mat& Y_block, const Vec& loadings, const Vec& uniquenesses);

}  // namespace tsbc
