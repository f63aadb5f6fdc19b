#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsbc/dga.hpp"
#include "tsbc/linalg.hpp"
#include "tsbc/measurement.hpp"
#include "tsbc/study.hpp"

namespace tsbc {

enum class ScoreType { mean, bartlett, regression, eap };

// Score pairing for the structural regression: MM/BB/RR use one score type
// for every latent variable, BR uses Bartlett for the outcome and regression
// scores for the predictor, EAP is the 2PL posterior mean.
enum class ScoreChoice { MM, BB, RR, BR, EAP };

ScoreChoice parse_score_choice(const std::string& s);
std::string to_string(ScoreChoice c);

// A regressor is a block's score or the product of two blocks' scores.
struct Regressor {
  Index first;
  std::optional<Index> second;
};

struct StructuralSpec {
  Study study = Study::one;
  std::vector<ScoreType> block_scores;  // one per measurement block
  Index outcome_block = 0;
  std::vector<Regressor> terms;
  bool estimate_error_variance = true;
  // (row, col) block pairs, row > col, listed row-major over the lower triangle.
  std::vector<std::pair<Index, Index>> correlation_targets;
  bool targets_as_covariance = false;
};

// Throws UsageError for combinations a study does not support.
StructuralSpec structural_spec(Study s, ScoreChoice c);

struct OLSResult {
  Vec coefficients;
  double error_variance = 0.0;  // RSS / n
};

OLSResult ols_fit(const Mat& X, const Vec& y);

struct InitialEstimate {
  Vec phi_hat;
  std::optional<double> residual_variance;
};

// One score column per measurement block, computed from a fixed nu.
Mat factor_scores(const Dataset& Y, const Vec& nu, const StructuralSpec& spec);

// Second stage on an arbitrary score matrix (one column per block).
InitialEstimate structural_from_scores(const Mat& scores, const StructuralSpec& spec);

InitialEstimate initial_estimator(const Dataset& Y, const Vec& nu, const StructuralSpec& spec);

// Piecewise first stage: one measurement model per block, concatenated in
// canonical order.
Vec nuisance_estimator(const Dataset& Y, const StructuralSpec& spec);

LinearMeasurement linear_block_params(const Vec& nu, const BlockLayout& b, const Mat& Y_block);
TwoPLItems twopl_block_params(const Vec& nu, const BlockLayout& b);

Mat block_columns(const Mat& Y, const BlockLayout& b);

const Quadrature& default_quadrature();

}  // namespace tsbc
