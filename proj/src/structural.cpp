#include "tsbc/structural.hpp"

#include <cmath>

#include "tsbc/errors.hpp"

namespace tsbc {

ScoreChoice parse_score_choice(const std::string& s) {
  if (s == "MM") return ScoreChoice::MM;
  if (s == "BB") return ScoreChoice::BB;
  if (s == "RR") return ScoreChoice::RR;
  if (s == "BR") return ScoreChoice::BR;
  if (s == "EAP") return ScoreChoice::EAP;
  throw UsageError("unknown score choice '" + s + "' (expected MM, BB, RR, BR or EAP)");
}

std::string to_string(ScoreChoice c) {
  switch (c) {
    case ScoreChoice::MM: return "MM";
    case ScoreChoice::BB: return "BB";
    case ScoreChoice::RR: return "RR";
    case ScoreChoice::BR: return "BR";
    case ScoreChoice::EAP: return "EAP";
  }
  return "?";
}

namespace {

ScoreType uniform_type(ScoreChoice c) {
  switch (c) {
    case ScoreChoice::MM: return ScoreType::mean;
    case ScoreChoice::BB: return ScoreType::bartlett;
    case ScoreChoice::RR: return ScoreType::regression;
    default: return ScoreType::eap;
  }
}

}  // namespace

StructuralSpec structural_spec(Study s, ScoreChoice c) {
  StructuralSpec spec;
  spec.study = s;
  const auto& L = study_layout(s);
  const auto nb = L.blocks.size();
  if (s == Study::three) {
    if (c != ScoreChoice::EAP) throw UsageError("study 3 uses EAP scores only");
  } else {
    if (c == ScoreChoice::EAP) throw UsageError("EAP scores are only available for study 3");
    if (c == ScoreChoice::BR && s != Study::one) throw UsageError("BR scores are only defined for study 1");
  }

  switch (s) {
    case Study::one:
      if (c == ScoreChoice::BR)
        spec.block_scores = {ScoreType::regression, ScoreType::bartlett};
      else
        spec.block_scores.assign(nb, uniform_type(c));
      spec.outcome_block = 1;
      spec.terms = {{0, std::nullopt}};
      spec.estimate_error_variance = true;
      break;
    case Study::two:
      spec.block_scores.assign(nb, uniform_type(c));
      spec.outcome_block = 2;
      spec.terms = {{0, std::nullopt}, {1, std::nullopt}, {0, Index{1}}};
      spec.estimate_error_variance = true;
      spec.correlation_targets = {{1, 0}};
      spec.targets_as_covariance = true;
      break;
    case Study::three:
      spec.block_scores.assign(nb, ScoreType::eap);
      spec.outcome_block = 4;
      spec.terms = {{0, std::nullopt}, {1, std::nullopt}, {2, std::nullopt}, {3, std::nullopt}};
      spec.estimate_error_variance = false;
      spec.correlation_targets = {{1, 0}, {2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}};
      break;
  }
  return spec;
}

OLSResult ols_fit(const Mat& X, const Vec& y) {
  if (X.rows() != y.size()) throw StructuralError("ols_fit: X and y differ in rows");
  if (X.rows() < X.cols()) throw NumericalError("ols_fit: fewer observations than coefficients");
  Eigen::ColPivHouseholderQR<Mat> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) throw NumericalError("ols_fit: design matrix is rank deficient");
  OLSResult out;
  out.coefficients = qr.solve(y);
  out.error_variance = (y - X * out.coefficients).squaredNorm() / static_cast<double>(y.size());
  return out;
}

const Quadrature& default_quadrature() {
  static const Quadrature q = Quadrature::standard(61, 6.0);
  return q;
}

Mat block_columns(const Mat& Y, const BlockLayout& b) {
  Mat out(Y.rows(), b.items());
  for (Index j = 0; j < b.items(); ++j) out.col(j) = Y.col(b.columns[static_cast<size_t>(j)]);
  return out;
}

LinearMeasurement linear_block_params(const Vec& nu, const BlockLayout& b, const Mat& Y_block) {
  const Index p = b.items();
  LinearMeasurement m;
  m.loadings = nu.segment(b.offset, p);
  m.uniquenesses = nu.segment(b.offset + p, p);
  // Blocks whose latent variance is not a nuisance parameter get the
  // conditional ML variance given the fixed loadings and uniquenesses.
  m.factor_variance = b.variance_in_nuisance
                          ? nu[b.offset + 2 * p]
                          : conditional_factor_variance(Y_block, m.loadings, m.uniquenesses);
  return m;
}

TwoPLItems twopl_block_params(const Vec& nu, const BlockLayout& b) {
  const Index p = b.items();
  return TwoPLItems{nu.segment(b.offset, p), nu.segment(b.offset + p, p)};
}

Mat factor_scores(const Dataset& Y, const Vec& nu, const StructuralSpec& spec) {
  const auto& L = study_layout(spec.study);
  if (nu.size() != L.q0())
    throw StructuralError("nu has length " + std::to_string(nu.size()) + ", expected " +
                          std::to_string(L.q0()));
  if (Y.p() != L.p) throw StructuralError("dataset has " + std::to_string(Y.p()) + " columns, expected " +
                                          std::to_string(L.p));
  Mat scores(Y.n(), static_cast<Index>(L.blocks.size()));
  for (size_t k = 0; k < L.blocks.size(); ++k) {
    const auto& b = L.blocks[k];
    const Mat Yb = block_columns(Y.values, b);
    const auto col = static_cast<Index>(k);
    switch (spec.block_scores[k]) {
      case ScoreType::mean:
        scores.col(col) = score_mean(Yb);
        break;
      case ScoreType::bartlett: {
        LinearMeasurement m;
        m.loadings = nu.segment(b.offset, b.items());
        m.uniquenesses = nu.segment(b.offset + b.items(), b.items());
        scores.col(col) = score_bartlett(Yb, m);
        break;
      }
      case ScoreType::regression:
        scores.col(col) = score_regression(Yb, linear_block_params(nu, b, Yb));
        break;
      case ScoreType::eap:
        scores.col(col) = score_eap(Yb, twopl_block_params(nu, b), default_quadrature());
        break;
    }
  }
  return scores;
}

InitialEstimate structural_from_scores(const Mat& scores, const StructuralSpec& spec) {
  const Index n = scores.rows();
  const Index k = static_cast<Index>(spec.terms.size());
  Mat X(n, k + 1);
  X.col(0).setOnes();
  for (Index t = 0; t < k; ++t) {
    const auto& term = spec.terms[static_cast<size_t>(t)];
    X.col(t + 1) = scores.col(term.first);
    if (term.second) X.col(t + 1) = X.col(t + 1).cwiseProduct(scores.col(*term.second));
  }
  const OLSResult ols = ols_fit(X, scores.col(spec.outcome_block));

  const Index nt = static_cast<Index>(spec.correlation_targets.size());
  InitialEstimate out;
  out.phi_hat.resize(nt + k + (spec.estimate_error_variance ? 1 : 0));
  if (nt > 0) {
    const Mat C = scores.rowwise() - scores.colwise().mean();
    const Mat cov = (C.transpose() * C) / static_cast<double>(n - 1);
    for (Index t = 0; t < nt; ++t) {
      const auto [r, c] = spec.correlation_targets[static_cast<size_t>(t)];
      out.phi_hat[t] = spec.targets_as_covariance ? cov(r, c) : cov(r, c) / std::sqrt(cov(r, r) * cov(c, c));
    }
  }
  out.phi_hat.segment(nt, k) = ols.coefficients.tail(k);
  if (spec.estimate_error_variance) {
    out.phi_hat[nt + k] = ols.error_variance;
    out.residual_variance = ols.error_variance;
  }
  if (!out.phi_hat.allFinite()) throw NumericalError("initial estimator produced non-finite values");
  return out;
}

InitialEstimate initial_estimator(const Dataset& Y, const Vec& nu, const StructuralSpec& spec) {
  return structural_from_scores(factor_scores(Y, nu, spec), spec);
}

Vec nuisance_estimator(const Dataset& Y, const StructuralSpec& spec) {
  const auto& L = study_layout(spec.study);
  if (Y.p() != L.p) throw StructuralError("dataset has " + std::to_string(Y.p()) + " columns, expected " +
                                          std::to_string(L.p));
  Vec nu(L.q0());
  for (const auto& b : L.blocks) {
    const Mat Yb = block_columns(Y.values, b);
    const Index p = b.items();
    if (b.kind == MeasurementKind::linear) {
      const auto fit = fit_onefactor_linear(Yb);
      nu.segment(b.offset, p) = fit.loadings;
      nu.segment(b.offset + p, p) = fit.uniquenesses;
      if (b.variance_in_nuisance) nu[b.offset + 2 * p] = fit.factor_variance;
    } else {
      const auto fit = fit_2pl(Yb, default_quadrature());
      nu.segment(b.offset, p) = fit.intercepts;
      nu.segment(b.offset + p, p) = fit.slopes;
    }
  }
  return nu;
}

}  // namespace tsbc
