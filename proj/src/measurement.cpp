#include "tsbc/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "tsbc/errors.hpp"

namespace tsbc {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct SigmaFactor {
  Eigen::LLT<Mat> llt;
  double logdet = 0.0;
};

SigmaFactor factor(const Mat& Sigma) {
  SigmaFactor f{Eigen::LLT<Mat>(Sigma), 0.0};
  if (f.llt.info() != Eigen::Success) throw NumericalError("model-implied covariance is not positive definite");
  f.logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
  return f;
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Mat LinearMeasurement::implied_covariance() const {
  Mat Sigma = factor_variance * loadings * loadings.transpose();
  Sigma.diagonal() += uniquenesses;
  return Sigma;
}

double fml_objective(const Mat& S, const LinearMeasurement& m) {
  const auto f = factor(m.implied_covariance());
  const auto fs = factor(S);
  const double tr = f.llt.solve(S).trace();
  return f.logdet + tr - fs.logdet - static_cast<double>(S.rows());
}

Vec pack_free(const LinearMeasurement& m) {
  const Index p = m.items();
  Vec x(2 * p);
  x.head(p - 1) = m.loadings.tail(p - 1);
  x.segment(p - 1, p) = m.uniquenesses;
  x[2 * p - 1] = m.factor_variance;
  return x;
}

LinearMeasurement unpack_free(const Vec& x, double first_loading) {
  const Index p = x.size() / 2;
  LinearMeasurement m;
  m.loadings.resize(p);
  m.loadings[0] = first_loading;
  m.loadings.tail(p - 1) = x.head(p - 1);
  m.uniquenesses = x.segment(p - 1, p);
  m.factor_variance = x[2 * p - 1];
  return m;
}

namespace {

// dF/dSigma = A - A S A with A = Sigma^-1.
Vec gradient_from(const Mat& A, const Mat& S, const LinearMeasurement& m) {
  const Index p = m.items();
  const Mat G = A - A * S * A;
  const Vec Gl = G * m.loadings;
  Vec g(2 * p);
  g.head(p - 1) = 2.0 * m.factor_variance * Gl.tail(p - 1);
  g.segment(p - 1, p) = G.diagonal();
  g[2 * p - 1] = m.loadings.dot(Gl);
  return g;
}

// Expected information tr(A dSigma_a A dSigma_b) for the packed parameters.
Mat information(const Mat& A, const LinearMeasurement& m) {
  const Index p = m.items();
  const Index k = 2 * p;
  std::vector<Mat> B(static_cast<size_t>(k));
  for (Index j = 1; j < p; ++j) {
    Mat D = Mat::Zero(p, p);
    D.row(j) += m.factor_variance * m.loadings.transpose();
    D.col(j) += m.factor_variance * m.loadings;
    B[static_cast<size_t>(j - 1)] = A * D;
  }
  for (Index j = 0; j < p; ++j) B[static_cast<size_t>(p - 1 + j)] = A.col(j) * Vec::Unit(p, j).transpose();
  B[static_cast<size_t>(k - 1)] = A * (m.loadings * m.loadings.transpose());
  Mat I(k, k);
  for (Index a = 0; a < k; ++a)
    for (Index b = a; b < k; ++b) {
      I(a, b) = I(b, a) = (B[static_cast<size_t>(a)].array() *
                           B[static_cast<size_t>(b)].transpose().array()).sum();
    }
  return I;
}

}  // namespace

Vec fml_gradient(const Mat& S, const LinearMeasurement& m) {
  const auto f = factor(m.implied_covariance());
  const Mat A = f.llt.solve(Mat::Identity(S.rows(), S.cols()));
  return gradient_from(A, S, m);
}

Mat ml_covariance(const Mat& Y) {
  const Vec mu = Y.colwise().mean();
  const Mat C = Y.rowwise() - mu.transpose();
  return (C.transpose() * C) / static_cast<double>(Y.rows());
}

double gaussian_loglik(const Mat& S, Index n, const LinearMeasurement& m) {
  const auto f = factor(m.implied_covariance());
  const double p = static_cast<double>(S.rows());
  return -0.5 * static_cast<double>(n) * (p * kLog2Pi + f.logdet + f.llt.solve(S).trace());
}

OneFactorLinearFit fit_onefactor_cov(const Mat& S, Index n) {
  const Index p = S.rows();
  if (p < 3)
    throw IdentificationError("one-factor model with " + std::to_string(p) +
                              " indicators is not identified (need at least 3)");
  {
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success) throw DataError("sample covariance matrix is not positive definite");
  }

  LinearMeasurement start;
  start.loadings = Vec::Ones(p);
  start.uniquenesses = 0.5 * S.diagonal();
  start.factor_variance = 0.5 * S(0, 0);
  Vec x = pack_free(start);
  const Index k = x.size();
  auto at_floor = [&](Index a) { return a >= p - 1 && x[a] <= kVarianceFloor; };

  OneFactorLinearFit fit;
  double F = fml_objective(S, start);
  for (int iter = 0; iter < 500; ++iter) {
    const LinearMeasurement m = unpack_free(x);
    const auto fac = factor(m.implied_covariance());
    const Mat A = fac.llt.solve(Mat::Identity(p, p));
    Vec g = gradient_from(A, S, m);
    Mat I = information(A, m);
    for (Index a = 0; a < k; ++a) {
      if (at_floor(a) && g[a] > 0) {
        g[a] = 0;
        I.row(a).setZero();
        I.col(a).setZero();
        I(a, a) = 1.0;
      }
    }
    fit.gradient_norm = g.norm();
    fit.iterations = iter;
    if (fit.gradient_norm < 1e-6) {
      fit.converged = true;
      break;
    }
    Vec d = I.ldlt().solve(-g);
    if (!d.allFinite() || d.dot(g) >= 0) d = -g;

    double t = 1.0;
    bool moved = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      Vec xn = x + t * d;
      for (Index a = p - 1; a < k; ++a) xn[a] = std::max(xn[a], kVarianceFloor);
      double Fn;
      try {
        Fn = fml_objective(S, unpack_free(xn));
      } catch (const NumericalError&) {
        continue;
      }
      if (Fn <= F + 1e-4 * g.dot(xn - x)) {
        moved = (xn - x).lpNorm<Eigen::Infinity>() > 0;
        x = xn;
        F = Fn;
        break;
      }
    }
    if (!moved) break;
  }

  static_cast<LinearMeasurement&>(fit) = unpack_free(x);
  fit.heywood = (fit.uniquenesses.array() <= kVarianceFloor).any();
  fit.loglik = gaussian_loglik(S, n, fit);
  return fit;
}

OneFactorLinearFit fit_onefactor_linear(const Mat& Y_block) {
  if (Y_block.cols() < 3)
    throw IdentificationError("one-factor model with " + std::to_string(Y_block.cols()) +
                              " indicators is not identified (need at least 3)");
  return fit_onefactor_cov(ml_covariance(Y_block), Y_block.rows());
}

Quadrature Quadrature::standard(int points, double range) {
  Quadrature q;
  q.nodes = Vec::LinSpaced(points, -range, range);
  q.weights = (-0.5 * q.nodes.array().square()).exp().matrix();
  q.weights /= q.weights.sum();
  return q;
}

namespace {

struct Patterns {
  std::vector<std::vector<unsigned char>> responses;
  Vec counts;
  std::vector<Index> row_pattern;
};

Patterns collapse(const Mat& Y) {
  Patterns out;
  std::unordered_map<std::string, Index> index;
  std::vector<double> counts;
  std::string key(static_cast<size_t>(Y.cols()), '0');
  out.row_pattern.resize(static_cast<size_t>(Y.rows()));
  for (Index i = 0; i < Y.rows(); ++i) {
    for (Index j = 0; j < Y.cols(); ++j) key[static_cast<size_t>(j)] = Y(i, j) != 0.0 ? '1' : '0';
    auto [it, fresh] = index.try_emplace(key, static_cast<Index>(counts.size()));
    if (fresh) {
      counts.push_back(0.0);
      std::vector<unsigned char> r(static_cast<size_t>(Y.cols()));
      for (Index j = 0; j < Y.cols(); ++j) r[static_cast<size_t>(j)] = key[static_cast<size_t>(j)] == '1';
      out.responses.push_back(std::move(r));
    }
    counts[static_cast<size_t>(it->second)] += 1.0;
    out.row_pattern[static_cast<size_t>(i)] = it->second;
  }
  out.counts = Eigen::Map<Vec>(counts.data(), static_cast<Index>(counts.size()));
  return out;
}

void require_binary(const Mat& Y) {
  if (!(Y.array() == 0.0 || Y.array() == 1.0).all())
    throw DataError("2PL data must contain only 0/1 responses");
}

// log P(y_j = 1 | node) and log P(y_j = 0 | node), items x nodes.
void item_log_probs(const TwoPLItems& items, const Quadrature& quad, Mat& logp, Mat& logq) {
  const Index J = items.items(), Q = quad.nodes.size();
  logp.resize(J, Q);
  logq.resize(J, Q);
  for (Index j = 0; j < J; ++j)
    for (Index q = 0; q < Q; ++q) {
      const double z = items.intercepts[j] + items.slopes[j] * quad.nodes[q];
      logp(j, q) = -softplus(-z);
      logq(j, q) = -softplus(z);
    }
}

// Posterior over nodes for every pattern (patterns x nodes); returns the
// marginal log-likelihood weighted by pattern counts.
double posteriors(const Patterns& pat, const TwoPLItems& items, const Quadrature& quad, Mat& post) {
  Mat logp, logq;
  item_log_probs(items, quad, logp, logq);
  const Index R = static_cast<Index>(pat.responses.size()), Q = quad.nodes.size(), J = items.items();
  const Vec logw = quad.weights.array().log().matrix();
  post.resize(R, Q);
  double ll = 0.0;
  Vec lp(Q);
  for (Index r = 0; r < R; ++r) {
    lp = logw;
    const auto& y = pat.responses[static_cast<size_t>(r)];
    for (Index j = 0; j < J; ++j) lp += y[static_cast<size_t>(j)] ? Vec(logp.row(j)) : Vec(logq.row(j));
    const double mx = lp.maxCoeff();
    const Vec e = (lp.array() - mx).exp().matrix();
    const double s = e.sum();
    post.row(r) = e / s;
    ll += pat.counts[r] * (mx + std::log(s));
  }
  return ll;
}

double item_q(double a, double b, const Vec& nodes, const Vec& r, const Vec& N) {
  double s = 0;
  for (Index q = 0; q < nodes.size(); ++q) {
    const double z = a + b * nodes[q];
    s -= r[q] * softplus(-z) + (N[q] - r[q]) * softplus(z);
  }
  return s;
}

// Newton ascent on one item's expected complete-data log-likelihood.
void m_step_item(double& a, double& b, const Vec& nodes, const Vec& r, const Vec& N) {
  double f = item_q(a, b, nodes, r, N);
  for (int it = 0; it < 25; ++it) {
    double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
    for (Index q = 0; q < nodes.size(); ++q) {
      const double x = nodes[q];
      const double pr = logistic(a + b * x);
      const double res = r[q] - N[q] * pr;
      const double w = N[q] * pr * (1.0 - pr);
      g0 += res;
      g1 += res * x;
      h00 += w;
      h01 += w * x;
      h11 += w * x * x;
    }
    const double det = h00 * h11 - h01 * h01;
    double d0, d1;
    if (det > 1e-12 * (h00 * h11 + 1e-300)) {
      d0 = (h11 * g0 - h01 * g1) / det;
      d1 = (-h01 * g0 + h00 * g1) / det;
    } else {
      d0 = g0 * 1e-2;
      d1 = g1 * 1e-2;
    }
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 30; ++h, t *= 0.5) {
      const double an = std::clamp(a + t * d0, -kLogitBound, kLogitBound);
      const double bn = std::clamp(b + t * d1, -kLogitBound, kLogitBound);
      const double fn = item_q(an, bn, nodes, r, N);
      if (fn >= f) {
        improved = fn > f || (an == a && bn == b);
        const double step = std::max(std::abs(an - a), std::abs(bn - b));
        a = an;
        b = bn;
        f = fn;
        if (step < 1e-10) return;
        break;
      }
    }
    if (!improved) return;
  }
}

}  // namespace

double twopl_loglik(const Mat& Y_block, const TwoPLItems& items, const Quadrature& quad) {
  require_binary(Y_block);
  const Patterns pat = collapse(Y_block);
  Mat post;
  return posteriors(pat, items, quad, post);
}

TwoPLFit fit_2pl(const Mat& Y_block, const Quadrature& quad, const TwoPLOptions& opt) {
  require_binary(Y_block);
  const Index J = Y_block.cols(), n = Y_block.rows();
  const Vec means = Y_block.colwise().mean();
  for (Index j = 0; j < J; ++j)
    if (means[j] <= 0.0 || means[j] >= 1.0)
      throw BoundaryError("item " + std::to_string(j + 1) + " shows a single response category (" +
                              (means[j] <= 0.0 ? "all 0" : "all 1") + ")",
                          static_cast<int>(j));

  const Patterns pat = collapse(Y_block);
  TwoPLFit fit;
  fit.intercepts.resize(J);
  fit.slopes = Vec::Ones(J);
  for (Index j = 0; j < J; ++j) {
    const double pbar = std::clamp(means[j], 0.5 / static_cast<double>(n), 1.0 - 0.5 / static_cast<double>(n));
    fit.intercepts[j] = 1.5 * std::log(pbar / (1.0 - pbar));
  }

  const Index Q = quad.nodes.size();
  Mat post;
  for (int cycle = 0; cycle < opt.max_cycles; ++cycle) {
    const double ll = posteriors(pat, fit, quad, post);
    if (!fit.loglik_trace.empty() &&
        ll < fit.loglik_trace.back() - 1e-9 * (1.0 + std::abs(fit.loglik_trace.back())))
      fit.monotone = false;
    fit.loglik_trace.push_back(ll);
    fit.loglik = ll;

    const Vec N = post.transpose() * pat.counts;
    double change = 0.0;
    for (Index j = 0; j < J; ++j) {
      Vec r = Vec::Zero(Q);
      for (Index k = 0; k < post.rows(); ++k)
        if (pat.responses[static_cast<size_t>(k)][static_cast<size_t>(j)]) r += pat.counts[k] * post.row(k).transpose();
      double a = fit.intercepts[j], b = fit.slopes[j];
      m_step_item(a, b, quad.nodes, r, N);
      change = std::max({change, std::abs(a - fit.intercepts[j]), std::abs(b - fit.slopes[j])});
      fit.intercepts[j] = a;
      fit.slopes[j] = b;
    }
    fit.cycles = cycle + 1;
    if (change < opt.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.loglik = posteriors(pat, fit, quad, post);
  if (fit.loglik < fit.loglik_trace.back() - 1e-9 * (1.0 + std::abs(fit.loglik_trace.back())))
    fit.monotone = false;
  fit.loglik_trace.push_back(fit.loglik);
  return fit;
}

Vec score_mean(const Mat& Y_block) { return Y_block.rowwise().mean(); }

Vec bartlett_weights(const LinearMeasurement& m) {
  const Vec v = m.loadings.cwiseQuotient(m.uniquenesses);
  const double a = m.loadings.dot(v);
  if (!(a > 0) || !std::isfinite(a)) throw NumericalError("Bartlett weights: lambda' Psi^-1 lambda is singular");
  return v / a;
}

Vec regression_weights(const LinearMeasurement& m) {
  Eigen::LLT<Mat> llt(m.implied_covariance());
  if (llt.info() != Eigen::Success) throw NumericalError("regression weights: implied covariance is singular");
  return m.factor_variance * llt.solve(m.loadings);
}

Vec score_bartlett(const Mat& Y_block, const LinearMeasurement& m) {
  const Vec w = bartlett_weights(m);
  const Vec mu = Y_block.colwise().mean();
  return (Y_block * w).array() - mu.dot(w);
}

Vec score_regression(const Mat& Y_block, const LinearMeasurement& m) {
  const Vec w = regression_weights(m);
  const Vec mu = Y_block.colwise().mean();
  return (Y_block * w).array() - mu.dot(w);
}

Vec score_eap(const Mat& Y_block, const TwoPLItems& items, const Quadrature& quad) {
  require_binary(Y_block);
  const Patterns pat = collapse(Y_block);
  Mat post;
  posteriors(pat, items, quad, post);
  const Vec eap = post * quad.nodes;
  Vec out(Y_block.rows());
  for (Index i = 0; i < Y_block.rows(); ++i) out[i] = eap[pat.row_pattern[static_cast<size_t>(i)]];
  return out;
}

double reliability_mean(const LinearMeasurement& m) {
  const double s = m.loadings.sum();
  const double signal = m.factor_variance * s * s;
  return signal / (signal + m.uniquenesses.sum());
}

double reliability_bartlett(const LinearMeasurement& m) {
  const double a = m.loadings.dot(m.loadings.cwiseQuotient(m.uniquenesses));
  return m.factor_variance / (m.factor_variance + 1.0 / a);
}

double reliability_regression(const LinearMeasurement& m) {
  // Corr(w'y, eta)^2 with w = phi Sigma^-1 lambda.
  const Vec w = regression_weights(m);
  const double cov = m.factor_variance * w.dot(m.loadings);
  const double var = w.dot(m.implied_covariance() * w);
  return cov * cov / (var * m.factor_variance);
}

double conditional_factor_variance(const Mat& Y_block, const Vec& loadings, const Vec& uniquenesses) {
  LinearMeasurement m{loadings, uniquenesses, 1.0};
  const Vec v = loadings.cwiseQuotient(uniquenesses);
  const double a = loadings.dot(v);
  const Vec s = score_bartlett(Y_block, m);
  const double var = s.squaredNorm() / static_cast<double>(s.size());
  return std::max(var - 1.0 / a, kVarianceFloor);
}

}  // namespace tsbc
