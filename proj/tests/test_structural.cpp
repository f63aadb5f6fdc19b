#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsbc/dga.hpp"
#include "tsbc/errors.hpp"
#include "tsbc/structural.hpp"

using namespace tsbc;

namespace {

struct Large {
  RandomComponents U;
  Dataset Y;
};

const Large& large(Study s) {
  static Large cache[3];
  static bool ready[3] = {false, false, false};
  const int k = to_int(s) - 1;
  if (!ready[k]) {
    const Index n = 100000;
    cache[k].U = draw_components(n, study_layout(s).component_layout(n), 31337, 1);
    cache[k].Y = generate(s, cache[k].U, study_truth(s));
    ready[k] = true;
  }
  return cache[k];
}

Vec true_nu(Study s) { return study_truth(s).values().head(study_layout(s).q0()); }

}  // namespace

TEST_CASE("OLS examples") {
  Mat X(3, 2);
  X << 1, 1, 1, 2, 1, 3;
  const auto fit = ols_fit(X, (Vec(3) << 2, 4, 6).finished());
  CHECK(fit.coefficients[1] == doctest::Approx(2.0));
  CHECK(std::abs(fit.coefficients[0]) < 1e-12);
  CHECK(fit.error_variance < 1e-20);

  Mat Z(4, 2);
  Z << 1, -1, 1, 1, 1, -1, 1, 1;
  const auto orth = ols_fit(Z, (Vec(4) << 1, 2, 2, 1).finished());
  CHECK(std::abs(orth.coefficients[1]) < 1e-12);

  Mat R(3, 2);
  R << 1, 1, 1, 1, 1, 1;
  CHECK_THROWS_AS(ols_fit(R, Vec::Ones(3)), NumericalError);
}

TEST_CASE("score choice validation") {
  CHECK_THROWS_AS(structural_spec(Study::three, ScoreChoice::BB), UsageError);
  CHECK_THROWS_AS(structural_spec(Study::two, ScoreChoice::BR), UsageError);
  CHECK_THROWS_AS(structural_spec(Study::one, ScoreChoice::EAP), UsageError);
  CHECK(structural_spec(Study::two, ScoreChoice::BB).terms.size() == 3);
  const auto s3 = structural_spec(Study::three, ScoreChoice::EAP);
  CHECK(s3.correlation_targets.size() == 6);
  CHECK_FALSE(s3.estimate_error_variance);
  CHECK(parse_score_choice("RR") == ScoreChoice::RR);
  CHECK(to_string(ScoreChoice::EAP) == "EAP");
}

TEST_CASE("study 1 naive estimates at large n") {
  const auto& d = large(Study::one);
  const Vec bb = initial_estimator(d.Y, true_nu(Study::one), structural_spec(Study::one, ScoreChoice::BB)).phi_hat;
  CHECK(bb[0] == doctest::Approx(0.513).epsilon(0.02));
  CHECK(bb[1] == doctest::Approx(0.861).epsilon(0.02));

  const Vec br = initial_estimator(d.Y, true_nu(Study::one), structural_spec(Study::one, ScoreChoice::BR)).phi_hat;
  CHECK(br[0] == doctest::Approx(0.6).epsilon(0.01));
  const double rb_psi = br[1] / 0.64 - 1.0;
  CHECK(rb_psi > 0.28);
  CHECK(rb_psi < 0.40);
}

TEST_CASE("study 2 covariance target at large n") {
  const auto& d = large(Study::two);
  const Vec phi = initial_estimator(d.Y, true_nu(Study::two), structural_spec(Study::two, ScoreChoice::BB)).phi_hat;
  CHECK(phi.size() == 5);
  CHECK(phi[0] == doctest::Approx(0.30).epsilon(0.04));
}

TEST_CASE("study 3 EAP correlations are attenuated") {
  const auto& d = large(Study::three);
  const Vec phi =
      initial_estimator(d.Y, true_nu(Study::three), structural_spec(Study::three, ScoreChoice::EAP)).phi_hat;
  CHECK(phi.size() == 10);
  for (Index j = 0; j < 6; ++j) {
    CHECK(phi[j] > 0.17);
    CHECK(phi[j] < 0.23);
  }
}

TEST_CASE("true latent variables recover structural truth") {
  for (Study s : {Study::one, Study::two, Study::three}) {
    const auto& d = large(s);
    Mat eta;
    if (s == Study::one) eta = latent_study1(d.U, study_truth(s).values());
    if (s == Study::two) eta = latent_study2(d.U, study_truth(s).values());
    if (s == Study::three) eta = latent_study3(d.U, study_truth(s).values());
    const auto spec = structural_spec(s, s == Study::three ? ScoreChoice::EAP : ScoreChoice::BB);
    const Vec phi = structural_from_scores(eta, spec).phi_hat;
    const Vec truth = study_truth(s).values().tail(study_layout(s).q1());
    for (Index j = 0; j < phi.size(); ++j) CHECK(std::abs(phi[j] - truth[j]) < 0.02);
  }
}

TEST_CASE("stage-1 consistency at large n") {
  const Vec nu1 = nuisance_estimator(large(Study::one).Y, structural_spec(Study::one, ScoreChoice::BB));
  const Vec t1 = true_nu(Study::one);
  for (Index j = 0; j < t1.size(); ++j) CHECK(nu1[j] == doctest::Approx(t1[j]).epsilon(0.03));

  const Vec nu3 = nuisance_estimator(large(Study::three).Y, structural_spec(Study::three, ScoreChoice::EAP));
  const Vec t3 = true_nu(Study::three);
  for (Index j = 0; j < t3.size(); ++j) CHECK(std::abs(nu3[j] - t3[j]) <= 0.05 * std::max(1.0, std::abs(t3[j])));
}

TEST_CASE("estimators are deterministic and row-permutation invariant") {
  const auto U = draw_components(300, study_layout(Study::two).component_layout(300), 5, 5);
  const Dataset Y = generate(Study::two, U, study_truth(Study::two));
  const auto spec = structural_spec(Study::two, ScoreChoice::RR);
  const Vec nu = nuisance_estimator(Y, spec);
  CHECK(nuisance_estimator(Y, spec) == nu);
  const Vec phi = initial_estimator(Y, nu, spec).phi_hat;

  std::vector<Index> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 77, perm.end());
  Dataset P = Y;
  for (Index i = 0; i < 300; ++i) P.values.row(i) = Y.values.row(perm[static_cast<size_t>(i)]);
  const Vec nup = nuisance_estimator(P, spec);
  CHECK((nup - nu).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((initial_estimator(P, nu, spec).phi_hat - phi).cwiseAbs().maxCoeff() < 1e-10);
}
