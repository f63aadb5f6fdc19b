#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "stubs.hpp"
#include "tsbc/acm.hpp"
#include "tsbc/errors.hpp"

using namespace tsbc;
using tsbc::testing::mean_model;
using tsbc::testing::theta_plus_noise;

namespace {

// Deterministic stub whose data are theta itself (one row, no noise).
FunctionModel map_model(Index q0, Index q1, std::function<Vec(const Vec&)> f) {
  return mean_model(1, q0, q1, 0.0, [f, q0](const Vec& m, const Vec& nu) {
    Vec theta = m;
    theta.head(q0) = nu;
    return f(theta);
  });
}

ACMConfig cfg(int M, double delta, std::vector<std::vector<Index>> blocks = {}) {
  ACMConfig c;
  c.M = M;
  c.delta = delta;
  c.blocks = std::move(blocks);
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("delta matrix examples") {
  Mat J(1, 1);
  J << 2;
  CHECK(delta_matrix(J, 0)(0, 0) == 0.5);

  Mat K(1, 2);
  K << 1, 2;
  const Mat D = delta_matrix(K, 1);
  CHECK(D(0, 0) == -0.5);
  CHECK(D(0, 1) == 0.5);

  Mat I(2, 5);
  I.setZero();
  I.rightCols(2).setIdentity();
  const Mat E = delta_matrix(I, 3);
  CHECK(E.leftCols(3).isZero(0));
  CHECK(E.rightCols(2).isIdentity(0));

  Mat S(2, 3);
  S << 1, 1, 2, 0, 2, 4;
  CHECK_THROWS_AS(delta_matrix(S, 1), InferenceError);
}

TEST_CASE("sandwich examples") {
  Mat D(1, 1);
  D << 0.5;
  Mat O(1, 1);
  O << 0.04;
  const auto [S, se] = sandwich(D, O);
  CHECK(S(0, 0) == doctest::Approx(0.01));
  CHECK(se[0] == doctest::Approx(0.1));

  Mat A = Mat::Random(4, 4);
  const Mat omega = A * A.transpose();
  Mat D2 = Mat::Zero(2, 4);
  D2.rightCols(2).setIdentity();
  const auto [S2, se2] = sandwich(D2, omega);
  CHECK(S2.isApprox(omega.bottomRightCorner(2, 2)));

  const Mat Dr = Mat::Random(3, 4);
  const auto [S3, se3] = sandwich(Dr, omega);
  CHECK((S3 - S3.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(Eigen::SelfAdjointEigenSolver<Mat>(S3).eigenvalues().minCoeff() >= -1e-10);
  for (Index i = 0; i < 3; ++i) CHECK(se3[i] == doctest::Approx(std::sqrt(S3(i, i))));

  Mat neg(1, 1);
  neg << -1;
  CHECK_THROWS_AS(sandwich(D, neg), InferenceError);
}

TEST_CASE("bootstrap covariance") {
  const auto det = map_model(1, 1, [](const Vec& t) { return Vec(t.tail(1) * 2); });
  CHECK(bootstrap_omega((Vec(2) << 1, 2).finished(), cfg(50, 1e-3), det).isZero(0));

  const auto mean = mean_model(100, 0, 1, 1.0, [](const Vec& m, const Vec&) { return m; });
  const Mat om = bootstrap_omega(Vec::Zero(1), cfg(1000, 1e-3), mean);
  CHECK(om(0, 0) == doctest::Approx(0.01).epsilon(0.15));
  CHECK((om - om.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("SP is exact on linear maps") {
  Mat A(2, 4);
  A << 1, -2, 0.5, 3, 0.25, 4, -1, 2;
  const auto lin = map_model(2, 2, [A](const Vec& t) { return Vec(A * t); });
  const Vec theta = (Vec(4) << 0.3, -0.7, 1.1, 0.2).finished();
  // One coordinate per block: no sign cross terms, exact for every delta.
  for (double delta : {1e-3, 0.1, 1.0})
    for (int M : {2, 7})
      CHECK((sp_jacobian(theta, cfg(M, delta, equal_blocks(4, 4)), lin) - A).cwiseAbs().maxCoeff() < 1e-9);

  // Whole-vector perturbation: no delta bias, so the estimate does not depend
  // on delta, and the zero-mean sign cross terms average out over M.
  const Mat j1 = sp_jacobian(theta, cfg(7, 1e-3), lin);
  const Mat j2 = sp_jacobian(theta, cfg(7, 1.0), lin);
  CHECK((j1 - j2).cwiseAbs().maxCoeff() < 1e-9);
  const double e_small = (sp_jacobian(theta, cfg(100, 0.1), lin) - A).cwiseAbs().maxCoeff();
  const double e_large = (sp_jacobian(theta, cfg(10000, 0.1), lin) - A).cwiseAbs().maxCoeff();
  CHECK(e_large < 0.1);
  CHECK(e_large < e_small);
}

TEST_CASE("SP on smooth scalar stubs") {
  const auto sq = map_model(0, 1, [](const Vec& t) { return Vec(t.array().square()); });
  CHECK(sp_jacobian(Vec::Ones(1), cfg(2, 0.01), sq)(0, 0) == doctest::Approx(2.0).epsilon(1e-12));

  // ((1+d)^3 - (1-d)^3) / 2d = 3 + d^2
  const auto cube = map_model(0, 1, [](const Vec& t) { return Vec(t.array().cube()); });
  const double e1 = sp_jacobian(Vec::Ones(1), cfg(2, 0.02), cube)(0, 0) - 3.0;
  const double e2 = sp_jacobian(Vec::Ones(1), cfg(2, 0.01), cube)(0, 0) - 3.0;
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("blockwise SP with one block per coordinate is the central difference") {
  auto f = [](const Vec& t) {
    Vec out(2);
    out[0] = std::sin(t[0]) * t[2] + t[1] * t[1];
    out[1] = std::exp(0.3 * t[1]) + t[0] * t[2] * t[2];
    return out;
  };
  const auto model = map_model(1, 2, f);
  const Vec theta = (Vec(3) << 0.4, -0.3, 0.9).finished();
  const double d = 0.01;
  Mat cd(2, 3);
  for (Index j = 0; j < 3; ++j) {
    Vec tp = theta, tm = theta;
    tp[j] += d;
    tm[j] -= d;
    cd.col(j) = (f(tp) - f(tm)) / (2 * d);
  }
  const Mat sp = sp_jacobian(theta, cfg(5, d, equal_blocks(3, 3)), model);
  CHECK((sp - cd).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("common random numbers within SP pairs") {
  // Noisy data but an estimator linear in theta: the noise cancels only when
  // both evaluations of a pair share the same components.
  const auto noisy = mean_model(10, 0, 1, 1.0, [](const Vec& m, const Vec&) { return Vec(3.0 * m); });
  const Mat J = sp_jacobian(Vec::Zero(1), cfg(3, 1e-4), noisy);
  CHECK(J(0, 0) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("perturbation shrinks to stay in the domain") {
  auto base = map_model(0, 1, [](const Vec& t) { return Vec(t.array().square()); });
  FunctionModel bounded(base.layout(), base.partition(),
                        [](const RandomComponents& U, const Vec& t) { return theta_plus_noise(U, t, 0.0); },
                        [](const Dataset&) { return Vec(); },
                        [](const Dataset& d, const Vec&) { return Vec(d.values.colwise().mean().transpose().array().square()); },
                        {}, [](const Vec& t) { return t[0] > 0; });
  const Mat J = sp_jacobian(Vec::Constant(1, 0.05), cfg(2, 0.5), bounded);
  CHECK(J(0, 0) == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("failed replications are skipped up to the limit") {
  auto failing = [](double rate) {
    return FunctionModel(
        normal_layout(1, 1), ParameterPartition::contiguous(0, 1),
        [](const RandomComponents& U, const Vec& t) { return theta_plus_noise(U, t, 1.0); },
        [](const Dataset&) { return Vec(); },
        [rate](const Dataset& d, const Vec&) -> Vec {
          const double u = 0.5 * std::erfc(-d.values(0, 0) / std::sqrt(2.0));
          if (u < rate) throw NumericalError("stub failure");
          return Vec(d.values.row(0).transpose());
        });
  };
  const auto ok = compute_acm(Vec::Zero(1), cfg(400, 1e-3), failing(0.02));
  CHECK(ok.skipped > 0);
  CHECK(ok.skipped + ok.used == 400);
  CHECK_THROWS_AS(compute_acm(Vec::Zero(1), cfg(400, 1e-3), failing(0.2)), InferenceError);
}

TEST_CASE("full ACM on a linear Gaussian stub") {
  // phi_hat = 0.5 * (mean of column 1) + mean of column 0, with nu_hat = mean of column 0.
  const auto model = mean_model(50, 1, 1, 1.0, [](const Vec& m, const Vec& nu) {
    return Vec::Constant(1, 0.5 * m[1] + nu[0]);
  });
  ACMConfig c = cfg(2000, 1e-3, equal_blocks(2, 2));
  c.workers = 3;
  const auto r = compute_acm((Vec(2) << 0.2, 0.4).finished(), c, model);
  CHECK(r.jacobian(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.jacobian(0, 1) == doctest::Approx(0.5).epsilon(1e-9));
  // Delta = (-2, 2), so the corrected estimator is the column-1 mean with variance 1/50.
  CHECK(r.delta_mat(0, 0) == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(r.sandwich(0, 0) == doctest::Approx(1.0 / 50.0).epsilon(0.1));

  ACMConfig serial = c;
  serial.workers = 1;
  const auto s = compute_acm((Vec(2) << 0.2, 0.4).finished(), serial, model);
  CHECK(s.omega_hat == r.omega_hat);
  CHECK(s.jacobian == r.jacobian);

  const auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["omega_hat"]["rows"] == 2);
  CHECK(j["jacobian"]["cols"] == 2);
  CHECK(j["ses"].size() == 1);
}

TEST_CASE("config and block helpers") {
  const auto b = equal_blocks(90, 15);
  CHECK(b.size() == 15);
  for (const auto& x : b) CHECK(x.size() == 6);
  CHECK(b[14].back() == 89);
  ACMConfig c;
  c.blocks = {{0, 1}, {1, 2}};
  CHECK_THROWS_AS(c.validate(3), UsageError);
  c.blocks = {{0, 2}, {1}};
  CHECK_NOTHROW(c.validate(3));
  c.M = 1;
  CHECK_THROWS_AS(c.validate(3), UsageError);
}
