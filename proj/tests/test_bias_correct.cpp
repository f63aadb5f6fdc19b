#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stubs.hpp"
#include "tsbc/bias_correct.hpp"
#include "tsbc/dga.hpp"
#include "tsbc/rng.hpp"
#include "tsbc/structural.hpp"

using namespace tsbc;
using tsbc::testing::mean_model;

namespace {

Vec one(double x) { return Vec::Constant(1, x); }

double sd(const std::vector<double>& x) {
  double m = 0;
  for (double v : x) m += v;
  m /= x.size();
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / (x.size() - 1));
}

}  // namespace

TEST_CASE("learning rate") {
  CHECK(learning_rate(1, 3, 0.6) == 3.0);
  CHECK(learning_rate(4, 3, 0.6) == doctest::Approx(1.3058).epsilon(1e-4));
  for (int k = 1; k < 50; ++k) {
    CHECK(learning_rate(k, 3, .6) > learning_rate(k + 1, 3, .6));
    CHECK(learning_rate(k, 3, .6) > 0);
  }
}

TEST_CASE("weighted tail average") {
  Mat c = Mat::Constant(6, 2, 1.25);
  Vec g(6);
  for (int k = 1; k <= 6; ++k) g[k - 1] = learning_rate(k, 3, .6);
  CHECK(weighted_tail_average(c, g).isApprox(Vec::Constant(2, 1.25)));

  Mat it(4, 1);
  it << 0, 0, 1, 3;
  Vec g4(4);
  for (int k = 1; k <= 4; ++k) g4[k - 1] = learning_rate(k, 1, 1);
  CHECK(weighted_tail_average(it, g4)[0] == doctest::Approx(13.0 / 7.0).epsilon(1e-14));
}

TEST_CASE("config validation") {
  RMConfig c;
  c.b = 0.5;
  CHECK_THROWS(c.validate());
  c = RMConfig{};
  c.K = 1;
  CHECK_THROWS(c.validate());
  c = RMConfig{};
  c.a = 0;
  CHECK_THROWS(c.validate());
  c = RMConfig{};
  c.mc_per_iter = 0;
  CHECK_THROWS(c.validate());
  CHECK_NOTHROW(RMConfig{}.validate());
}

TEST_CASE("attenuation stub converges to the fixed point") {
  const auto model = mean_model(1, 0, 1, 0.0, [](const Vec& m, const Vec&) { return Vec(0.8 * m); });
  const auto trace = robbins_monro(one(0.48), Vec(), RMConfig{}, model, 1);
  CHECK(trace.completed() == 1000);
  CHECK(std::abs(trace.phi_bc[0] - 0.6) < 1e-3);
}

TEST_CASE("unbiased noiseless stub stays at the target") {
  const auto model = mean_model(1, 0, 1, 0.0, [](const Vec& m, const Vec&) { return m; });
  RMConfig cfg;
  cfg.K = 50;
  const auto trace = robbins_monro(one(0.37), Vec(), cfg, model, 1);
  CHECK((trace.iterates.array() == 0.37).all());
}

TEST_CASE("traces are deterministic and feasible") {
  FeasibilitySpec feas;
  feas.box_bounds = {Bound{0.1, 0.5}};
  const auto model = mean_model(5, 1, 1, 1.0, [](const Vec& m, const Vec& nu) { return Vec(one(m[1] + 0.2 * nu[0])); }, feas);
  RMConfig cfg;
  cfg.K = 300;
  cfg.feasibility = feas;
  cfg.phi0 = one(0.3);
  const auto a = robbins_monro(one(0.45), one(1.0), cfg, model, 42);
  const auto b = robbins_monro(one(0.45), one(1.0), cfg, model, 42);
  CHECK(a.iterates == b.iterates);
  CHECK(a.iterates.minCoeff() >= 0.1);
  CHECK(a.iterates.maxCoeff() <= 0.5);
  CHECK(a.projections > 0);
  const auto c = robbins_monro(one(0.45), one(1.0), cfg, model, 43);
  CHECK(c.iterates != a.iterates);
}

TEST_CASE("multi-draw averaging reduces the spread") {
  const auto model = mean_model(1, 0, 1, 1.0, [](const Vec& m, const Vec&) { return m; });
  std::vector<double> single, multi;
  for (std::uint64_t s = 0; s < 40; ++s) {
    RMConfig cfg;
    cfg.K = 200;
    single.push_back(robbins_monro(one(0), Vec(), cfg, model, s).phi_bc[0]);
    cfg.mc_per_iter = 8;
    multi.push_back(robbins_monro(one(0), Vec(), cfg, model, s).phi_bc[0]);
  }
  CHECK(sd(multi) < 0.6 * sd(single));
}

TEST_CASE("tail-average spread shrinks with K") {
  const auto model = mean_model(1, 0, 1, 1.0, [](const Vec& m, const Vec&) { return Vec(0.5 * m.array() + 0.1); });
  std::vector<double> small, large;
  for (std::uint64_t s = 0; s < 60; ++s) {
    RMConfig cfg;
    cfg.K = 500;
    small.push_back(robbins_monro(one(0.3), Vec(), cfg, model, s).phi_bc[0]);
    cfg.K = 2000;
    large.push_back(robbins_monro(one(0.3), Vec(), cfg, model, s).phi_bc[0]);
  }
  CHECK(sd(large) / sd(small) < 0.8);
}

TEST_CASE("divergence aborts with the partial trace") {
  const auto model = mean_model(1, 0, 1, 0.0, [](const Vec& m, const Vec&) { return Vec(-m); });
  RMConfig cfg;
  cfg.phi0 = one(1.0);
  try {
    robbins_monro(one(0.0), Vec(), cfg, model, 1);
    FAIL("expected RMAborted");
  } catch (const RMAborted& e) {
    CHECK(e.trace().completed() > 0);
    CHECK(e.trace().completed() < 1000);
    CHECK(e.trace().iterates.cwiseAbs().maxCoeff() <= 1e6);
  }
}

TEST_CASE("estimator failure aborts with RMAborted") {
  const auto model = mean_model(1, 0, 1, 0.0, [](const Vec& m, const Vec&) -> Vec {
    if (m[0] > 2.0) throw NumericalError("stub failure");
    return m * 0.5;
  });
  CHECK_THROWS_AS(robbins_monro(one(1.5), Vec(), RMConfig{}, model, 1), RMAborted);
}

TEST_CASE("self-consistency at the study 1 truth") {
  const StudyModel model(Study::one, ScoreChoice::BB, 500);
  const auto& L = study_layout(Study::one);
  const Vec theta = study_truth(Study::one).values();
  const Vec nu = theta.head(L.q0());
  Vec target = Vec::Zero(2);
  const int draws = 200;
  for (int m = 0; m < draws; ++m) {
    const auto U = draw_components(500, model.layout(), 777, static_cast<std::uint64_t>(m));
    target += model.estimate_focal(model.generate(U, theta), nu);
  }
  target /= draws;
  RMConfig cfg;
  cfg.feasibility = model.feasibility();
  const auto trace = robbins_monro(target, nu, cfg, model, 5);
  CHECK(trace.phi_bc[0] == doctest::Approx(0.6).epsilon(0.025));
  CHECK(trace.phi_bc[1] == doctest::Approx(0.64).epsilon(0.025));
}

TEST_CASE("trace CSV") {
  const auto model = mean_model(1, 0, 1, 0.0, [](const Vec& m, const Vec&) { return Vec(0.8 * m); });
  RMConfig cfg;
  cfg.K = 3;
  const auto trace = robbins_monro(one(0.48), Vec(), cfg, model, 1);
  std::ostringstream os;
  write_trace_csv(os, trace, {"beta"});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "k,gamma,beta");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3);
}
