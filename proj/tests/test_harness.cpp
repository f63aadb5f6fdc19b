#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "tsbc/errors.hpp"
#include "tsbc/harness.hpp"

using namespace tsbc;

namespace {

ReplicationRecord rec(int rep, const std::string& param, double est, std::optional<double> se = std::nullopt) {
  ReplicationRecord r;
  r.rep = rep;
  r.method = "FSR(BB)";
  r.param = param;
  r.estimate = est;
  r.se = se;
  return r;
}

ParameterVector truth1(double v) { return ParameterVector(Vec::Constant(1, v), {"beta"}); }

std::string slurp(const std::string& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

StudyConfig quick(Study s, int reps, int K) {
  StudyConfig c = default_config(s);
  c.reps = reps;
  c.rm.K = K;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("aggregate examples") {
  const auto t = aggregate({rec(1, "beta", .5), rec(2, "beta", .7)}, truth1(.6));
  REQUIRE(t.size() == 1);
  CHECK(std::abs(t[0].rb) < 1e-15);
  CHECK(t[0].ese == doctest::Approx(std::sqrt(0.02)));
  CHECK(t[0].reps == 2);
  CHECK_FALSE(t[0].rbse.has_value());

  const double ese = std::sqrt(0.02);
  const auto u = aggregate({rec(1, "beta", .5, ese), rec(2, "beta", .7, ese)}, truth1(.6));
  REQUIRE(u[0].rbse.has_value());
  CHECK(std::abs(*u[0].rbse) < 1e-12);

  const auto z = aggregate({rec(1, "beta", .1), rec(2, "beta", .3)}, truth1(0));
  CHECK(z[0].absolute_bias);
  CHECK(z[0].rb == doctest::Approx(0.2));

  const auto f = aggregate({rec(1, "beta", .5), rec(2, "beta", NAN), rec(3, "beta", .7)}, truth1(.6));
  CHECK(f[0].reps == 2);

  CHECK_THROWS_AS(aggregate({rec(1, "gamma", .5)}, truth1(.6)), DataError);
}

TEST_CASE("records and summary CSV round trip") {
  std::vector<ReplicationRecord> rs = {rec(1, "beta", 0.1 + 0.2, 0.0123456789012345678), rec(2, "beta", -1e-300)};
  rs[1].flags = "projections=3;acm_skipped=0";
  rs[0].runtime_ms = 17;
  std::stringstream ss;
  write_records_csv(ss, rs);
  const auto back = read_records_csv(ss);
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(same_result(back[i], rs[i]));
    CHECK(back[i].runtime_ms == rs[i].runtime_ms);
  }

  const auto table = aggregate(rs, truth1(.6));
  std::stringstream ts;
  write_summary_csv(ts, table);
  const auto tb = read_summary_csv(ts);
  CHECK(tb[0].rb == table[0].rb);
  CHECK(tb[0].ese == table[0].ese);

  std::stringstream bad("rep,method\n");
  CHECK_THROWS_AS(read_records_csv(bad), DataError);
}

TEST_CASE("shipped truth fixtures match the study truth") {
  for (int s = 1; s <= 3; ++s) {
    const auto fx = truth_from_json(slurp(std::string(TSBC_FIXTURE_DIR) + "/truth_study" + std::to_string(s) + ".json"));
    const auto t = study_truth(study_from_int(s));
    CHECK(fx.names() == t.names());
    CHECK(fx.values() == t.values());
  }
}

TEST_CASE("config validation and JSON parsing") {
  StudyConfig c = default_config(Study::one);
  c.n = 49;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = default_config(Study::one);
  c.reps = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = default_config(Study::two);
  c.scores = {ScoreChoice::BR};
  CHECK_THROWS_AS(c.validate(), UsageError);

  const auto j = study_config_from_json(
      R"({"study": 2, "n": 300, "reps": 7, "seed": 5, "scores": ["MM", "RR"], "methods": ["bc"],
          "rm": {"K": 20}, "acm": {"M": 30, "delta": 0.001}})");
  CHECK(j.study == Study::two);
  CHECK(j.n == 300);
  CHECK(j.scores.size() == 2);
  CHECK_FALSE(j.run_fsr);
  CHECK(j.rm.K == 20);
  CHECK(j.acm.M == 30);

  const auto d3 = study_config_from_json(R"({"study": 3})");
  CHECK(d3.acm.delta == 0.005);
  CHECK(d3.acm.blocks.size() == 15);

  auto message = [](const std::string& text) {
    try {
      study_config_from_json(text);
    } catch (const UsageError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"n": "big"})").find("'n'") != std::string::npos);
  CHECK(message(R"({"colour": 1})").find("'colour'") != std::string::npos);
  CHECK(message(R"({"reps": 0})").find("'reps'") != std::string::npos);
  CHECK(message(R"({"scores": "XX"})").find("'scores'") != std::string::npos);
  CHECK(message("{").find("JSON") != std::string::npos);
}

TEST_CASE("replications are deterministic") {
  auto c = quick(Study::one, 1, 30);
  c.scores = {ScoreChoice::BB, ScoreChoice::BR};
  c.compute_se = true;
  c.acm.M = 20;
  const auto a = run_replication(c, 3);
  const auto b = run_replication(c, 3);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() == 8);
  for (size_t i = 0; i < a.size(); ++i) CHECK(same_result(a[i], b[i]));
  for (const auto& r : a) {
    if (r.method.rfind("BC", 0) == 0) CHECK(r.se.has_value());
    if (r.method == "FSR(BR)") CHECK(r.se.has_value() == (r.param == "beta"));
    if (r.method == "FSR(BB)") CHECK_FALSE(r.se.has_value());
  }
  const auto other = run_replication(c, 4);
  CHECK(other[0].estimate != a[0].estimate);
}

TEST_CASE("mean scores attenuate the study 1 slope") {
  auto c = quick(Study::one, 40, 2);
  c.scores = {ScoreChoice::MM};
  c.run_bc = false;
  const auto recs = run_study(c);
  int below = 0, total = 0;
  for (const auto& r : recs)
    if (r.param == "beta") {
      ++total;
      if (r.estimate < 0.6) ++below;
    }
  CHECK(total == 40);
  CHECK(below >= 39);
}

TEST_CASE("study 2 correction yields five focal estimates per replication") {
  auto c = quick(Study::two, 2, 20);
  c.run_fsr = false;
  const auto recs = run_study(c);
  CHECK(recs.size() == 10);
  for (const auto& r : recs) {
    CHECK(r.method == "BC(BB)");
    CHECK(std::isfinite(r.estimate));
  }
}

TEST_CASE("worker count does not change results") {
  auto c = quick(Study::one, 6, 40);
  c.scores = {ScoreChoice::RR};
  c.workers = 1;
  const auto a = run_study(c);
  c.workers = 4;
  const auto b = run_study(c);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(same_result(a[i], b[i]));
}

TEST_CASE("Monte Carlo error of RB shrinks with more replications") {
  auto c = quick(Study::one, 200, 2);
  c.scores = {ScoreChoice::BB};
  c.run_bc = false;
  const auto recs = run_study(c);
  std::vector<ReplicationRecord> first;
  for (const auto& r : recs)
    if (r.rep <= 100) first.push_back(r);
  const auto truth = study_truth(Study::one);
  const auto t100 = find_row(aggregate(first, truth), "FSR(BB)", "beta");
  const auto t200 = find_row(aggregate(recs, truth), "FSR(BB)", "beta");
  const double mcse100 = t100->ese / (0.6 * std::sqrt(100.0));
  const double mcse200 = t200->ese / (0.6 * std::sqrt(200.0));
  CHECK(mcse200 < 0.9 * mcse100);
}
