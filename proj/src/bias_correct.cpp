#include "tsbc/bias_correct.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "tsbc/rng.hpp"

namespace tsbc {

void RMConfig::validate() const {
  if (K < 2) throw UsageError("RM iteration budget K must be at least 2");
  if (!(a > 0)) throw UsageError("RM learning-rate multiplier a must be positive");
  if (!(b > 0.5 && b <= 1.0)) throw UsageError("RM decay exponent b must lie in (0.5, 1]");
  if (mc_per_iter < 1) throw UsageError("RM draws per iteration must be at least 1");
  feasibility.validate();
}

double learning_rate(int k, double a, double b) {
  if (k < 1) throw StructuralError("learning_rate: k must be at least 1");
  return a * std::pow(static_cast<double>(k), -b);
}

Vec weighted_tail_average(const Mat& iterates, const Vec& gammas) {
  const Index K = iterates.rows();
  if (K < 2) throw StructuralError("weighted_tail_average needs at least two iterates");
  Vec num = Vec::Zero(iterates.cols());
  double den = 0.0;
  for (Index k = K / 2 + 1; k <= K; ++k) {
    num += gammas[k - 1] * iterates.row(k - 1).transpose();
    den += gammas[k - 1];
  }
  return num / den;
}

RMTrace robbins_monro(const Vec& target, const Vec& nu, const RMConfig& cfg, const TwoStageModel& model,
                      std::uint64_t seed) {
  cfg.validate();
  const auto& part = model.partition();
  if (target.size() != part.q1() || nu.size() != part.q0())
    throw StructuralError("robbins_monro: target/nu lengths do not match the model partition");
  if (!target.allFinite()) throw NumericalError("robbins_monro: non-finite target");

  Vec phi = cfg.phi0 ? *cfg.phi0 : target;
  if (phi.size() != part.q1()) throw StructuralError("robbins_monro: phi0 has the wrong length");
  phi = project(phi, cfg.feasibility);

  RMTrace trace;
  trace.iterates.resize(cfg.K, part.q1());
  trace.gammas.resize(cfg.K);
  const auto layout = model.layout();
  const std::uint64_t rm = rng::label("rm");

  auto abort = [&](const std::string& why, int done) {
    RMTrace partial;
    partial.iterates = trace.iterates.topRows(done);
    partial.gammas = trace.gammas.head(done);
    partial.projections = trace.projections;
    throw RMAborted(why, std::move(partial));
  };

  for (int k = 1; k <= cfg.K; ++k) {
    const double gamma = learning_rate(k, cfg.a, cfg.b);
    Vec h = Vec::Zero(part.q1());
    try {
      const Vec theta = combine(nu, phi, part);
      for (int j = 0; j < cfg.mc_per_iter; ++j) {
        const auto U = draw_components(layout.n, layout, seed,
                                       rng::mix({rm, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j)}));
        h += model.estimate_focal(model.generate(U, theta), nu);
      }
    } catch (const Error& e) {
      std::ostringstream os;
      os << "Robbins-Monro aborted at iteration " << k << ": " << e.what();
      abort(os.str(), k - 1);
    }
    h /= static_cast<double>(cfg.mc_per_iter);

    bool changed = false;
    phi = project(phi - gamma * (h - target), cfg.feasibility, &changed);
    if (changed) ++trace.projections;
    if (!phi.allFinite() || phi.cwiseAbs().maxCoeff() > cfg.divergence_limit) {
      std::ostringstream os;
      os << "Robbins-Monro diverged at iteration " << k << " (max |phi| = " << phi.cwiseAbs().maxCoeff() << ")";
      abort(os.str(), k - 1);
    }
    trace.iterates.row(k - 1) = phi.transpose();
    trace.gammas[k - 1] = gamma;
  }
  trace.phi_bc = weighted_tail_average(trace);
  return trace;
}

void write_trace_csv(std::ostream& os, const RMTrace& trace, const std::vector<std::string>& focal_names) {
  os << "k,gamma";
  for (const auto& n : focal_names) os << ',' << n;
  os << '\n' << std::setprecision(17);
  for (Index k = 0; k < trace.iterates.rows(); ++k) {
    os << (k + 1) << ',' << trace.gammas[k];
    for (Index j = 0; j < trace.iterates.cols(); ++j) os << ',' << trace.iterates(k, j);
    os << '\n';
  }
}

}  // namespace tsbc
