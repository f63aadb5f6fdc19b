#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tsbc/errors.hpp"
#include "tsbc/linalg.hpp"
#include "tsbc/model.hpp"
#include "tsbc/param_space.hpp"

namespace tsbc {

struct RMConfig {
  int K = 1000;
  double a = 3.0;
  double b = 0.6;
  int mc_per_iter = 1;
  FeasibilitySpec feasibility;
  // Starting point; the target (naive estimate) when unset.
  std::optional<Vec> phi0;
  // Any coordinate beyond this magnitude aborts the run.
  double divergence_limit = 1e6;

  void validate() const;
};

struct RMTrace {
  Mat iterates;  // K x q1, row k-1 holds phi^(k)
  Vec gammas;    // gamma_k = a k^-b
  Vec phi_bc;    // learning-rate weighted average of the second half
  int projections = 0;

  Index completed() const { return iterates.rows(); }
};

// Thrown when the iteration cannot continue; carries the iterates so far.
class RMAborted : public NumericalError {
 public:
  RMAborted(const std::string& what, RMTrace trace) : NumericalError(what), trace_(std::move(trace)) {}
  const RMTrace& trace() const { return trace_; }

 private:
  RMTrace trace_;
};

double learning_rate(int k, double a, double b);

// Solves E[phi_hat(g(U, (nu, phi)); nu)] = target by projected Robbins-Monro.
// Iteration k draws its components from stream (seed, mix("rm", k, j)).
RMTrace robbins_monro(const Vec& target, const Vec& nu, const RMConfig& cfg, const TwoStageModel& model,
                      std::uint64_t seed);

// sum_{k > floor(K/2)} gamma_k phi^(k) / sum_{k > floor(K/2)} gamma_k
Vec weighted_tail_average(const Mat& iterates, const Vec& gammas);
inline Vec weighted_tail_average(const RMTrace& trace) {
  return weighted_tail_average(trace.iterates, trace.gammas);
}

// Columns: k, gamma, then one column per focal parameter.
void write_trace_csv(std::ostream& os, const RMTrace& trace, const std::vector<std::string>& focal_names);

}  // namespace tsbc
