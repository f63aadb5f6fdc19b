#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsbc/linalg.hpp"
#include "tsbc/model.hpp"
#include "tsbc/param_space.hpp"

namespace tsbc {

struct ACMConfig {
  int M = 1000;
  double delta = 1e-6;
  // Partition of {0..q-1}; empty means a single block.
  std::vector<std::vector<Index>> blocks;
  std::uint64_t seed = 0;
  int workers = 1;
  double max_skip_fraction = 0.05;

  void validate(Index q) const;
};

struct ACMResult {
  Mat omega_hat;  // q x q, finite-sample covariance of (nu_hat, phi_hat)
  Mat jacobian;   // q1 x q, columns in theta order
  Mat delta_mat;  // q1 x q
  Mat sandwich;   // q1 x q1
  Vec ses;
  int used = 0;
  int skipped = 0;
  int delta_shrinks = 0;
};

// `blocks` consecutive index blocks over {0..q-1}, sizes differing by at most one.
std::vector<std::vector<Index>> equal_blocks(Index q, Index blocks);

// Replication m draws its components from stream mix("acm", m) and the
// Rademacher signs of block b from mix("rademacher", m, b).
Mat bootstrap_omega(const Vec& theta, const ACMConfig& cfg, const TwoStageModel& model);
Mat sp_jacobian(const Vec& theta, const ACMConfig& cfg, const TwoStageModel& model);

// Both stages in one pass over m with shared components.
ACMResult compute_acm(const Vec& theta, const ACMConfig& cfg, const TwoStageModel& model);

// [-(J_phi)^-1 J_nu : (J_phi)^-1], laid out in theta order.
Mat delta_matrix(const Mat& jacobian, const ParameterPartition& part);
Mat delta_matrix(const Mat& jacobian, Index q0);

std::pair<Mat, Vec> sandwich(const Mat& delta_mat, const Mat& omega_hat);

std::string to_json(const ACMResult& r, int indent = 2);

}  // namespace tsbc
