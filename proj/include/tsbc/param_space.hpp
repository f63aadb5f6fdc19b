#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tsbc/linalg.hpp"

namespace tsbc {

inline constexpr double kDefaultFloor = 1e-6;

// Named parameter vector; values finite and names unique.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(Vec values, std::vector<std::string> names);

  const Vec& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  Index size() const { return values_.size(); }

  double operator[](Index i) const { return values_[i]; }
  double at(const std::string& name) const;
  std::optional<Index> find(const std::string& name) const;

 private:
  Vec values_;
  std::vector<std::string> names_;
};

// Splits theta into nuisance parameters (stage 1) and focal parameters (stage 2).
struct ParameterPartition {
  std::vector<Index> nuisance_idx;
  std::vector<Index> focal_idx;
  // Per latent variable index sets; together they cover nuisance_idx exactly.
  std::vector<std::vector<Index>> measurement_blocks;

  Index q0() const { return static_cast<Index>(nuisance_idx.size()); }
  Index q1() const { return static_cast<Index>(focal_idx.size()); }
  Index q() const { return q0() + q1(); }

  // Throws StructuralError unless the partition is valid for a vector of length q.
  void validate(Index q) const;

  // Partition with nuisance = [0, q0) and focal = [q0, q0 + q1).
  static ParameterPartition contiguous(Index q0, Index q1,
                                       std::vector<std::vector<Index>> blocks = {});
};

struct SplitTheta {
  Vec nu;
  Vec phi;
};

SplitTheta split(const Vec& theta, const ParameterPartition& part);
Vec combine(const Vec& nu, const Vec& phi, const ParameterPartition& part);

struct Bound {
  std::optional<double> lower;
  std::optional<double> upper;
};

// Feasible region for the focal vector, expressed in focal coordinates.
struct FeasibilitySpec {
  std::vector<Bound> box_bounds;  // empty, or one entry per focal coordinate
  // Lower-triangle (row-major) entries of a d x d correlation matrix.
  std::optional<std::vector<Index>> corr_block;
  // Slopes tied to corr_block through 1 - b' Phi b >= floor.
  std::optional<std::vector<Index>> slope_block;
  double floor = kDefaultFloor;

  void validate() const;
};

Vec project_box(const Vec& phi, const FeasibilitySpec& spec);

Mat project_corr_psd(const Mat& Phi, double floor = kDefaultFloor);

Vec project_slopes_qp(const Vec& beta, const Mat& Phi, double floor = kDefaultFloor);

// Box, then correlation, then slope projection. Returns true in `changed`
// when any step moved the point.
Vec project(const Vec& phi, const FeasibilitySpec& spec, bool* changed = nullptr);

bool is_feasible(const Vec& phi, const FeasibilitySpec& spec);

// Dimension d with d(d-1)/2 == m; throws when m is not triangular.
Index corr_dim_from_count(Index m);
Mat corr_from_lower(const Vec& lower, Index d);
Vec lower_from_corr(const Mat& Phi);

}  // namespace tsbc
