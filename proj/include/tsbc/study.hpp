#pragma once

#include <string>
#include <vector>

#include "tsbc/linalg.hpp"
#include "tsbc/param_space.hpp"

namespace tsbc {

enum class Study { one = 1, two = 2, three = 3 };

Study study_from_int(int s);
inline int to_int(Study s) { return static_cast<int>(s); }

enum class MeasurementKind { linear, two_pl };
enum class Marginal { std_normal, uniform01 };

struct ComponentColumn {
  Marginal marginal;
  std::string role;
};

struct RandomComponentLayout {
  Index n = 0;
  std::vector<ComponentColumn> columns;
  Index m() const { return static_cast<Index>(columns.size()); }
};

// One latent variable's indicators and where its parameters sit in nu.
// Linear blocks store (loadings, uniquenesses[, factor variance]);
// 2PL blocks store (intercepts, slopes).
struct BlockLayout {
  std::vector<Index> columns;
  MeasurementKind kind = MeasurementKind::linear;
  bool variance_in_nuisance = false;
  Index offset = 0;

  Index items() const { return static_cast<Index>(columns.size()); }
  Index size() const {
    return kind == MeasurementKind::linear ? 2 * items() + (variance_in_nuisance ? 1 : 0)
                                           : 2 * items();
  }
};

// Canonical parameterization of one of the study models: theta = (nu, phi),
// nu ordered block by block, phi ordered (correlations row-major lower
// triangle, slopes, error variance).
struct StudyLayout {
  Study study;
  Index p = 0;
  std::vector<BlockLayout> blocks;
  std::vector<std::string> nuisance_names;
  std::vector<std::string> focal_names;
  std::vector<Marginal> marginals;
  std::vector<std::string> component_roles;

  Index q0() const { return static_cast<Index>(nuisance_names.size()); }
  Index q1() const { return static_cast<Index>(focal_names.size()); }
  Index q() const { return q0() + q1(); }

  std::vector<std::string> parameter_names() const;
  ParameterPartition partition() const;
  RandomComponentLayout component_layout(Index n) const;
  // Feasible region of the focal vector used inside the Robbins-Monro update.
  FeasibilitySpec feasibility() const;
};

const StudyLayout& study_layout(Study s);

// Population values used for data generation in each study.
ParameterVector study_truth(Study s);

// sigma^2 = (1 - rho^2) / rho^2 for a unit loading and communality rho^2.
double uniqueness_for_communality(double communality);

}  // namespace tsbc
