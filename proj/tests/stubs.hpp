#pragma once

#include <functional>

#include "tsbc/model.hpp"

namespace tsbc::testing {

// Data are theta broadcast over n rows plus `noise` times the components.
inline Dataset theta_plus_noise(const RandomComponents& U, const Vec& theta, double noise) {
  Dataset d;
  d.values = U.values * noise;
  for (Index j = 0; j < theta.size() && j < d.values.cols(); ++j) d.values.col(j).array() += theta[j];
  return d;
}

inline Vec column_means(const Dataset& d) { return d.values.colwise().mean().transpose(); }

// Focal estimator fn(theta_hat) applied to the column means, nuisance = its slice of the means.
inline FunctionModel mean_model(Index n, Index q0, Index q1, double noise,
                                std::function<Vec(const Vec& means, const Vec& nu)> focal,
                                FeasibilitySpec feas = {}) {
  return FunctionModel(
      normal_layout(n, q0 + q1), ParameterPartition::contiguous(q0, q1),
      [noise](const RandomComponents& U, const Vec& theta) { return theta_plus_noise(U, theta, noise); },
      [q0](const Dataset& d) { return Vec(column_means(d).head(q0)); },
      [focal](const Dataset& d, const Vec& nu) { return focal(column_means(d), nu); }, std::move(feas));
}

}  // namespace tsbc::testing
