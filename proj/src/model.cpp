#include "tsbc/model.hpp"

#include "tsbc/errors.hpp"

namespace tsbc {

std::vector<std::string> TwoStageModel::parameter_names() const {
  std::vector<std::string> names;
  const auto& part = partition();
  names.resize(static_cast<size_t>(part.q()));
  for (Index i = 0; i < part.q0(); ++i)
    names[static_cast<size_t>(part.nuisance_idx[static_cast<size_t>(i)])] = "nu" + std::to_string(i + 1);
  for (Index i = 0; i < part.q1(); ++i)
    names[static_cast<size_t>(part.focal_idx[static_cast<size_t>(i)])] = "phi" + std::to_string(i + 1);
  return names;
}

StudyModel::StudyModel(Study study, ScoreChoice scores, Index n)
    : study_(study),
      spec_(structural_spec(study, scores)),
      n_(n),
      partition_(study_layout(study).partition()),
      feasibility_(study_layout(study).feasibility()) {
  if (n < 2) throw UsageError("sample size must be at least 2");
}

RandomComponentLayout StudyModel::layout() const { return study_layout(study_).component_layout(n_); }

Dataset StudyModel::generate(const RandomComponents& U, const Vec& theta) const {
  return tsbc::generate(study_, U, theta);
}

Vec StudyModel::estimate_nuisance(const Dataset& Y) const { return nuisance_estimator(Y, spec_); }

Vec StudyModel::estimate_focal(const Dataset& Y, const Vec& nu) const {
  return initial_estimator(Y, nu, spec_).phi_hat;
}

bool StudyModel::in_domain(const Vec& theta) const { return tsbc::in_domain(study_, theta); }

std::vector<std::string> StudyModel::parameter_names() const {
  return study_layout(study_).parameter_names();
}

FunctionModel::FunctionModel(RandomComponentLayout layout, ParameterPartition partition, Generator gen,
                             NuisanceFn nuisance, FocalFn focal, FeasibilitySpec feasibility,
                             DomainFn domain)
    : layout_(std::move(layout)),
      partition_(std::move(partition)),
      gen_(std::move(gen)),
      nuisance_(std::move(nuisance)),
      focal_(std::move(focal)),
      feasibility_(std::move(feasibility)),
      domain_(std::move(domain)) {
  partition_.validate(partition_.q());
}

RandomComponentLayout normal_layout(Index n, Index m) {
  RandomComponentLayout l;
  l.n = n;
  for (Index j = 0; j < m; ++j) l.columns.push_back({Marginal::std_normal, "u" + std::to_string(j + 1)});
  return l;
}

}  // namespace tsbc
