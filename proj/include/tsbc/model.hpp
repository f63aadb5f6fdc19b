#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tsbc/dga.hpp"
#include "tsbc/param_space.hpp"
#include "tsbc/structural.hpp"

namespace tsbc {

// A data-generating algorithm g(U, theta) paired with a two-stage estimator:
// nu_hat(Y) for the nuisance block and phi_hat(Y; nu) for the focal block.
class TwoStageModel {
 public:
  virtual ~TwoStageModel() = default;

  virtual RandomComponentLayout layout() const = 0;
  virtual const ParameterPartition& partition() const = 0;
  virtual const FeasibilitySpec& feasibility() const = 0;

  virtual Dataset generate(const RandomComponents& U, const Vec& theta) const = 0;
  virtual Vec estimate_nuisance(const Dataset& Y) const = 0;
  virtual Vec estimate_focal(const Dataset& Y, const Vec& nu) const = 0;

  virtual bool in_domain(const Vec& /*theta*/) const { return true; }
  virtual std::vector<std::string> parameter_names() const;
};

class StudyModel final : public TwoStageModel {
 public:
  StudyModel(Study study, ScoreChoice scores, Index n);

  RandomComponentLayout layout() const override;
  const ParameterPartition& partition() const override { return partition_; }
  const FeasibilitySpec& feasibility() const override { return feasibility_; }

  Dataset generate(const RandomComponents& U, const Vec& theta) const override;
  Vec estimate_nuisance(const Dataset& Y) const override;
  Vec estimate_focal(const Dataset& Y, const Vec& nu) const override;
  bool in_domain(const Vec& theta) const override;
  std::vector<std::string> parameter_names() const override;

  Study study() const { return study_; }
  const StructuralSpec& spec() const { return spec_; }
  Index n() const { return n_; }

 private:
  Study study_;
  StructuralSpec spec_;
  Index n_;
  ParameterPartition partition_;
  FeasibilitySpec feasibility_;
};

// Model assembled from callables; used for stubs and user-defined estimators.
class FunctionModel final : public TwoStageModel {
 public:
  using Generator = std::function<Dataset(const RandomComponents&, const Vec&)>;
  using NuisanceFn = std::function<Vec(const Dataset&)>;
  using FocalFn = std::function<Vec(const Dataset&, const Vec&)>;
  using DomainFn = std::function<bool(const Vec&)>;

  FunctionModel(RandomComponentLayout layout, ParameterPartition partition, Generator gen,
                NuisanceFn nuisance, FocalFn focal, FeasibilitySpec feasibility = {},
                DomainFn domain = {});

  RandomComponentLayout layout() const override { return layout_; }
  const ParameterPartition& partition() const override { return partition_; }
  const FeasibilitySpec& feasibility() const override { return feasibility_; }
  Dataset generate(const RandomComponents& U, const Vec& theta) const override { return gen_(U, theta); }
  Vec estimate_nuisance(const Dataset& Y) const override { return nuisance_(Y); }
  Vec estimate_focal(const Dataset& Y, const Vec& nu) const override { return focal_(Y, nu); }
  bool in_domain(const Vec& theta) const override { return domain_ ? domain_(theta) : true; }

 private:
  RandomComponentLayout layout_;
  ParameterPartition partition_;
  Generator gen_;
  NuisanceFn nuisance_;
  FocalFn focal_;
  FeasibilitySpec feasibility_;
  DomainFn domain_;
};

// Layout with `m` standard-normal columns and `n` rows.
RandomComponentLayout normal_layout(Index n, Index m);

}  // namespace tsbc
