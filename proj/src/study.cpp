#include "tsbc/study.hpp"

#include "tsbc/errors.hpp"

namespace tsbc {
namespace {

std::string idx_name(const std::string& stem, Index j) { return stem + std::to_string(j); }

void add_linear_block(StudyLayout& L, Index first_col, Index items, bool with_variance,
                      const std::string& variance_name) {
  BlockLayout b;
  b.kind = MeasurementKind::linear;
  b.variance_in_nuisance = with_variance;
  b.offset = L.q0();
  for (Index j = 0; j < items; ++j) b.columns.push_back(first_col + j);
  for (Index j = 0; j < items; ++j) L.nuisance_names.push_back(idx_name("lambda", first_col + j + 1));
  for (Index j = 0; j < items; ++j) L.nuisance_names.push_back(idx_name("sigma2_", first_col + j + 1));
  if (with_variance) L.nuisance_names.push_back(variance_name);
  L.blocks.push_back(std::move(b));
}

void add_2pl_block(StudyLayout& L, Index first_col, Index items) {
  BlockLayout b;
  b.kind = MeasurementKind::two_pl;
  b.offset = L.q0();
  for (Index j = 0; j < items; ++j) b.columns.push_back(first_col + j);
  for (Index j = 0; j < items; ++j) L.nuisance_names.push_back(idx_name("alpha", first_col + j + 1));
  for (Index j = 0; j < items; ++j) L.nuisance_names.push_back(idx_name("gamma", first_col + j + 1));
  L.blocks.push_back(std::move(b));
}

StudyLayout make_study1() {
  StudyLayout L;
  L.study = Study::one;
  L.p = 10;
  add_linear_block(L, 0, 5, true, "phi");
  add_linear_block(L, 5, 5, false, "");
  L.focal_names = {"beta", "psi"};
  L.marginals.assign(12, Marginal::std_normal);
  L.component_roles = {"eta1", "zeta2"};
  for (int j = 1; j <= 10; ++j) L.component_roles.push_back("eps" + std::to_string(j));
  return L;
}

StudyLayout make_study2() {
  StudyLayout L;
  L.study = Study::two;
  L.p = 15;
  add_linear_block(L, 0, 5, true, "phi11");
  add_linear_block(L, 5, 5, true, "phi22");
  add_linear_block(L, 10, 5, false, "");
  L.focal_names = {"phi21", "beta1", "beta2", "beta3", "psi"};
  L.marginals.assign(18, Marginal::std_normal);
  L.component_roles = {"u1", "u2", "zeta3"};
  for (int j = 1; j <= 15; ++j) L.component_roles.push_back("eps" + std::to_string(j));
  return L;
}

StudyLayout make_study3() {
  StudyLayout L;
  L.study = Study::three;
  L.p = 40;
  for (Index b = 0; b < 5; ++b) add_2pl_block(L, 8 * b, 8);
  L.focal_names = {"phi21", "phi31", "phi32", "phi41", "phi42", "phi43",
                   "beta1", "beta2", "beta3", "beta4"};
  L.marginals.assign(5, Marginal::std_normal);
  L.marginals.insert(L.marginals.end(), 40, Marginal::uniform01);
  L.component_roles = {"u1", "u2", "u3", "u4", "zeta5"};
  for (int j = 1; j <= 40; ++j) L.component_roles.push_back("v" + std::to_string(j));
  return L;
}

}  // namespace

Study study_from_int(int s) {
  if (s < 1 || s > 3) throw UsageError("study must be 1, 2 or 3 (got " + std::to_string(s) + ")");
  return static_cast<Study>(s);
}

std::vector<std::string> StudyLayout::parameter_names() const {
  auto out = nuisance_names;
  out.insert(out.end(), focal_names.begin(), focal_names.end());
  return out;
}

ParameterPartition StudyLayout::partition() const {
  std::vector<std::vector<Index>> mb;
  for (const auto& b : blocks) {
    std::vector<Index> idx;
    for (Index k = 0; k < b.size(); ++k) idx.push_back(b.offset + k);
    mb.push_back(std::move(idx));
  }
  return ParameterPartition::contiguous(q0(), q1(), std::move(mb));
}

RandomComponentLayout StudyLayout::component_layout(Index n) const {
  RandomComponentLayout r;
  r.n = n;
  for (size_t j = 0; j < marginals.size(); ++j) r.columns.push_back({marginals[j], component_roles[j]});
  return r;
}

FeasibilitySpec StudyLayout::feasibility() const {
  FeasibilitySpec f;
  f.floor = kDefaultFloor;
  f.box_bounds.resize(static_cast<size_t>(q1()));
  switch (study) {
    case Study::one:
      f.box_bounds[1].lower = f.floor;
      break;
    case Study::two:
      f.box_bounds[0].lower = -(1.0 - f.floor);
      f.box_bounds[0].upper = 1.0 - f.floor;
      f.box_bounds[4].lower = f.floor;
      break;
    case Study::three:
      f.corr_block = std::vector<Index>{0, 1, 2, 3, 4, 5};
      f.slope_block = std::vector<Index>{6, 7, 8, 9};
      break;
  }
  return f;
}

const StudyLayout& study_layout(Study s) {
  static const StudyLayout l1 = make_study1();
  static const StudyLayout l2 = make_study2();
  static const StudyLayout l3 = make_study3();
  switch (s) {
    case Study::one: return l1;
    case Study::two: return l2;
    case Study::three: return l3;
  }
  throw StructuralError("unknown study");
}

double uniqueness_for_communality(double communality) {
  return (1.0 - communality) / communality;
}

ParameterVector study_truth(Study s) {
  const auto& L = study_layout(s);
  Vec v(L.q());
  Index k = 0;
  switch (s) {
    case Study::one: {
      const double comm[5] = {.7, .6, .5, .4, .3};
      for (int block = 0; block < 2; ++block) {
        for (int j = 0; j < 5; ++j) v[k++] = 1.0;
        for (int j = 0; j < 5; ++j) v[k++] = uniqueness_for_communality(comm[j]);
        if (block == 0) v[k++] = 1.0;
      }
      v[k++] = 0.6;   // beta
      v[k++] = 0.64;  // psi
      break;
    }
    case Study::two: {
      const double lam[5] = {1, .8, .8, .8, .8};
      const double uniq[5] = {.44, .66, .88, 1.1, 1.32};
      for (int block = 0; block < 3; ++block) {
        for (int j = 0; j < 5; ++j) v[k++] = lam[j];
        for (int j = 0; j < 5; ++j) v[k++] = uniq[j];
        if (block < 2) v[k++] = 1.0;
      }
      v[k++] = 0.3;  // phi21
      v[k++] = 0.4;
      v[k++] = 0.4;
      v[k++] = 0.2;
      v[k++] = 0.54;  // psi
      break;
    }
    case Study::three: {
      const double slope[8] = {1, 1.25, 1.5, 1.75, 1, 1.25, 1.5, 1.75};
      const double difficulty[8] = {-1.75, -1.25, -.75, -.25, .25, .75, 1.25, 1.75};
      for (int block = 0; block < 5; ++block) {
        for (int j = 0; j < 8; ++j) v[k++] = -slope[j] * difficulty[j];
        for (int j = 0; j < 8; ++j) v[k++] = slope[j];
      }
      for (int j = 0; j < 6; ++j) v[k++] = 0.3;
      v[k++] = 0.1;
      v[k++] = 0.2;
      v[k++] = 0.3;
      v[k++] = 0.4;
      break;
    }
  }
  return ParameterVector(v, L.parameter_names());
}

}  // namespace tsbc
