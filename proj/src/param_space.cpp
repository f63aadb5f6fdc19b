#include "tsbc/param_space.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "tsbc/errors.hpp"

namespace tsbc {

ParameterVector::ParameterVector(Vec values, std::vector<std::string> names)
    : values_(std::move(values)), names_(std::move(names)) {
  if (static_cast<Index>(names_.size()) != values_.size())
    throw StructuralError("parameter vector: names and values differ in length");
  if (!values_.allFinite()) throw StructuralError("parameter vector: non-finite value");
  std::set<std::string> seen(names_.begin(), names_.end());
  if (seen.size() != names_.size()) throw StructuralError("parameter vector: duplicate names");
}

std::optional<Index> ParameterVector::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<Index>(it - names_.begin());
}

double ParameterVector::at(const std::string& name) const {
  auto i = find(name);
  if (!i) throw StructuralError("unknown parameter '" + name + "'");
  return values_[*i];
}

void ParameterPartition::validate(Index q) const {
  if (q0() + q1() != q) {
    std::ostringstream os;
    os << "partition sizes " << q0() << " + " << q1() << " do not match q = " << q;
    throw StructuralError(os.str());
  }
  std::vector<int> hits(static_cast<size_t>(q), 0);
  auto mark = [&](const std::vector<Index>& idx) {
    for (Index i : idx) {
      if (i < 0 || i >= q) throw StructuralError("partition index out of range");
      ++hits[static_cast<size_t>(i)];
    }
  };
  mark(nuisance_idx);
  mark(focal_idx);
  if (std::any_of(hits.begin(), hits.end(), [](int h) { return h != 1; }))
    throw StructuralError("nuisance and focal index sets must be disjoint and cover 0..q-1");

  if (!measurement_blocks.empty()) {
    std::multiset<Index> covered;
    for (const auto& b : measurement_blocks) covered.insert(b.begin(), b.end());
    std::multiset<Index> nuis(nuisance_idx.begin(), nuisance_idx.end());
    if (covered != nuis) throw StructuralError("measurement blocks must partition the nuisance set");
  }
}

ParameterPartition ParameterPartition::contiguous(Index q0, Index q1,
                                                  std::vector<std::vector<Index>> blocks) {
  ParameterPartition p;
  for (Index i = 0; i < q0; ++i) p.nuisance_idx.push_back(i);
  for (Index i = 0; i < q1; ++i) p.focal_idx.push_back(q0 + i);
  p.measurement_blocks = std::move(blocks);
  return p;
}

SplitTheta split(const Vec& theta, const ParameterPartition& part) {
  part.validate(theta.size());
  SplitTheta out{Vec(part.q0()), Vec(part.q1())};
  for (Index i = 0; i < part.q0(); ++i) out.nu[i] = theta[part.nuisance_idx[i]];
  for (Index i = 0; i < part.q1(); ++i) out.phi[i] = theta[part.focal_idx[i]];
  return out;
}

Vec combine(const Vec& nu, const Vec& phi, const ParameterPartition& part) {
  if (nu.size() != part.q0() || phi.size() != part.q1())
    throw StructuralError("combine: nu/phi lengths do not match the partition");
  Vec theta(part.q());
  for (Index i = 0; i < part.q0(); ++i) theta[part.nuisance_idx[i]] = nu[i];
  for (Index i = 0; i < part.q1(); ++i) theta[part.focal_idx[i]] = phi[i];
  return theta;
}

void FeasibilitySpec::validate() const {
  if (!(floor > 0)) throw StructuralError("feasibility floor must be positive");
  if (slope_block && !corr_block) throw StructuralError("slope_block requires corr_block");
  for (const auto& b : box_bounds)
    if (b.lower && b.upper && *b.lower > *b.upper)
      throw StructuralError("box bound with lower > upper");
  if (corr_block) corr_dim_from_count(static_cast<Index>(corr_block->size()));
}

Vec project_box(const Vec& phi, const FeasibilitySpec& spec) {
  Vec out = phi;
  const Index m = std::min<Index>(out.size(), static_cast<Index>(spec.box_bounds.size()));
  for (Index i = 0; i < m; ++i) {
    const auto& b = spec.box_bounds[static_cast<size_t>(i)];
    if (b.lower && out[i] < *b.lower) out[i] = *b.lower;
    if (b.upper && out[i] > *b.upper) out[i] = *b.upper;
  }
  return out;
}

namespace {

// Unit diagonal to rounding, and the smallest eigenvalue at the floor
// up to a relative slack that absorbs eigensolver noise.
bool corr_feasible(const Mat& Phi, double floor) {
  for (Index i = 0; i < Phi.rows(); ++i)
    if (std::abs(Phi(i, i) - 1.0) > 1e-12) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(Phi, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= floor * (1.0 - 1e-9);
}

}  // namespace

Mat project_corr_psd(const Mat& Phi_in, double floor) {
  Mat Phi = 0.5 * (Phi_in + Phi_in.transpose());
  if (corr_feasible(Phi, floor)) return Phi_in;
  // Truncation followed by restandardization can pull the smallest eigenvalue
  // back under the floor; repeat until the result is a fixed point.
  for (int iter = 0; iter < 1000; ++iter) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Phi);
    Vec ev = es.eigenvalues().cwiseMax(floor);
    Mat A = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    Vec s = A.diagonal().cwiseSqrt().cwiseInverse();
    Phi = s.asDiagonal() * A * s.asDiagonal();
    Phi = 0.5 * (Phi + Phi.transpose());
    Phi.diagonal().setOnes();
    if (corr_feasible(Phi, floor)) break;
  }
  return Phi;
}

Vec project_slopes_qp(const Vec& beta, const Mat& Phi, double floor) {
  if (Phi.rows() != beta.size() || Phi.cols() != beta.size())
    throw StructuralError("project_slopes_qp: dimension mismatch");
  const double cap = 1.0 - floor;
  if (beta.dot(Phi * beta) <= cap) return beta;

  Eigen::SelfAdjointEigenSolver<Mat> es(Phi);
  const Vec& l = es.eigenvalues();
  if (l.minCoeff() <= 0) throw NumericalError("project_slopes_qp: Phi is not positive definite");
  const Vec c = es.eigenvectors().transpose() * beta;
  auto quad = [&](double lambda) {
    double s = 0;
    for (Index i = 0; i < l.size(); ++i) {
      const double t = c[i] / (1.0 + lambda * l[i]);
      s += l[i] * t * t;
    }
    return s;
  };
  auto solution = [&](double lambda) {
    Vec t(l.size());
    for (Index i = 0; i < l.size(); ++i) t[i] = c[i] / (1.0 + lambda * l[i]);
    return Vec(es.eigenvectors() * t);
  };

  double lo = 0.0, hi = 1.0;
  int grow = 0;
  while (quad(hi) > cap) {
    hi *= 2.0;
    if (++grow > 200) {
      std::ostringstream os;
      os << "project_slopes_qp: failed to bracket the multiplier (b'Phi b = " << quad(0)
         << ", lambda_max = " << hi << ")";
      throw NumericalError(os.str());
    }
  }
  // quad() is decreasing in lambda; keep hi on the feasible side.
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (quad(mid) > cap)
      lo = mid;
    else
      hi = mid;
    if (cap - quad(hi) < 1e-10 || hi - lo <= 1e-16 * hi) break;
  }
  return solution(hi);
}

Index corr_dim_from_count(Index m) {
  Index d = 1;
  while (d * (d - 1) / 2 < m) ++d;
  if (d * (d - 1) / 2 != m) throw StructuralError("correlation block size is not d(d-1)/2");
  return d;
}

Mat corr_from_lower(const Vec& lower, Index d) {
  Mat Phi = Mat::Identity(d, d);
  Index k = 0;
  for (Index i = 1; i < d; ++i)
    for (Index j = 0; j < i; ++j) {
      Phi(i, j) = Phi(j, i) = lower[k++];
    }
  return Phi;
}

Vec lower_from_corr(const Mat& Phi) {
  const Index d = Phi.rows();
  Vec out(d * (d - 1) / 2);
  Index k = 0;
  for (Index i = 1; i < d; ++i)
    for (Index j = 0; j < i; ++j) out[k++] = Phi(i, j);
  return out;
}

Vec project(const Vec& phi, const FeasibilitySpec& spec, bool* changed) {
  Vec out = project_box(phi, spec);
  if (spec.corr_block) {
    const auto& cb = *spec.corr_block;
    const Index m = static_cast<Index>(cb.size());
    const Index d = corr_dim_from_count(m);
    Vec lower(m);
    for (Index k = 0; k < m; ++k) lower[k] = out[cb[k]];
    const Mat Phi = project_corr_psd(corr_from_lower(lower, d), spec.floor);
    const Vec projected = lower_from_corr(Phi);
    for (Index k = 0; k < m; ++k) out[cb[k]] = projected[k];

    if (spec.slope_block) {
      const auto& sb = *spec.slope_block;
      if (static_cast<Index>(sb.size()) != d)
        throw StructuralError("slope block length must match the correlation dimension");
      Vec beta(d);
      for (Index k = 0; k < d; ++k) beta[k] = out[sb[k]];
      const Vec b = project_slopes_qp(beta, Phi, spec.floor);
      for (Index k = 0; k < d; ++k) out[sb[k]] = b[k];
    }
  }
  if (changed) *changed = (out.array() != phi.array()).any();
  return out;
}

bool is_feasible(const Vec& phi, const FeasibilitySpec& spec) {
  bool changed = false;
  project(phi, spec, &changed);
  return !changed;
}

}  // namespace tsbc
