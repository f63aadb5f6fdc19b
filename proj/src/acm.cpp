#include "tsbc/acm.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include <Eigen/SVD>
#include <json.hpp>

#include "tsbc/errors.hpp"
#include "tsbc/parallel.hpp"
#include "tsbc/rng.hpp"

namespace tsbc {

namespace {

struct Draw {
  bool ok = false;
  Vec theta_hat;
  Mat jac;
  int shrinks = 0;
};

enum Stage { kOmega = 1, kJacobian = 2 };

std::vector<std::vector<Index>> resolve_blocks(const ACMConfig& cfg, Index q) {
  if (!cfg.blocks.empty()) return cfg.blocks;
  return equal_blocks(q, 1);
}

Draw one_draw(const Vec& theta, const ACMConfig& cfg, const TwoStageModel& model,
              const std::vector<std::vector<Index>>& blocks, std::uint64_t m, int stages) {
  const auto& part = model.partition();
  const Index q = part.q();
  const auto layout = model.layout();
  const std::uint64_t acm = rng::label("acm");
  const std::uint64_t rad = rng::label("rademacher");
  Draw d;
  try {
    const auto U = draw_components(layout.n, layout, cfg.seed, rng::mix({acm, m}));
    if (stages & kOmega) {
      const Dataset Y = model.generate(U, theta);
      const Vec nu_hat = model.estimate_nuisance(Y);
      const Vec phi_hat = model.estimate_focal(Y, nu_hat);
      d.theta_hat = combine(nu_hat, phi_hat, part);
      if (!d.theta_hat.allFinite()) return d;
    }
    if (stages & kJacobian) {
      d.jac = Mat::Zero(part.q1(), q);
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        const rng::Stream signs(cfg.seed, rng::mix({rad, m, static_cast<std::uint64_t>(b)}));
        Vec E = Vec::Zero(q);
        for (std::size_t i = 0; i < blocks[b].size(); ++i) E[blocks[b][i]] = signs.rademacher(i);
        double delta = cfg.delta;
        int tries = 0;
        while (!(model.in_domain(theta + delta * E) && model.in_domain(theta - delta * E))) {
          if (++tries > 40) return d;
          delta *= 0.5;
          ++d.shrinks;
        }
        const Vec tp = theta + delta * E;
        const Vec tm = theta - delta * E;
        const auto sp = split(tp, part);
        const auto sm = split(tm, part);
        const Vec hp = model.estimate_focal(model.generate(U, tp), sp.nu);
        const Vec hm = model.estimate_focal(model.generate(U, tm), sm.nu);
        const Vec diff = (hp - hm) / (2.0 * delta);
        if (!diff.allFinite()) return d;
        for (Index j : blocks[b]) d.jac.col(j) = diff / E[j];
      }
    }
  } catch (const Error&) {
    return d;
  }
  d.ok = true;
  return d;
}

ACMResult run(const Vec& theta, const ACMConfig& cfg, const TwoStageModel& model, int stages) {
  const auto& part = model.partition();
  const Index q = part.q();
  if (theta.size() != q) throw StructuralError("ACM: theta length does not match the model partition");
  cfg.validate(q);
  if (!model.in_domain(theta)) throw DomainError("ACM: theta lies outside the generator's domain");
  const auto blocks = resolve_blocks(cfg, q);

  std::vector<Draw> draws(static_cast<std::size_t>(cfg.M));
  parallel_for(cfg.M, cfg.workers, [&](Index i) {
    draws[static_cast<std::size_t>(i)] =
        one_draw(theta, cfg, model, blocks, static_cast<std::uint64_t>(i + 1), stages);
  });

  ACMResult r;
  for (const auto& d : draws) {
    if (d.ok) ++r.used; else ++r.skipped;
    r.delta_shrinks += d.shrinks;
  }
  if (r.skipped > cfg.max_skip_fraction * cfg.M) {
    std::ostringstream os;
    os << "ACM: " << r.skipped << " of " << cfg.M << " replications failed (limit "
       << cfg.max_skip_fraction * 100 << "%)";
    throw InferenceError(os.str());
  }
  if (r.used < 2) throw InferenceError("ACM: fewer than two usable replications");

  if (stages & kOmega) {
    Vec mean = Vec::Zero(q);
    for (const auto& d : draws)
      if (d.ok) mean += d.theta_hat;
    mean /= r.used;
    Mat S = Mat::Zero(q, q);
    for (const auto& d : draws)
      if (d.ok) {
        const Vec c = d.theta_hat - mean;
        S.noalias() += c * c.transpose();
      }
    S /= (r.used - 1);
    r.omega_hat = 0.5 * (S + S.transpose());
  }
  if (stages & kJacobian) {
    Mat J = Mat::Zero(part.q1(), q);
    for (const auto& d : draws)
      if (d.ok) J += d.jac;
    r.jacobian = J / r.used;
  }
  return r;
}

}  // namespace

void ACMConfig::validate(Index q) const {
  if (M < 2) throw UsageError("ACM replication count M must be at least 2");
  if (!(delta > 0) || !std::isfinite(delta)) throw UsageError("ACM perturbation delta must be positive");
  if (workers < 1) throw UsageError("ACM worker count must be at least 1");
  if (!(max_skip_fraction >= 0 && max_skip_fraction < 1)) throw UsageError("ACM skip fraction must lie in [0, 1)");
  if (blocks.empty()) return;
  std::vector<int> seen(static_cast<std::size_t>(q), 0);
  for (const auto& b : blocks) {
    if (b.empty()) throw UsageError("ACM blocks must be non-empty");
    for (Index j : b) {
      if (j < 0 || j >= q) throw UsageError("ACM block index out of range");
      ++seen[static_cast<std::size_t>(j)];
    }
  }
  for (int s : seen)
    if (s != 1) throw UsageError("ACM blocks must partition the parameter indices");
}

std::vector<std::vector<Index>> equal_blocks(Index q, Index blocks) {
  if (blocks < 1 || blocks > q) throw UsageError("block count must lie in [1, q]");
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(blocks));
  const Index base = q / blocks, extra = q % blocks;
  Index j = 0;
  for (Index b = 0; b < blocks; ++b) {
    const Index len = base + (b < extra ? 1 : 0);
    for (Index k = 0; k < len; ++k) out[static_cast<std::size_t>(b)].push_back(j++);
  }
  return out;
}

Mat bootstrap_omega(const Vec& theta, const ACMConfig& cfg, const TwoStageModel& model) {
  return run(theta, cfg, model, kOmega).omega_hat;
}

Mat sp_jacobian(const Vec& theta, const ACMConfig& cfg, const TwoStageModel& model) {
  return run(theta, cfg, model, kJacobian).jacobian;
}

Mat delta_matrix(const Mat& jacobian, const ParameterPartition& part) {
  const Index q0 = part.q0(), q1 = part.q1();
  if (jacobian.rows() != q1 || jacobian.cols() != part.q())
    throw StructuralError("delta_matrix: jacobian must be q1 x q");
  Mat Jnu(q1, q0), Jphi(q1, q1);
  for (Index j = 0; j < q0; ++j) Jnu.col(j) = jacobian.col(part.nuisance_idx[static_cast<std::size_t>(j)]);
  for (Index j = 0; j < q1; ++j) Jphi.col(j) = jacobian.col(part.focal_idx[static_cast<std::size_t>(j)]);

  Eigen::JacobiSVD<Mat> svd(Jphi);
  const Vec sv = svd.singularValues();
  const double smin = sv[sv.size() - 1];
  if (!(smin > 0) || !jacobian.allFinite() || sv[0] / smin >= 1e12) {
    std::ostringstream os;
    os << "focal Jacobian is singular or ill-conditioned (condition number "
       << (smin > 0 ? sv[0] / smin : INFINITY) << "); increase M or delta";
    throw InferenceError(os.str());
  }
  const Mat inv = Jphi.fullPivLu().inverse();
  Mat D(q1, part.q());
  const Mat dn = -inv * Jnu;
  for (Index j = 0; j < q0; ++j) D.col(part.nuisance_idx[static_cast<std::size_t>(j)]) = dn.col(j);
  for (Index j = 0; j < q1; ++j) D.col(part.focal_idx[static_cast<std::size_t>(j)]) = inv.col(j);
  return D;
}

Mat delta_matrix(const Mat& jacobian, Index q0) {
  return delta_matrix(jacobian, ParameterPartition::contiguous(q0, jacobian.rows()));
}

std::pair<Mat, Vec> sandwich(const Mat& delta_mat, const Mat& omega_hat) {
  if (delta_mat.cols() != omega_hat.rows() || omega_hat.rows() != omega_hat.cols())
    throw StructuralError("sandwich: non-conformable shapes");
  Mat S = delta_mat * omega_hat * delta_mat.transpose();
  S = 0.5 * (S + S.transpose());
  Vec se(S.rows());
  for (Index i = 0; i < S.rows(); ++i) {
    const double v = S(i, i);
    if (!(v >= -1e-10)) {
      std::ostringstream os;
      os << "sandwich: negative variance " << v << " at focal index " << i;
      throw InferenceError(os.str());
    }
    se[i] = std::sqrt(std::max(v, 0.0));
  }
  return {S, se};
}

ACMResult compute_acm(const Vec& theta, const ACMConfig& cfg, const TwoStageModel& model) {
  ACMResult r = run(theta, cfg, model, kOmega | kJacobian);
  r.delta_mat = delta_matrix(r.jacobian, model.partition());
  auto [S, se] = sandwich(r.delta_mat, r.omega_hat);
  r.sandwich = std::move(S);
  r.ses = std::move(se);
  return r;
}

std::string to_json(const ACMResult& r, int indent) {
  auto mat = [](const Mat& A) {
    nlohmann::json j;
    j["rows"] = A.rows();
    j["cols"] = A.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(A.size()));
    for (Index i = 0; i < A.rows(); ++i)
      for (Index k = 0; k < A.cols(); ++k) data.push_back(A(i, k));
    j["data"] = data;
    return j;
  };
  nlohmann::json j;
  j["omega_hat"] = mat(r.omega_hat);
  j["jacobian"] = mat(r.jacobian);
  j["delta_mat"] = mat(r.delta_mat);
  j["sandwich"] = mat(r.sandwich);
  j["ses"] = std::vector<double>(r.ses.data(), r.ses.data() + r.ses.size());
  j["used"] = r.used;
  j["skipped"] = r.skipped;
  j["delta_shrinks"] = r.delta_shrinks;
  return j.dump(indent);
}

}  // namespace tsbc
