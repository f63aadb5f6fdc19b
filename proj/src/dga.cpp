#include "tsbc/dga.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tsbc/errors.hpp"
#include "tsbc/rng.hpp"

namespace tsbc {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_components(const RandomComponents& U, Study s) {
  const auto& L = study_layout(s);
  if (U.values.cols() != static_cast<Index>(L.marginals.size()))
    throw StructuralError("random components do not match the study " +
                          std::to_string(to_int(s)) + " layout");
}

void check_theta(const Vec& theta, Study s) {
  if (theta.size() != study_layout(s).q())
    throw StructuralError("theta has length " + std::to_string(theta.size()) + ", study " +
                          std::to_string(to_int(s)) + " expects " +
                          std::to_string(study_layout(s).q()));
}

// Y_j = lambda_j * eta + sigma_j * U_{noise_col + j} for the items of one linear block.
void fill_linear_block(Mat& Y, const RandomComponents& U, const Vec& theta, const BlockLayout& b,
                       const Vec& eta, Index noise_col) {
  const Index p = b.items();
  for (Index j = 0; j < p; ++j) {
    const double lambda = theta[b.offset + j];
    const double sigma = std::sqrt(theta[b.offset + p + j]);
    const Index col = b.columns[static_cast<size_t>(j)];
    Y.col(col) = lambda * eta + sigma * U.values.col(noise_col + col);
  }
}

void require_variances(const Vec& theta, const BlockLayout& b) {
  for (Index j = 0; j < b.items(); ++j)
    if (!(theta[b.offset + b.items() + j] >= 0.0))
      throw DomainError("negative unique variance in the generator");
}

}  // namespace

RandomComponents draw_components(Index n, const RandomComponentLayout& layout, std::uint64_t seed,
                                 std::uint64_t stream) {
  if (n < 1) throw StructuralError("draw_components: n must be at least 1");
  const Index m = layout.m();
  RandomComponents out;
  out.layout = layout;
  out.layout.n = n;
  out.seed_tag = rng::mix({seed, stream});
  out.values.resize(n, m);
  const rng::Stream gen(seed, stream);
  const Index groups = (m + 3) / 4;
  for (Index i = 0; i < n; ++i) {
    for (Index g = 0; g < groups; ++g) {
      const auto w = gen.block(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(g));
      double u[4];
      for (int k = 0; k < 4; ++k) u[k] = rng::to_open_unit(w[k]);
      for (int pos = 0; pos < 4; ++pos) {
        const Index j = 4 * g + pos;
        if (j >= m) break;
        if (layout.columns[static_cast<size_t>(j)].marginal == Marginal::uniform01) {
          out.values(i, j) = u[pos];
        } else {
          const int base = pos & ~1;
          const double r = std::sqrt(-2.0 * std::log(u[base]));
          const double angle = kTwoPi * u[base + 1];
          out.values(i, j) = (pos & 1) ? r * std::sin(angle) : r * std::cos(angle);
        }
      }
    }
  }
  return out;
}

void check_domain(Study s, const Vec& theta) {
  check_theta(theta, s);
  if (!theta.allFinite()) throw DomainError("non-finite parameter passed to the generator");
  const auto& L = study_layout(s);
  const Index q0 = L.q0();
  switch (s) {
    case Study::one:
      for (const auto& b : L.blocks) require_variances(theta, b);
      if (theta[10] < 0) throw DomainError("study 1: negative predictor variance phi");
      if (theta[q0 + 1] < 0) throw DomainError("study 1: negative error variance psi");
      break;
    case Study::two: {
      for (const auto& b : L.blocks) require_variances(theta, b);
      const double p11 = theta[10], p22 = theta[21], p21 = theta[q0];
      if (!(p11 > 0) || !(p22 > 0)) throw DomainError("study 2: latent variances must be positive");
      if (p11 * p22 - p21 * p21 < 0) throw DomainError("study 2: latent covariance matrix is not PSD");
      if (theta[q0 + 4] < 0) throw DomainError("study 2: negative error variance psi");
      break;
    }
    case Study::three: {
      const Mat Phi = corr_from_lower(theta.segment(q0, 6), 4);
      Eigen::LLT<Mat> llt(Phi);
      if (llt.info() != Eigen::Success)
        throw DomainError("study 3: predictor correlation matrix is not positive definite");
      const Vec beta = theta.segment(q0 + 6, 4);
      if (1.0 - beta.dot(Phi * beta) < -1e-12)
        throw DomainError("study 3: slopes violate 1 - beta' Phi beta >= 0");
      break;
    }
  }
}

bool in_domain(Study s, const Vec& theta) {
  try {
    check_domain(s, theta);
    return true;
  } catch (const DomainError&) {
    return false;
  }
}

Mat latent_study1(const RandomComponents& U, const Vec& theta) {
  check_components(U, Study::one);
  check_domain(Study::one, theta);
  const Index q0 = study_layout(Study::one).q0();
  const double phi = theta[10], beta = theta[q0], psi = theta[q0 + 1];
  Mat eta(U.values.rows(), 2);
  eta.col(0) = std::sqrt(phi) * U.values.col(0);
  eta.col(1) = beta * eta.col(0) + std::sqrt(psi) * U.values.col(1);
  return eta;
}

Mat latent_study2(const RandomComponents& U, const Vec& theta) {
  check_components(U, Study::two);
  check_domain(Study::two, theta);
  const Index q0 = study_layout(Study::two).q0();
  const double p11 = theta[10], p22 = theta[21];
  const double p21 = theta[q0], b1 = theta[q0 + 1], b2 = theta[q0 + 2], b3 = theta[q0 + 3];
  const double psi = theta[q0 + 4];
  const double l11 = std::sqrt(p11);
  const double l21 = p21 / l11;
  const double l22 = std::sqrt((p22 * p11 - p21 * p21) / p11);
  Mat eta(U.values.rows(), 3);
  eta.col(0) = l11 * U.values.col(0);
  eta.col(1) = l21 * U.values.col(0) + l22 * U.values.col(1);
  eta.col(2) = b1 * eta.col(0) + b2 * eta.col(1) +
               b3 * eta.col(0).cwiseProduct(eta.col(1)) + std::sqrt(psi) * U.values.col(2);
  return eta;
}

Mat latent_study3(const RandomComponents& U, const Vec& theta) {
  check_components(U, Study::three);
  check_domain(Study::three, theta);
  const Index q0 = study_layout(Study::three).q0();
  const Mat Phi = corr_from_lower(theta.segment(q0, 6), 4);
  const Mat root = Eigen::LLT<Mat>(Phi).matrixL();
  const Vec beta = theta.segment(q0 + 6, 4);
  const double psi = std::max(0.0, 1.0 - beta.dot(Phi * beta));
  Mat eta(U.values.rows(), 5);
  eta.leftCols(4) = U.values.leftCols(4) * root.transpose();
  eta.col(4) = eta.leftCols(4) * beta + std::sqrt(psi) * U.values.col(4);
  return eta;
}

Dataset dga_study1(const RandomComponents& U, const Vec& theta) {
  const Mat eta = latent_study1(U, theta);
  const auto& L = study_layout(Study::one);
  Dataset d;
  d.study = Study::one;
  d.kind = DataKind::continuous;
  d.values.resize(U.values.rows(), L.p);
  for (size_t b = 0; b < L.blocks.size(); ++b)
    fill_linear_block(d.values, U, theta, L.blocks[b], eta.col(static_cast<Index>(b)), 2);
  d.names = default_variable_names(L.p);
  return d;
}

Dataset dga_study2(const RandomComponents& U, const Vec& theta) {
  const Mat eta = latent_study2(U, theta);
  const auto& L = study_layout(Study::two);
  Dataset d;
  d.study = Study::two;
  d.kind = DataKind::continuous;
  d.values.resize(U.values.rows(), L.p);
  for (size_t b = 0; b < L.blocks.size(); ++b)
    fill_linear_block(d.values, U, theta, L.blocks[b], eta.col(static_cast<Index>(b)), 3);
  d.names = default_variable_names(L.p);
  return d;
}

Dataset dga_study3(const RandomComponents& U, const Vec& theta) {
  const Mat eta = latent_study3(U, theta);
  const auto& L = study_layout(Study::three);
  const Index n = U.values.rows();
  Dataset d;
  d.study = Study::three;
  d.kind = DataKind::binary;
  d.values.resize(n, L.p);
  for (size_t b = 0; b < L.blocks.size(); ++b) {
    const auto& blk = L.blocks[b];
    for (Index j = 0; j < blk.items(); ++j) {
      const double alpha = theta[blk.offset + j];
      const double gamma = theta[blk.offset + blk.items() + j];
      const Index col = blk.columns[static_cast<size_t>(j)];
      for (Index i = 0; i < n; ++i) {
        const double u = U.values(i, 5 + col);
        const double logit = std::log(u / (1.0 - u));
        d.values(i, col) = logit <= alpha + gamma * eta(i, static_cast<Index>(b)) ? 1.0 : 0.0;
      }
    }
  }
  d.names = default_variable_names(L.p);
  return d;
}

Dataset generate(Study s, const RandomComponents& U, const Vec& theta) {
  switch (s) {
    case Study::one: return dga_study1(U, theta);
    case Study::two: return dga_study2(U, theta);
    case Study::three: return dga_study3(U, theta);
  }
  throw StructuralError("unknown study");
}

std::vector<std::string> default_variable_names(Index p) {
  std::vector<std::string> names;
  for (Index j = 0; j < p; ++j) names.push_back("y" + std::to_string(j + 1));
  return names;
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
  const auto names = data.names.empty() ? default_variable_names(data.p()) : data.names;
  for (size_t j = 0; j < names.size(); ++j) os << (j ? "," : "") << names[j];
  os << '\n';
  os << std::setprecision(17);
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.p(); ++j) {
      if (j) os << ',';
      if (data.kind == DataKind::binary)
        os << static_cast<int>(data.values(i, j));
      else
        os << data.values(i, j);
    }
    os << '\n';
  }
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  write_dataset_csv(os, data);
}

Dataset read_dataset_csv(std::istream& is, Study study) {
  Dataset d;
  d.study = study;
  std::string line;
  if (!std::getline(is, line)) throw DataError("dataset CSV is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      d.names.push_back(cell);
    }
  }
  const Index p = static_cast<Index>(d.names.size());
  std::vector<double> buf;
  Index rows = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Index cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        buf.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw DataError("dataset CSV row " + std::to_string(rows + 2) + ": '" + cell +
                        "' is not a number");
      }
      ++cols;
    }
    if (cols != p)
      throw DataError("dataset CSV row " + std::to_string(rows + 2) + " has " +
                      std::to_string(cols) + " fields, header has " + std::to_string(p));
    ++rows;
  }
  d.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      buf.data(), rows, p);
  const bool binary = (d.values.array() == 0.0 || d.values.array() == 1.0).all();
  d.kind = binary ? DataKind::binary : DataKind::continuous;
  return d;
}

Dataset read_dataset_csv(const std::string& path, Study study) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  return read_dataset_csv(is, study);
}

}  // namespace tsbc
