#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsbc/linalg.hpp"
#include "tsbc/param_space.hpp"
#include "tsbc/study.hpp"

namespace tsbc {

struct RandomComponents {
  Mat values;  // n x m
  RandomComponentLayout layout;
  std::uint64_t seed_tag = 0;
};

enum class DataKind { continuous, binary };

struct Dataset {
  Mat values;  // n x p
  DataKind kind = DataKind::continuous;
  Study study = Study::one;
  std::vector<std::string> names;

  Index n() const { return values.rows(); }
  Index p() const { return values.cols(); }
};

// Deterministic in (seed, stream, n, layout). Cell (i, j) comes from the
// Philox block at counter (i, j / 4); normal cells use Box-Muller on the
// uniform pair that contains them.
RandomComponents draw_components(Index n, const RandomComponentLayout& layout,
                                 std::uint64_t seed, std::uint64_t stream);

// Latent variable matrices (n x d) produced on the way to the data.
Mat latent_study1(const RandomComponents& U, const Vec& theta);
Mat latent_study2(const RandomComponents& U, const Vec& theta);
Mat latent_study3(const RandomComponents& U, const Vec& theta);

Dataset dga_study1(const RandomComponents& U, const Vec& theta);
Dataset dga_study2(const RandomComponents& U, const Vec& theta);
Dataset dga_study3(const RandomComponents& U, const Vec& theta);

Dataset generate(Study s, const RandomComponents& U, const Vec& theta);
inline Dataset generate(Study s, const RandomComponents& U, const ParameterVector& theta) {
  return generate(s, U, theta.values());
}

// Throws DomainError when theta lies outside the generator's domain.
void check_domain(Study s, const Vec& theta);
bool in_domain(Study s, const Vec& theta);

std::vector<std::string> default_variable_names(Index p);

void write_dataset_csv(std::ostream& os, const Dataset& data);
void write_dataset_csv(const std::string& path, const Dataset& data);
// Reads a header row plus numeric rows; binary when every entry is 0 or 1.
Dataset read_dataset_csv(std::istream& is, Study study);
Dataset read_dataset_csv(const std::string& path, Study study);

}  // namespace tsbc
