#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tsbc/acm.hpp"
#include "tsbc/bias_correct.hpp"
#include "tsbc/param_space.hpp"
#include "tsbc/structural.hpp"
#include "tsbc/study.hpp"

namespace tsbc {

struct StudyConfig {
  Study study = Study::one;
  Index n = 500;
  int reps = 200;
  std::uint64_t seed = 42;
  std::vector<ScoreChoice> scores{ScoreChoice::BB};
  RMConfig rm;
  ACMConfig acm;
  bool run_fsr = true;
  bool run_bc = true;
  bool compute_se = false;
  // Replications run concurrently; the ACM inside each uses acm.workers.
  int workers = 1;

  void validate() const;
};

// Defaults for one study: perturbation constant and SP blocks included.
StudyConfig default_config(Study s);

// Parses a JSON configuration; unknown or malformed fields raise UsageError
// naming the field. Missing fields keep the study defaults.
StudyConfig study_config_from_json(const std::string& text);

struct ReplicationRecord {
  int rep = 0;
  std::string method;
  std::string param;
  double estimate = 0.0;
  std::optional<double> se;
  std::int64_t runtime_ms = 0;
  std::string flags;
};

bool same_result(const ReplicationRecord& a, const ReplicationRecord& b);

struct SummaryRow {
  std::string method;
  std::string param;
  double rb = 0.0;
  double ese = 0.0;
  std::optional<double> rbse;
  int reps = 0;
  bool absolute_bias = false;  // truth was zero; rb holds mean - truth
};

using SummaryTable = std::vector<SummaryRow>;

std::string method_label(bool corrected, ScoreChoice c);

// Replication seed mix(base, rep); data drawn from stream "data".
std::uint64_t replication_seed(std::uint64_t base, int rep);

std::vector<ReplicationRecord> run_replication(const StudyConfig& cfg, int rep);

// Replications 1..reps, sorted by (rep, method, param).
std::vector<ReplicationRecord> run_study(const StudyConfig& cfg);

SummaryTable aggregate(const std::vector<ReplicationRecord>& records, const ParameterVector& truth);

void write_records_csv(std::ostream& os, const std::vector<ReplicationRecord>& records);
std::vector<ReplicationRecord> read_records_csv(std::istream& is);
void write_summary_csv(std::ostream& os, const SummaryTable& table);
SummaryTable read_summary_csv(std::istream& is);

std::string truth_to_json(Study s, const ParameterVector& truth);
ParameterVector truth_from_json(const std::string& text);

const SummaryRow* find_row(const SummaryTable& t, const std::string& method, const std::string& param);

}  // namespace tsbc
