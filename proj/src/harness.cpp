#include "tsbc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "tsbc/dga.hpp"
#include "tsbc/errors.hpp"
#include "tsbc/model.hpp"
#include "tsbc/parallel.hpp"
#include "tsbc/rng.hpp"

namespace tsbc {

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::int64_t elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
}

std::string clean_flag(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  return s;
}

void join_flag(std::string& flags, const std::string& f) {
  if (!flags.empty()) flags += ';';
  flags += clean_flag(f);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const char* field) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    if (s == "nan" || s == "-nan") return kNaN;
    throw DataError(std::string("cannot parse ") + field + " value '" + s + "'");
  }
}

void append_records(std::vector<ReplicationRecord>& out, int rep, const std::string& method,
                    const std::vector<std::string>& names, const Vec& est, const std::optional<Vec>& se,
                    std::int64_t ms, const std::string& flags) {
  for (std::size_t j = 0; j < names.size(); ++j) {
    ReplicationRecord r;
    r.rep = rep;
    r.method = method;
    r.param = names[j];
    r.estimate = est.size() ? est[static_cast<Index>(j)] : kNaN;
    if (se && std::isfinite((*se)[static_cast<Index>(j)])) r.se = (*se)[static_cast<Index>(j)];
    r.runtime_ms = ms;
    r.flags = flags;
    out.push_back(std::move(r));
  }
}

bool record_less(const ReplicationRecord& a, const ReplicationRecord& b) {
  return std::tie(a.rep, a.method, a.param) < std::tie(b.rep, b.method, b.param);
}

template <class T>
T json_get(const nlohmann::json& j, const char* field) {
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw UsageError(std::string("config field '") + field + "' is malformed");
  }
}

}  // namespace

void StudyConfig::validate() const {
  if (reps < 1) throw UsageError("config field 'reps' must be at least 1");
  if (n < 50) throw UsageError("config field 'n' must be at least 50");
  if (workers < 1) throw UsageError("config field 'workers' must be at least 1");
  if (scores.empty()) throw UsageError("config field 'scores' must name at least one score choice");
  if (!run_fsr && !run_bc) throw UsageError("config field 'methods' must include fsr or bc");
  for (ScoreChoice c : scores) {
    try {
      structural_spec(study, c);
    } catch (const UsageError& e) {
      throw UsageError(std::string("config field 'scores': ") + e.what());
    }
  }
  rm.validate();
  acm.validate(study_layout(study).q());
}

StudyConfig default_config(Study s) {
  StudyConfig c;
  c.study = s;
  switch (s) {
    case Study::one:
      c.scores = {ScoreChoice::BB};
      break;
    case Study::two:
      c.scores = {ScoreChoice::BB};
      c.reps = 100;
      break;
    case Study::three:
      c.scores = {ScoreChoice::EAP};
      c.reps = 50;
      c.acm.delta = 0.005;
      c.acm.blocks = equal_blocks(study_layout(s).q(), 15);
      break;
  }
  return c;
}

StudyConfig study_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  int study = 1;
  if (j.contains("study")) study = json_get<int>(j, "study");
  StudyConfig c;
  try {
    c = default_config(study_from_int(study));
  } catch (const Error&) {
    throw UsageError("config field 'study' must be 1, 2 or 3");
  }
  static const char* known[] = {"study", "n", "reps", "seed", "scores", "methods", "compute_se", "workers", "rm", "acm"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
        std::end(known))
      throw UsageError("config field '" + it.key() + "' is not recognised");

  if (j.contains("n")) c.n = json_get<Index>(j, "n");
  if (j.contains("reps")) c.reps = json_get<int>(j, "reps");
  if (j.contains("seed")) c.seed = json_get<std::uint64_t>(j, "seed");
  if (j.contains("workers")) c.workers = json_get<int>(j, "workers");
  if (j.contains("compute_se")) c.compute_se = json_get<bool>(j, "compute_se");
  if (j.contains("scores")) {
    std::vector<std::string> names;
    if (j["scores"].is_string()) names = {j["scores"].get<std::string>()};
    else names = json_get<std::vector<std::string>>(j, "scores");
    c.scores.clear();
    for (const auto& s : names) {
      try {
        c.scores.push_back(parse_score_choice(s));
      } catch (const Error&) {
        throw UsageError("config field 'scores' has unknown choice '" + s + "'");
      }
    }
  }
  if (j.contains("methods")) {
    const auto m = json_get<std::vector<std::string>>(j, "methods");
    c.run_fsr = c.run_bc = false;
    for (const auto& s : m) {
      if (s == "fsr") c.run_fsr = true;
      else if (s == "bc") c.run_bc = true;
      else throw UsageError("config field 'methods' has unknown method '" + s + "'");
    }
  }
  if (j.contains("rm")) {
    const auto& r = j["rm"];
    if (!r.is_object()) throw UsageError("config field 'rm' must be an object");
    if (r.contains("K")) c.rm.K = json_get<int>(r, "K");
    if (r.contains("a")) c.rm.a = json_get<double>(r, "a");
    if (r.contains("b")) c.rm.b = json_get<double>(r, "b");
    if (r.contains("mc_per_iter")) c.rm.mc_per_iter = json_get<int>(r, "mc_per_iter");
  }
  if (j.contains("acm")) {
    const auto& a = j["acm"];
    if (!a.is_object()) throw UsageError("config field 'acm' must be an object");
    if (a.contains("M")) c.acm.M = json_get<int>(a, "M");
    if (a.contains("delta")) c.acm.delta = json_get<double>(a, "delta");
    if (a.contains("workers")) c.acm.workers = json_get<int>(a, "workers");
    if (a.contains("blocks")) {
      const Index q = study_layout(c.study).q();
      if (a["blocks"].is_number_integer()) {
        const auto B = json_get<Index>(a, "blocks");
        if (B < 1 || B > q) throw UsageError("config field 'acm.blocks' must lie in [1, q]");
        c.acm.blocks = equal_blocks(q, B);
      } else {
        c.acm.blocks = json_get<std::vector<std::vector<Index>>>(a, "blocks");
      }
    }
  }
  c.validate();
  return c;
}

bool same_result(const ReplicationRecord& a, const ReplicationRecord& b) {
  auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  return a.rep == b.rep && a.method == b.method && a.param == b.param && same(a.estimate, b.estimate) &&
         a.se.has_value() == b.se.has_value() && (!a.se || same(*a.se, *b.se)) && a.flags == b.flags;
}

std::string method_label(bool corrected, ScoreChoice c) {
  return std::string(corrected ? "BC(" : "FSR(") + to_string(c) + ")";
}

std::uint64_t replication_seed(std::uint64_t base, int rep) {
  return rng::mix({base, static_cast<std::uint64_t>(rep)});
}

std::vector<ReplicationRecord> run_replication(const StudyConfig& cfg, int rep) {
  const StudyLayout& L = study_layout(cfg.study);
  const std::uint64_t seed = replication_seed(cfg.seed, rep);
  const Vec truth = study_truth(cfg.study).values();
  const auto U = draw_components(cfg.n, L.component_layout(cfg.n), seed, rng::label("data"));
  const Dataset Y = generate(cfg.study, U, truth);
  const auto& names = L.focal_names;

  std::vector<ReplicationRecord> out;
  for (ScoreChoice choice : cfg.scores) {
    const StudyModel model(cfg.study, choice, cfg.n);
    auto t0 = Clock::now();
    Vec nu, phi;
    try {
      nu = model.estimate_nuisance(Y);
      phi = model.estimate_focal(Y, nu);
    } catch (const Error& e) {
      const std::string f = clean_flag(std::string("error=") + e.what());
      if (cfg.run_fsr) append_records(out, rep, method_label(false, choice), names, Vec(), std::nullopt, 0, f);
      if (cfg.run_bc) append_records(out, rep, method_label(true, choice), names, Vec(), std::nullopt, 0, f);
      continue;
    }
    const std::int64_t stage_ms = elapsed_ms(t0);

    if (cfg.run_fsr) {
      std::optional<Vec> se;
      std::string flags;
      t0 = Clock::now();
      if (cfg.compute_se && choice == ScoreChoice::BR) {
        ACMConfig boot = cfg.acm;
        boot.seed = rng::mix({seed, rng::label("br")});
        try {
          const Mat omega = bootstrap_omega(combine(nu, phi, model.partition()), boot, model);
          Vec s = Vec::Constant(model.partition().q1(), kNaN);
          for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j].rfind("beta", 0) == 0) {
              const Index k = model.partition().focal_idx[j];
              s[static_cast<Index>(j)] = std::sqrt(omega(k, k));
            }
          se = s;
        } catch (const Error& e) {
          join_flag(flags, std::string("se_error=") + e.what());
        }
      }
      append_records(out, rep, method_label(false, choice), names, phi, se, stage_ms + elapsed_ms(t0), flags);
    }

    if (cfg.run_bc) {
      t0 = Clock::now();
      RMConfig rm = cfg.rm;
      rm.feasibility = model.feasibility();
      std::string flags;
      Vec phi_bc;
      try {
        const RMTrace trace = robbins_monro(phi, nu, rm, model, seed);
        phi_bc = trace.phi_bc;
        join_flag(flags, "projections=" + std::to_string(trace.projections));
      } catch (const Error& e) {
        join_flag(flags, std::string("error=") + e.what());
        append_records(out, rep, method_label(true, choice), names, Vec(), std::nullopt,
                       stage_ms + elapsed_ms(t0), flags);
        continue;
      }
      std::optional<Vec> se;
      if (cfg.compute_se) {
        ACMConfig acm = cfg.acm;
        acm.seed = seed;
        try {
          const ACMResult r = compute_acm(combine(nu, phi_bc, model.partition()), acm, model);
          se = r.ses;
          join_flag(flags, "acm_skipped=" + std::to_string(r.skipped));
          if (r.delta_shrinks > 0) join_flag(flags, "delta_shrinks=" + std::to_string(r.delta_shrinks));
        } catch (const Error& e) {
          join_flag(flags, std::string("se_error=") + e.what());
        }
      }
      append_records(out, rep, method_label(true, choice), names, phi_bc, se, stage_ms + elapsed_ms(t0), flags);
    }
  }
  std::sort(out.begin(), out.end(), record_less);
  return out;
}

std::vector<ReplicationRecord> run_study(const StudyConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<ReplicationRecord>> per(static_cast<std::size_t>(cfg.reps));
  parallel_for(cfg.reps, cfg.workers,
               [&](Index i) { per[static_cast<std::size_t>(i)] = run_replication(cfg, static_cast<int>(i + 1)); });
  std::vector<ReplicationRecord> all;
  for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
  std::sort(all.begin(), all.end(), record_less);
  return all;
}

SummaryTable aggregate(const std::vector<ReplicationRecord>& records, const ParameterVector& truth) {
  struct Acc {
    std::vector<double> est;
    std::vector<double> se2;
    bool all_se = true;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.method, r.param}];
    if (!std::isfinite(r.estimate)) continue;
    g.est.push_back(r.estimate);
    if (r.se && std::isfinite(*r.se)) g.se2.push_back(*r.se * *r.se);
    else g.all_se = false;
  }
  SummaryTable table;
  for (const auto& [key, g] : groups) {
    const auto idx = truth.find(key.second);
    if (!idx) throw DataError("no truth value for parameter '" + key.second + "'");
    const double t = truth[*idx];
    SummaryRow row;
    row.method = key.first;
    row.param = key.second;
    row.reps = static_cast<int>(g.est.size());
    double mean = 0.0;
    for (double x : g.est) mean += x;
    mean = g.est.empty() ? kNaN : mean / g.est.size();
    if (t == 0.0) {
      row.rb = mean - t;
      row.absolute_bias = true;
    } else {
      row.rb = (mean - t) / t;
    }
    if (g.est.size() >= 2) {
      double ss = 0.0;
      for (double x : g.est) ss += (x - mean) * (x - mean);
      row.ese = std::sqrt(ss / (g.est.size() - 1));
    } else {
      row.ese = kNaN;
    }
    if (g.all_se && !g.se2.empty()) {
      double m2 = 0.0;
      for (double v : g.se2) m2 += v;
      row.rbse = (std::sqrt(m2 / g.se2.size()) - row.ese) / row.ese;
    }
    table.push_back(row);
  }
  std::stable_sort(table.begin(), table.end(), [&](const SummaryRow& a, const SummaryRow& b) {
    if (a.method != b.method) return a.method < b.method;
    return *truth.find(a.param) < *truth.find(b.param);
  });
  return table;
}

void write_records_csv(std::ostream& os, const std::vector<ReplicationRecord>& records) {
  os << "rep,method,param,estimate,se,runtime_ms,flags\n";
  for (const auto& r : records) {
    os << r.rep << ',' << r.method << ',' << r.param << ',' << fmt(r.estimate) << ','
       << (r.se ? fmt(*r.se) : std::string()) << ',' << r.runtime_ms << ',' << clean_flag(r.flags) << '\n';
  }
}

std::vector<ReplicationRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("records file is empty");
  if (split_csv(line) != std::vector<std::string>{"rep", "method", "param", "estimate", "se", "runtime_ms", "flags"})
    throw DataError("records header must be rep,method,param,estimate,se,runtime_ms,flags");
  std::vector<ReplicationRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw DataError("records line " + std::to_string(lineno) + " does not have 7 fields");
    ReplicationRecord r;
    r.rep = static_cast<int>(parse_double(f[0], "rep"));
    r.method = f[1];
    r.param = f[2];
    r.estimate = parse_double(f[3], "estimate");
    if (!f[4].empty()) r.se = parse_double(f[4], "se");
    r.runtime_ms = static_cast<std::int64_t>(parse_double(f[5], "runtime_ms"));
    r.flags = f[6];
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary_csv(std::ostream& os, const SummaryTable& table) {
  os << "method,param,rb,ese,rbse,reps\n";
  for (const auto& r : table)
    os << r.method << ',' << r.param << ',' << fmt(r.rb) << ',' << fmt(r.ese) << ','
       << (r.rbse ? fmt(*r.rbse) : std::string()) << ',' << r.reps << '\n';
}

SummaryTable read_summary_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("summary file is empty");
  SummaryTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) throw DataError("summary line does not have 6 fields");
    SummaryRow r;
    r.method = f[0];
    r.param = f[1];
    r.rb = parse_double(f[2], "rb");
    r.ese = parse_double(f[3], "ese");
    if (!f[4].empty()) r.rbse = parse_double(f[4], "rbse");
    r.reps = static_cast<int>(parse_double(f[5], "reps"));
    t.push_back(r);
  }
  return t;
}

std::string truth_to_json(Study s, const ParameterVector& truth) {
  nlohmann::json j;
  j["study"] = to_int(s);
  j["names"] = truth.names();
  j["values"] = std::vector<double>(truth.values().data(), truth.values().data() + truth.size());
  return j.dump(2) + "\n";
}

ParameterVector truth_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const auto names = j.at("names").get<std::vector<std::string>>();
    const auto values = j.at("values").get<std::vector<double>>();
    if (names.size() != values.size()) throw DataError("truth names and values differ in length");
    return ParameterVector(Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size())), names);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed truth JSON: ") + e.what());
  }
}

const SummaryRow* find_row(const SummaryTable& t, const std::string& method, const std::string& param) {
  for (const auto& r : t)
    if (r.method == method && r.param == param) return &r;
  return nullptr;
}

}  // namespace tsbc
