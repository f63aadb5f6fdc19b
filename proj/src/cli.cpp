#include "tsbc/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsbc/acm.hpp"
#include "tsbc/bias_correct.hpp"
#include "tsbc/dga.hpp"
#include "tsbc/errors.hpp"
#include "tsbc/harness.hpp"
#include "tsbc/model.hpp"
#include "tsbc/parallel.hpp"
#include "tsbc/rng.hpp"

namespace tsbc {

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream o(p, std::ios::binary);
  if (!o) throw DataError("cannot write '" + p.string() + "'");
  return o;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<ScoreChoice> parse_scores(const std::string& s) {
  std::vector<ScoreChoice> out;
  for (const auto& t : split_list(s)) {
    try {
      out.push_back(parse_score_choice(t));
    } catch (const Error&) {
      throw UsageError("--scores: unknown score choice '" + t + "'");
    }
  }
  if (out.empty()) throw UsageError("--scores must name at least one score choice");
  return out;
}

struct CommonFlags {
  std::string config;
  int study = 1;
  long long n = 500;
  int reps = 200;
  unsigned long long seed = 42;
  std::string scores;
  std::string methods;
  bool se = false;
  int M = 1000;
  int K = 1000;
  double delta = 0;
  int workers = 0;
};

StudyConfig build_config(const CLI::App& sub, const CommonFlags& f) {
  auto given = [&sub](const std::string& name) {
    const auto* opt = sub.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  StudyConfig c = f.config.empty() ? default_config(study_from_int(f.study)) : study_config_from_json(slurp(f.config));
  if (!f.config.empty() && given("--study") && study_from_int(f.study) != c.study)
    throw UsageError("--study disagrees with the config file");
  if (given("--n")) c.n = f.n;
  if (given("--reps")) c.reps = f.reps;
  if (given("--seed")) c.seed = f.seed;
  if (given("--scores")) c.scores = parse_scores(f.scores);
  if (given("--methods")) {
    c.run_fsr = c.run_bc = false;
    for (const auto& m : split_list(f.methods)) {
      if (m == "fsr") c.run_fsr = true;
      else if (m == "bc") c.run_bc = true;
      else throw UsageError("--methods: unknown method '" + m + "'");
    }
  }
  if (given("--se")) c.compute_se = f.se;
  if (given("--M")) c.acm.M = f.M;
  if (given("--K")) c.rm.K = f.K;
  if (given("--delta")) c.acm.delta = f.delta;
  if (given("--workers")) c.workers = f.workers;
  else if (f.config.empty()) c.workers = default_workers();
  return c;
}

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON configuration file");
  sub->add_option("--study", f.study, "study number (1, 2 or 3)")->check(CLI::Range(1, 3));
  sub->add_option("--n", f.n, "sample size");
  sub->add_option("--seed", f.seed, "base seed");
  sub->add_option("--scores", f.scores, "score choices, comma separated (MM, BB, RR, BR, EAP)");
  sub->add_option("--K", f.K, "Robbins-Monro iterations");
  sub->add_option("--workers", f.workers, "worker threads (default TSBC_THREADS or all cores)");
}

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage bias correction for factor score regression"};
  app.require_subcommand(1);

  CommonFlags sim;
  std::string sim_out = "runs";
  auto* simulate = app.add_subcommand("simulate", "run a replication study and write records.csv and summary.csv");
  add_common(simulate, sim);
  simulate->add_option("--reps", sim.reps, "replications");
  simulate->add_option("--methods", sim.methods, "fsr, bc or fsr,bc");
  simulate->add_flag("--se", sim.se, "compute standard errors");
  simulate->add_option("--M", sim.M, "Monte Carlo draws for standard errors");
  simulate->add_option("--delta", sim.delta, "SP perturbation constant");
  simulate->add_option("--out", sim_out, "output directory");

  CommonFlags cor;
  std::string cor_data, cor_model, cor_out;
  bool cor_no_se = false;
  auto* correct = app.add_subcommand("correct", "bias-correct a dataset and report standard errors as JSON");
  correct->add_option("--data", cor_data, "dataset CSV with a header row")->required();
  correct->add_option("--model", cor_model, "model JSON (study, optional rm/acm settings)")->required();
  correct->add_option("--scores", cor.scores, "score choice");
  correct->add_option("--seed", cor.seed, "seed");
  correct->add_option("--K", cor.K, "Robbins-Monro iterations");
  correct->add_option("--M", cor.M, "Monte Carlo draws for standard errors");
  correct->add_option("--workers", cor.workers, "worker threads");
  correct->add_flag("--no-se", cor_no_se, "skip standard errors");
  correct->add_option("--out", cor_out, "output JSON file (default stdout)");

  std::string rep_records, rep_truth, rep_out;
  auto* report = app.add_subcommand("report", "aggregate a records CSV against a truth JSON");
  report->add_option("--records", rep_records, "records CSV")->required();
  report->add_option("--truth", rep_truth, "truth JSON")->required();
  report->add_option("--out", rep_out, "summary CSV (default stdout)");

  CommonFlags tr;
  int tr_rep = 1;
  std::string tr_out;
  auto* trace = app.add_subcommand("trace", "write the Robbins-Monro trace of one replication as CSV");
  add_common(trace, tr);
  trace->add_option("--rep", tr_rep, "replication index")->check(CLI::PositiveNumber);
  trace->add_option("--out", tr_out, "trace CSV (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? 0 : 1;
  }

  try {
    if (*simulate) {
      const StudyConfig cfg = build_config(*simulate, sim);
      cfg.validate();
      const auto records = run_study(cfg);
      const auto table = aggregate(records, study_truth(cfg.study));
      const std::filesystem::path dir(sim_out);
      auto r = open_out(dir / "records.csv");
      write_records_csv(r, records);
      auto s = open_out(dir / "summary.csv");
      write_summary_csv(s, table);
      write_summary_csv(out, table);
    } else if (*report) {
      std::ifstream in(rep_records);
      if (!in) throw DataError("cannot open '" + rep_records + "'");
      const auto table = aggregate(read_records_csv(in), truth_from_json(slurp(rep_truth)));
      if (rep_out.empty()) {
        write_summary_csv(out, table);
      } else {
        auto o = open_out(rep_out);
        write_summary_csv(o, table);
      }
    } else if (*trace) {
      StudyConfig cfg = build_config(*trace, tr);
      cfg.validate();
      const StudyModel model(cfg.study, cfg.scores.front(), cfg.n);
      const std::uint64_t seed = replication_seed(cfg.seed, tr_rep);
      const auto& L = study_layout(cfg.study);
      const auto U = draw_components(cfg.n, L.component_layout(cfg.n), seed, rng::label("data"));
      const Dataset Y = generate(cfg.study, U, study_truth(cfg.study).values());
      const Vec nu = model.estimate_nuisance(Y);
      const Vec phi = model.estimate_focal(Y, nu);
      RMConfig rm = cfg.rm;
      rm.feasibility = model.feasibility();
      const RMTrace t = robbins_monro(phi, nu, rm, model, seed);
      if (tr_out.empty()) {
        write_trace_csv(out, t, L.focal_names);
      } else {
        auto o = open_out(tr_out);
        write_trace_csv(o, t, L.focal_names);
      }
    } else if (*correct) {
      StudyConfig cfg = study_config_from_json(slurp(cor_model));
      if (correct->count("--scores")) cfg.scores = parse_scores(cor.scores);
      if (correct->count("--seed")) cfg.seed = cor.seed;
      if (correct->count("--K")) cfg.rm.K = cor.K;
      if (correct->count("--M")) cfg.acm.M = cor.M;
      cfg.acm.workers = correct->count("--workers") ? cor.workers : default_workers();
      const Dataset Y = read_dataset_csv(cor_data, cfg.study);
      if (Y.p() != study_layout(cfg.study).p)
        throw DataError("dataset has " + std::to_string(Y.p()) + " columns; study " +
                        std::to_string(to_int(cfg.study)) + " expects " + std::to_string(study_layout(cfg.study).p));
      cfg.n = Y.n();
      cfg.validate();
      const ScoreChoice choice = cfg.scores.front();
      const StudyModel model(cfg.study, choice, Y.n());
      const Vec nu = model.estimate_nuisance(Y);
      const Vec phi = model.estimate_focal(Y, nu);
      RMConfig rm = cfg.rm;
      rm.feasibility = model.feasibility();
      const RMTrace t = robbins_monro(phi, nu, rm, model, cfg.seed);
      nlohmann::json j;
      j["study"] = to_int(cfg.study);
      j["scores"] = to_string(choice);
      j["n"] = Y.n();
      j["names"] = study_layout(cfg.study).focal_names;
      j["nu_hat"] = vec_json(nu);
      j["phi_hat"] = vec_json(phi);
      j["phi_bc"] = vec_json(t.phi_bc);
      if (!cor_no_se) {
        ACMConfig acm = cfg.acm;
        acm.seed = cfg.seed;
        const ACMResult r = compute_acm(combine(nu, t.phi_bc, model.partition()), acm, model);
        j["ses"] = vec_json(r.ses);
        j["acm_skipped"] = r.skipped;
      }
      const std::string text = j.dump(2) + "\n";
      if (cor_out.empty()) {
        out << text;
      } else {
        auto o = open_out(cor_out);
        o << text;
      }
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "input error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "input error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace tsbc
