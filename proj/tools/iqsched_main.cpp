// Command-line front end: experiment orchestration, artifact persistence, and
// canned reproduction presets. Subcommands: simulate, solve, verify, ht,
// reproduce <table1|table2|figure1|figure2>.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "iqs/core.hpp"
#include "iqs/geometry.hpp"
#include "iqs/mdp.hpp"
#include "iqs/policies.hpp"
#include "iqs/sim.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kToolkitVersion = "1.0.0";

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string num(double v) { return json(v).dump(); }

const char* queue_label(int id) {
  static const char* names[4] = {"q11", "q12", "q21", "q22"};
  return names[id];
}

// ---------------------------------------------------------------------------
// Config schema

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* name : allowed)
      if (it.key() == name) {
        known = true;
        break;
      }
    if (!known) fail("unknown key '" + it.key() + "' in " + where);
  }
}

double get_number(const json& obj, const char* key, double dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_number()) fail(std::string("'") + key + "' must be a number");
  return obj.at(key).get<double>();
}

long long get_integer(const json& obj, const char* key, long long dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_number_integer())
    fail(std::string("'") + key + "' must be an integer");
  return obj.at(key).get<long long>();
}

std::string get_string(const json& obj, const char* key, const std::string& dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_string()) fail(std::string("'") + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

std::vector<double> get_number_list(const json& obj, const char* key) {
  std::vector<double> out;
  if (!obj.contains(key)) return out;
  if (!obj.at(key).is_array()) fail(std::string("'") + key + "' must be an array");
  for (const json& v : obj.at(key)) {
    if (!v.is_number()) fail(std::string("'") + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

struct Resolved {
  std::string mode, experiment_id, out_dir;
  int n = 2;
  std::vector<double> costs;      // n*n
  std::vector<double> rates;      // n*n Bernoulli rates (may be empty)
  std::vector<double> rate_list;  // symmetric-rate sweep
  std::vector<std::string> policy_ids;
  std::string baseline;
  bool gap_of_baseline = false;  // report (baseline - policy)/policy instead
  double beta = 0.0;
  long long horizon = 0, warmup = 0;
  int replications = 100;
  std::uint64_t seed = 1;
  int threads = 0;
  std::vector<int> q0;
  long long residual_stride = 0;
  std::vector<double> eps_list;
  std::vector<double> nu;
  int solve_qmax = 30;
  double solve_tol = 1e-9;
  double solve_target_eps = 0.0;
  int solve_max_sweeps = 100000;
  std::string verify_value_file;
  int exact_qmax = 8;
  int exact_sweeps = 12;

  json document() const;
};

json Resolved::document() const {
  json doc;
  doc["mode"] = mode;
  doc["experiment_id"] = experiment_id;
  doc["out"] = out_dir;
  doc["switch"] = {{"n", n}, {"costs", costs}};
  if (!rates.empty()) doc["arrivals"] = {{"kind", "bernoulli"}, {"rates", rates}};
  if (!rate_list.empty()) doc["rate_list"] = rate_list;
  if (!policy_ids.empty()) doc["policies"] = policy_ids;
  if (!baseline.empty()) {
    doc["baseline"] = baseline;
    doc["gap"] = gap_of_baseline ? "baseline-minus-policy" : "policy-minus-baseline";
  }
  doc["beta"] = beta;
  doc["horizon"] = horizon;
  doc["warmup"] = warmup;
  doc["replications"] = replications;
  doc["seed"] = seed;
  doc["threads"] = threads;
  if (!q0.empty()) doc["q0"] = q0;
  doc["residual_stride"] = residual_stride;
  if (!eps_list.empty()) doc["eps_list"] = eps_list;
  if (!nu.empty()) doc["nu"] = nu;
  if (mode == "solve")
    doc["solve"] = {{"qmax", solve_qmax},
                    {"tol", solve_tol},
                    {"target_eps", solve_target_eps},
                    {"max_sweeps", solve_max_sweeps}};
  if (mode == "verify")
    doc["verify"] = {{"value_file", verify_value_file},
                     {"exact_qmax", exact_qmax},
                     {"exact_sweeps", exact_sweeps}};
  doc["toolkit_version"] = kToolkitVersion;
  return doc;
}

Resolved parse_config(const json& cfg) {
  require_keys(cfg, "config",
               {"mode", "experiment_id", "out", "switch", "arrivals", "rate_list",
                "policies", "baseline", "gap", "beta", "horizon", "warmup",
                "replications", "seed", "threads", "q0", "residual_stride", "eps_list",
                "nu", "solve", "verify"});
  Resolved r;
  r.mode = get_string(cfg, "mode", "");
  if (r.mode != "average" && r.mode != "discounted" && r.mode != "heavy-traffic" &&
      r.mode != "solve" && r.mode != "verify")
    fail("'mode' must be one of average, discounted, heavy-traffic, solve, verify");
  r.experiment_id = get_string(cfg, "experiment_id", r.mode);
  r.out_dir = get_string(cfg, "out", "out/" + r.experiment_id);

  if (cfg.contains("switch")) {
    const json& sw = cfg.at("switch");
    require_keys(sw, "switch", {"n", "costs"});
    r.n = static_cast<int>(get_integer(sw, "n", 2));
    if (r.n < 2) fail("'switch.n' must be at least 2");
    r.costs = get_number_list(sw, "costs");
  }
  if (r.costs.empty()) r.costs.assign(r.n * r.n, 1.0);
  if (static_cast<int>(r.costs.size()) != r.n * r.n)
    fail("'switch.costs' must list n*n entries");
  for (double c : r.costs)
    if (!(c > 0)) fail("'switch.costs' must be strictly positive");

  if (cfg.contains("arrivals")) {
    const json& ar = cfg.at("arrivals");
    require_keys(ar, "arrivals", {"kind", "rate", "rates"});
    if (get_string(ar, "kind", "bernoulli") != "bernoulli")
      fail("'arrivals.kind' must be 'bernoulli'");
    if (ar.contains("rates")) {
      r.rates = get_number_list(ar, "rates");
      if (static_cast<int>(r.rates.size()) != r.n * r.n)
        fail("'arrivals.rates' must list n*n entries");
    } else if (ar.contains("rate")) {
      r.rates.assign(r.n * r.n, get_number(ar, "rate", 0.0));
    } else {
      fail("'arrivals' needs 'rate' or 'rates'");
    }
    for (double p : r.rates)
      if (p < 0.0 || p > 1.0) fail("Bernoulli rates must lie in [0,1]");
  }

  r.rate_list = get_number_list(cfg, "rate_list");
  for (double p : r.rate_list)
    if (p < 0.0 || p > 1.0) fail("'rate_list' rates must lie in [0,1]");

  if (cfg.contains("policies")) {
    if (!cfg.at("policies").is_array()) fail("'policies' must be an array");
    for (const json& p : cfg.at("policies")) {
      if (!p.is_string()) fail("'policies' must hold strings");
      r.policy_ids.push_back(p.get<std::string>());
    }
  }
  r.baseline = get_string(cfg, "baseline", "");
  {
    const std::string gap = get_string(cfg, "gap", "policy-minus-baseline");
    if (gap != "policy-minus-baseline" && gap != "baseline-minus-policy")
      fail("'gap' must be policy-minus-baseline or baseline-minus-policy");
    if (cfg.contains("gap") && r.baseline.empty())
      fail("'gap' needs a 'baseline'");
    r.gap_of_baseline = gap == "baseline-minus-policy";
  }
  r.beta = get_number(cfg, "beta", 0.0);
  if (r.beta < 0.0 || r.beta >= 1.0) fail("'beta' must lie in [0,1)");
  r.horizon = get_integer(cfg, "horizon", 0);
  r.warmup = get_integer(cfg, "warmup", 0);
  if (r.horizon < 0 || r.warmup < 0) fail("'horizon' and 'warmup' must be >= 0");
  r.replications = static_cast<int>(get_integer(cfg, "replications", 100));
  if (r.replications < 1) fail("'replications' must be >= 1");
  {
    const long long s = get_integer(cfg, "seed", 1);
    if (s < 0) fail("'seed' must be >= 0");
    r.seed = static_cast<std::uint64_t>(s);
  }
  r.threads = static_cast<int>(get_integer(cfg, "threads", 0));
  if (r.threads < 0) fail("'threads' must be >= 0");
  if (cfg.contains("q0")) {
    for (double v : get_number_list(cfg, "q0")) {
      if (v < 0 || v != static_cast<long long>(v)) fail("'q0' must hold nonnegative integers");
      r.q0.push_back(static_cast<int>(v));
    }
    if (static_cast<int>(r.q0.size()) != r.n * r.n) fail("'q0' must list n*n entries");
  }
  r.residual_stride = get_integer(cfg, "residual_stride", 0);
  if (r.residual_stride < 0) fail("'residual_stride' must be >= 0");
  r.eps_list = get_number_list(cfg, "eps_list");
  r.nu = get_number_list(cfg, "nu");

  if (cfg.contains("solve")) {
    const json& so = cfg.at("solve");
    require_keys(so, "solve", {"qmax", "tol", "target_eps", "max_sweeps"});
    r.solve_qmax = static_cast<int>(get_integer(so, "qmax", 30));
    r.solve_tol = get_number(so, "tol", 1e-9);
    r.solve_target_eps = get_number(so, "target_eps", 0.0);
    r.solve_max_sweeps = static_cast<int>(get_integer(so, "max_sweeps", 100000));
  }
  if (cfg.contains("verify")) {
    const json& ve = cfg.at("verify");
    require_keys(ve, "verify", {"value_file", "exact_qmax", "exact_sweeps"});
    r.verify_value_file = get_string(ve, "value_file", "");
    r.exact_qmax = static_cast<int>(get_integer(ve, "exact_qmax", 8));
    r.exact_sweeps = static_cast<int>(get_integer(ve, "exact_sweeps", 12));
  }

  // Mode-specific requirements.
  if (r.mode == "average" || r.mode == "discounted") {
    if (r.policy_ids.empty()) fail("'policies' must list at least one policy");
    if (r.rates.empty() && r.rate_list.empty())
      fail("'arrivals' (or 'rate_list') is required");
    if (r.mode == "discounted" && !(r.beta > 0.0))
      fail("'beta' in (0,1) is required in discounted mode");
  } else if (r.mode == "heavy-traffic") {
    if (r.eps_list.empty()) fail("'eps_list' is required in heavy-traffic mode");
    if (r.policy_ids.size() > 1) fail("heavy-traffic mode takes at most one policy");
    if (!r.nu.empty() && static_cast<int>(r.nu.size()) != r.n * r.n)
      fail("'nu' must list n*n entries");
  } else if (r.mode == "solve") {
    if (r.rates.empty()) fail("'arrivals' is required in solve mode");
    if (!(r.beta > 0.0)) fail("'beta' in (0,1) is required in solve mode");
    if (r.n != 2) fail("solve mode handles the 2x2 switch only");
  } else if (r.mode == "verify") {
    if (r.verify_value_file.empty()) fail("'verify.value_file' is required");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Output plumbing

struct CsvRow {
  std::string policy, param_name, param_value, statistic;
  int replication = 0;
  double value = 0;
};

void write_results_csv(const fs::path& path, const std::string& experiment_id,
                       const std::vector<CsvRow>& rows) {
  std::ofstream out(path);
  if (!out) fail("cannot write " + path.string());
  out << "experiment_id,policy,param_name,param_value,replication,statistic,value\n";
  for (const CsvRow& row : rows)
    out << experiment_id << ',' << row.policy << ',' << row.param_name << ','
        << row.param_value << ',' << row.replication << ',' << row.statistic << ','
        << num(row.value) << '\n';
}

struct FigureRow {
  double x = 0;
  std::string policy;
  double mean = 0, ci_low = 0, ci_high = 0;
};

void write_figure_csv(const fs::path& path, const std::vector<FigureRow>& rows) {
  std::ofstream out(path);
  if (!out) fail("cannot write " + path.string());
  out << "x,policy,mean,ci_low,ci_high\n";
  for (const FigureRow& row : rows)
    out << num(row.x) << ',' << row.policy << ',' << num(row.mean) << ','
        << num(row.ci_low) << ',' << num(row.ci_high) << '\n';
}

void append_estimate_rows(std::vector<CsvRow>& rows, const iqs::SimEstimate& est,
                          const std::string& policy, const std::string& param_name,
                          const std::string& param_value) {
  for (std::size_t rep = 0; rep < est.per_rep.size(); ++rep)
    rows.push_back({policy, param_name, param_value, est.statistic,
                    static_cast<int>(rep), est.per_rep[rep]});
}

json estimate_json(const iqs::SimEstimate& est) {
  return {{"statistic", est.statistic},
          {"mean", est.mean},
          {"ci_low", est.mean - est.half_width95},
          {"ci_high", est.mean + est.half_width95},
          {"replications", est.replications}};
}

void write_run_outputs(const Resolved& r, const json& summary,
                       const std::vector<CsvRow>& csv_rows,
                       const std::vector<FigureRow>& figure_rows) {
  fs::create_directories(r.out_dir);
  const json doc = r.document();
  {
    std::ofstream out(fs::path(r.out_dir) / "resolved_config.json");
    if (!out) fail("cannot write resolved_config.json");
    out << doc.dump(2) << '\n';
  }
  json full = summary;
  full["experiment_id"] = r.experiment_id;
  full["toolkit_version"] = kToolkitVersion;
  full["settings_hash"] = hex64(fnv1a(doc.dump()));
  {
    std::ofstream out(fs::path(r.out_dir) / "summary.json");
    if (!out) fail("cannot write summary.json");
    out << full.dump(2) << '\n';
  }
  if (!csv_rows.empty())
    write_results_csv(fs::path(r.out_dir) / "results.csv", r.experiment_id, csv_rows);
  if (!figure_rows.empty())
    write_figure_csv(fs::path(r.out_dir) / "figure.csv", figure_rows);
}

// ---------------------------------------------------------------------------
// Policy construction

iqs::SimPolicy policy_from_id(const std::string& id, const iqs::SwitchConfig& config,
                              double beta) {
  if (id == "maxweight")
    return iqs::make_maxweight_policy(iqs::CostMatrix::unit(config.n));
  if (id == "c-maxweight") {
    iqs::SimPolicy p = iqs::make_maxweight_policy(config.cost);
    p.name = "c-maxweight";
    return p;
  }
  if (id == "symmetric-opt") return iqs::make_symmetric_optimal_policy(config);
  if (id.rfind("lookahead:k=", 0) == 0) {
    const std::string digits = id.substr(12);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      fail("bad look-ahead policy id '" + id + "' (want lookahead:k=<depth>)");
    if (config.n != 2) fail("look-ahead policies handle the 2x2 switch only");
    if (!(beta > 0.0 && beta < 1.0))
      fail("look-ahead policies need a discount factor in (0,1)");
    iqs::DpInstance inst{config.cost, config.arrivals, beta};
    return iqs::make_lookahead_policy(inst, std::stoi(digits));
  }
  if (id.rfind("table:", 0) == 0) {
    const std::string path = id.substr(6);
    if (path.empty()) fail("bad table policy id '" + id + "' (want table:<path>)");
    return iqs::make_table_policy(iqs::load_policy(path));
  }
  fail("unknown policy id '" + id + "'");
}

double policy_axis_value(const std::string& id) {
  if (id.rfind("lookahead:k=", 0) == 0) return std::stod(id.substr(12));
  return 0.0;
}

// ---------------------------------------------------------------------------
// simulate (average / discounted)

struct Experiment {
  std::string param_name, param_value;
  double axis = 0;  // numeric x for figure output
  iqs::SwitchConfig config;
};

std::vector<Experiment> build_experiments(const Resolved& r) {
  std::vector<Experiment> out;
  if (!r.rate_list.empty()) {
    for (double rate : r.rate_list) {
      Experiment e;
      e.param_name = "lambda";
      e.param_value = num(rate);
      e.axis = rate;
      e.config.n = r.n;
      e.config.cost = iqs::CostMatrix(r.n, r.costs);
      e.config.arrivals =
          iqs::ArrivalProcess::bernoulli(r.n, std::vector<double>(r.n * r.n, rate));
      out.push_back(std::move(e));
    }
  } else {
    Experiment e;
    e.config.n = r.n;
    e.config.cost = iqs::CostMatrix(r.n, r.costs);
    e.config.arrivals = iqs::ArrivalProcess::bernoulli(r.n, r.rates);
    out.push_back(std::move(e));
  }
  return out;
}

iqs::SimSpec base_spec(const Resolved& r, const Experiment& e, bool discounted) {
  iqs::SimSpec spec;
  spec.config = e.config;
  if (!r.q0.empty()) spec.q0 = iqs::QueueState(r.n, r.q0);
  spec.seed = r.seed;
  spec.replications = r.replications;
  spec.threads = std::max(1, r.threads);
  spec.residual_stride = r.residual_stride;
  if (discounted) {
    spec.beta = r.beta;
    spec.horizon = r.horizon;  // 0 = pick from the discount tail
    spec.warmup = 0;
  } else {
    spec.warmup = r.horizon == 0 ? 10000 : r.warmup;
    spec.horizon = r.horizon == 0 ? 100000 : r.horizon;
  }
  return spec;
}

int run_simulate(const Resolved& r) {
  const bool discounted = r.mode == "discounted";
  std::vector<CsvRow> csv;
  std::vector<FigureRow> figure;
  json results = json::array();
  json gaps = json::array();

  std::cout << "experiment " << r.experiment_id << " (" << r.mode << ")\n";
  for (const Experiment& e : build_experiments(r)) {
    iqs::SimEstimate baseline_est;
    bool baseline_recorded = false;
    iqs::SimSpec bspec;
    if (!r.baseline.empty()) {
      bspec = base_spec(r, e, discounted);
      bspec.policy = policy_from_id(r.baseline, e.config, r.beta);
    }
    for (const std::string& id : r.policy_ids) {
      iqs::SimSpec spec = base_spec(r, e, discounted);
      spec.policy = policy_from_id(id, e.config, r.beta);

      iqs::SimEstimate est;
      if (!r.baseline.empty() && id != r.baseline) {
        // Direction picks which run is the denominator B in (A - B)/B * 100.
        const iqs::GapEstimate gap = r.gap_of_baseline
                                         ? iqs::compare_policies(bspec, spec)
                                         : iqs::compare_policies(spec, bspec);
        est = r.gap_of_baseline ? gap.b : gap.a;
        if (!baseline_recorded) {
          baseline_est = r.gap_of_baseline ? gap.a : gap.b;
          baseline_recorded = true;
        }
        json g = {{"policy", spec.policy.name},
                  {"baseline", bspec.policy.name},
                  {"gap_percent", gap.percent},
                  {"gap_half_width95", gap.half_width95},
                  {"gap", r.gap_of_baseline ? "baseline-minus-policy"
                                            : "policy-minus-baseline"}};
        if (!e.param_name.empty()) {
          g["param_name"] = e.param_name;
          g["param_value"] = e.param_value;
        }
        gaps.push_back(g);
        const std::string lhs = r.gap_of_baseline ? bspec.policy.name : spec.policy.name;
        const std::string rhs = r.gap_of_baseline ? spec.policy.name : bspec.policy.name;
        std::cout << "  " << (e.param_name.empty() ? "" : e.param_value + "  ") << lhs
                  << " vs " << rhs << ": gap " << std::fixed << std::setprecision(2)
                  << gap.percent << "% +- " << gap.half_width95 << "%\n"
                  << std::defaultfloat << std::setprecision(6);
      } else {
        est = discounted ? iqs::discounted_total(spec) : iqs::long_run_average(spec);
        if (id == r.baseline) baseline_recorded = true;
      }

      append_estimate_rows(csv, est, spec.policy.name, e.param_name, e.param_value);
      json row = estimate_json(est);
      row["policy"] = spec.policy.name;
      if (!e.param_name.empty()) {
        row["param_name"] = e.param_name;
        row["param_value"] = e.param_value;
      }
      results.push_back(row);
      const double x = e.param_name.empty() ? policy_axis_value(id) : e.axis;
      figure.push_back({x, spec.policy.name, est.mean, est.mean - est.half_width95,
                        est.mean + est.half_width95});
      std::cout << "  " << (e.param_name.empty() ? "" : e.param_value + "  ")
                << spec.policy.name << ": " << est.statistic << " = " << est.mean
                << " +- " << est.half_width95 << "\n";
    }
    if (!r.baseline.empty() && baseline_recorded && !baseline_est.per_rep.empty()) {
      append_estimate_rows(csv, baseline_est, r.baseline, e.param_name, e.param_value);
      json row = estimate_json(baseline_est);
      row["policy"] = r.baseline;
      if (!e.param_name.empty()) {
        row["param_name"] = e.param_name;
        row["param_value"] = e.param_value;
      }
      results.push_back(row);
      const double x = e.param_name.empty() ? policy_axis_value(r.baseline) : e.axis;
      figure.push_back({x, r.baseline, baseline_est.mean,
                        baseline_est.mean - baseline_est.half_width95,
                        baseline_est.mean + baseline_est.half_width95});
    }
  }

  json summary;
  summary["results"] = results;
  if (!gaps.empty()) summary["gaps"] = gaps;
  write_run_outputs(r, summary, csv, figure);
  std::cout << "wrote " << r.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// heavy-traffic

int run_ht(const Resolved& r) {
  iqs::HeavyTrafficFamily family =
      r.nu.empty() ? iqs::HeavyTrafficFamily::uniform(r.n)
                   : iqs::HeavyTrafficFamily{r.n, r.nu};
  family.validate();
  const iqs::CostMatrix cost(r.n, r.costs);

  const std::string policy_id =
      r.policy_ids.empty() ? std::string("c-maxweight") : r.policy_ids.front();
  iqs::SwitchConfig ref_config{r.n, cost, family.arrivals_at(r.eps_list.front())};
  const iqs::SimPolicy policy = policy_from_id(policy_id, ref_config, r.beta);

  iqs::SimSpec tmpl;
  tmpl.config = ref_config;
  tmpl.policy = policy;
  if (!r.q0.empty()) tmpl.q0 = iqs::QueueState(r.n, r.q0);
  tmpl.horizon = r.horizon;
  tmpl.warmup = r.warmup;
  tmpl.seed = r.seed;
  tmpl.replications = r.replications;
  tmpl.threads = std::max(1, r.threads);
  tmpl.residual_stride = r.residual_stride;

  // Two independent routes to the asymptotic slope must agree; a mismatch
  // means one of them is wrong, so the run is flagged and fails.
  iqs::QVec sigma2_limit(r.n * r.n);
  for (int k = 0; k < r.n * r.n; ++k)
    sigma2_limit[k] = family.nu[k] * (1.0 - family.nu[k]);
  const double limit_basis = iqs::heavy_traffic_limit(sigma2_limit, cost);
  const double limit_matrix = iqs::matrix_limit(sigma2_limit, cost);
  bool consistent =
      std::abs(limit_basis - limit_matrix) <= 1e-9 * std::max(1.0, std::abs(limit_basis));
  const iqs::QVec zeta = iqs::zeta_general(cost);
  json zeta_block = {{"zeta", zeta},
                     {"limit_basis", limit_basis},
                     {"limit_matrix", limit_matrix}};
  if (r.n == 2) {
    const iqs::QVec closed = iqs::zeta_2x2(cost);
    double worst = 0;
    for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(closed[k] - zeta[k]));
    zeta_block["zeta_closed_form"] = closed;
    zeta_block["zeta_mismatch"] = worst;
    if (worst > 1e-9) consistent = false;
  }
  zeta_block["consistent"] = consistent;
  std::cout << "limit (basis) " << limit_basis << ", limit (matrix) " << limit_matrix
            << (consistent ? "" : "  FAIL: methods disagree") << "\n";

  const std::vector<iqs::HtRow> rows =
      iqs::heavy_traffic_sweep(family, policy, tmpl, r.eps_list);

  std::vector<CsvRow> csv;
  std::vector<FigureRow> figure;
  json jrows = json::array();
  bool bound_ok = true;
  for (const iqs::HtRow& row : rows) {
    const std::string pv = num(row.eps);
    append_estimate_rows(csv, row.raw_weighted, policy.name, "eps", pv);
    append_estimate_rows(csv, row.scaled_weighted, policy.name, "eps", pv);
    append_estimate_rows(csv, row.unused, policy.name, "eps", pv);
    if (row.perp_cone.replications > 0 && tmpl.residual_stride > 0) {
      append_estimate_rows(csv, row.perp_cone, policy.name, "eps", pv);
      append_estimate_rows(csv, row.perp_cone_sq, policy.name, "eps", pv);
      append_estimate_rows(csv, row.perp_subspace, policy.name, "eps", pv);
      append_estimate_rows(csv, row.perp_subspace_sq, policy.name, "eps", pv);
    }
    const bool row_ok =
        row.raw_weighted.mean >= row.lower_bound - row.raw_weighted.half_width95;
    bound_ok = bound_ok && row_ok;
    json j = {{"eps", row.eps},
              {"scaled", estimate_json(row.scaled_weighted)},
              {"raw", estimate_json(row.raw_weighted)},
              {"limit_prediction", row.limit_prediction},
              {"lower_bound", row.lower_bound},
              {"lower_bound_ok", row_ok},
              {"unused", estimate_json(row.unused)}};
    if (tmpl.residual_stride > 0) {
      j["perp_cone"] = estimate_json(row.perp_cone);
      j["perp_cone_sq"] = estimate_json(row.perp_cone_sq);
      j["perp_subspace"] = estimate_json(row.perp_subspace);
      j["perp_subspace_sq"] = estimate_json(row.perp_subspace_sq);
    }
    jrows.push_back(j);
    figure.push_back({row.eps, policy.name, row.scaled_weighted.mean,
                      row.scaled_weighted.mean - row.scaled_weighted.half_width95,
                      row.scaled_weighted.mean + row.scaled_weighted.half_width95});
    std::cout << "  eps " << row.eps << ": eps*E[cost] " << row.scaled_weighted.mean
              << " +- " << row.scaled_weighted.half_width95 << " (limit "
              << row.limit_prediction << ", floor " << row.lower_bound
              << (row_ok ? "" : "  FAIL: below floor") << ")\n";
  }

  json summary;
  summary["policy"] = policy.name;
  summary["costs"] = r.costs;
  summary["nu"] = family.nu;
  summary["sigma2_limit"] = sigma2_limit;
  summary["consistency"] = zeta_block;
  summary["rows"] = jrows;
  summary["lower_bound_ok"] = bound_ok;
  write_run_outputs(r, summary, csv, figure);
  std::cout << "wrote " << r.out_dir << "\n";
  return consistent && bound_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// solve

int run_solve(const Resolved& r) {
  iqs::DpInstance inst{iqs::CostMatrix(2, r.costs),
                       iqs::ArrivalProcess::bernoulli(2, r.rates), r.beta};
  inst.validate();
  if (r.solve_qmax < inst.arrivals.a_max() + 1)
    fail("'solve.qmax' must be at least a_max + 1");

  iqs::ValueIterationOptions opt;
  opt.qmax = r.solve_qmax;
  opt.max_sweeps = r.solve_max_sweeps;
  opt.tol = r.solve_target_eps > 0.0
                ? iqs::stopping_threshold(r.beta, r.solve_target_eps)
                : r.solve_tol;
  opt.threads = std::max(1, r.threads);

  std::cout << "value iteration: qmax " << opt.qmax << ", tol " << opt.tol << "\n";
  const iqs::ValueIterationResult res = iqs::value_iteration(inst, opt);
  std::cout << "  " << res.sweeps << " sweeps, last delta " << res.last_delta
            << (res.converged ? "" : "  (not converged)") << "\n";

  const iqs::PolicyTable policy = iqs::greedy_policy(inst, res.value, opt.threads);
  const iqs::SwitchingCurve curve = iqs::extract_switching_curve(inst, policy);

  fs::create_directories(r.out_dir);
  iqs::save_value((fs::path(r.out_dir) / "value.iqsv").string(), inst, res.value);
  iqs::save_policy((fs::path(r.out_dir) / "policy.iqsp").string(), inst, policy);

  json jcurve;
  jcurve["qmax"] = policy.grid.qmax;
  jcurve["safe_max"] = curve.safe_max;
  jcurve["branches"] = json::array();
  for (const auto& br : curve.branches)
    jcurve["branches"].push_back({{"serve", queue_label(br.mu)},
                                  {"versus", queue_label(br.rho)},
                                  {"thresholds", br.threshold}});
  {
    std::ofstream out(fs::path(r.out_dir) / "curve.json");
    if (!out) fail("cannot write curve.json");
    out << jcurve.dump(2) << '\n';
  }

  json summary;
  summary["sweeps"] = res.sweeps;
  summary["last_delta"] = res.last_delta;
  summary["converged"] = res.converged;
  summary["tol"] = opt.tol;
  summary["qmax"] = opt.qmax;
  summary["artifacts"] = {"value.iqsv", "policy.iqsp", "curve.json"};
  write_run_outputs(r, summary, {}, {});
  std::cout << "wrote " << r.out_dir << "\n";
  return res.converged ? 0 : 1;
}

// ---------------------------------------------------------------------------
// verify

int run_verify(const Resolved& r, bool exact) {
  const iqs::SolvedValue sv = iqs::load_value(r.verify_value_file);
  std::cout << "verifying " << r.verify_value_file << " (qmax "
            << sv.value.grid.qmax << ", " << sv.value.sweeps << " sweeps"
            << (exact ? ", exact rational arithmetic" : "") << ")\n";
  const iqs::InequalityReport report =
      exact ? iqs::verify_inequalities_exact(sv.instance, r.exact_qmax, r.exact_sweeps)
            : iqs::verify_inequalities(sv.instance, sv.value);

  std::cout << std::left << std::setw(26) << "family" << std::setw(20) << "variant"
            << std::right << std::setw(12) << "checked" << std::setw(12)
            << "violations" << "  worst margin\n";
  json jrows = json::array();
  for (const iqs::InequalityRow& row : report.rows) {
    std::cout << std::left << std::setw(26) << row.family << std::setw(20)
              << row.variant << std::right << std::setw(12) << row.checked
              << std::setw(12) << row.violations << "  " << row.worst_margin << "\n";
    json examples = json::array();
    for (const auto& [state, margin] : row.examples)
      examples.push_back({{"state", state}, {"margin", margin}});
    jrows.push_back({{"family", row.family},
                     {"variant", row.variant},
                     {"checked", row.checked},
                     {"violations", row.violations},
                     {"worst_margin", row.worst_margin},
                     {"examples", examples}});
    for (const auto& [state, margin] : row.examples) {
      if (row.violations == 0) break;
      std::cout << "    at (" << state[0] << "," << state[1] << "," << state[2] << ","
                << state[3] << "): margin " << margin << "\n";
    }
  }
  std::cout << (report.clean() ? "PASS" : "FAIL") << ": " << report.total_violations
            << " violations over " << report.total_checked << " checks\n";

  json summary;
  summary["value_file"] = r.verify_value_file;
  summary["exact"] = exact;
  summary["rows"] = jrows;
  summary["total_checked"] = report.total_checked;
  summary["total_violations"] = report.total_violations;
  summary["clean"] = report.clean();
  write_run_outputs(r, summary, {}, {});
  return report.clean() ? 0 : 1;
}

// ---------------------------------------------------------------------------

int dispatch(const Resolved& r, bool exact) {
  if (r.mode == "average" || r.mode == "discounted") return run_simulate(r);
  if (r.mode == "heavy-traffic") return run_ht(r);
  if (r.mode == "solve") return run_solve(r);
  return run_verify(r, exact);
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config " + path);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    fail("malformed config " + path + ": " + e.what());
  }
  return cfg;
}

int resolve_threads(int flag_threads, int config_threads) {
  if (flag_threads > 0) return flag_threads;
  if (config_threads > 0) return config_threads;
  if (const char* env = std::getenv("SWITCHSCHED_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"input-queued switch scheduling toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, preset_name;
  std::uint64_t seed = 0;
  int threads = 0;
  bool exact = false;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* c = cmd->add_option("--config", config_path, "experiment config (JSON)");
    if (config_required) c->required();
    cmd->add_option("--seed", seed, "override the master seed");
    cmd->add_option("--out", out_dir, "override the output directory");
    cmd->add_option("--threads", threads, "worker threads (default: SWITCHSCHED_THREADS or 1)");
  };

  CLI::App* cmd_simulate = app.add_subcommand("simulate", "run declared experiments");
  add_common(cmd_simulate, true);
  CLI::App* cmd_solve = app.add_subcommand("solve", "value iteration and artifacts");
  add_common(cmd_solve, true);
  CLI::App* cmd_verify = app.add_subcommand("verify", "structural inequality checks");
  add_common(cmd_verify, true);
  cmd_verify->add_flag("--exact-rational", exact, "verify in exact rational arithmetic");
  CLI::App* cmd_ht = app.add_subcommand("ht", "heavy-traffic sweep and limits");
  add_common(cmd_ht, true);
  CLI::App* cmd_reproduce =
      app.add_subcommand("reproduce", "run a canned preset (table1|table2|figure1|figure2)");
  cmd_reproduce->add_option("preset", preset_name, "preset name")->required();
  add_common(cmd_reproduce, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_reproduce->parsed()) {
      if (preset_name != "table1" && preset_name != "table2" &&
          preset_name != "figure1" && preset_name != "figure2")
        fail("unknown preset '" + preset_name + "'");
      config_path = std::string(IQS_PRESET_DIR) + "/" + preset_name + ".json";
    }
    Resolved r = parse_config(read_config_file(config_path));

    const CLI::App* active = app.get_subcommands().front();
    if (active->count("--seed")) r.seed = seed;
    if (!out_dir.empty()) r.out_dir = out_dir;
    r.threads = resolve_threads(active->count("--threads") ? threads : 0, r.threads);

    // The subcommand must match the config's declared mode.
    if (cmd_simulate->parsed() && r.mode != "average" && r.mode != "discounted")
      fail("'simulate' needs mode average or discounted, got " + r.mode);
    if (cmd_solve->parsed() && r.mode != "solve") fail("'solve' needs mode solve");
    if (cmd_verify->parsed() && r.mode != "verify") fail("'verify' needs mode verify");
    if (cmd_ht->parsed() && r.mode != "heavy-traffic") fail("'ht' needs mode heavy-traffic");

    return dispatch(r, exact);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
