// Command-line front end: estimate, compare, theory, simulate, montecarlo.
#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "stagger/errors.hpp"
#include "stagger/estimators.hpp"
#include "stagger/hotelling.hpp"
#include "stagger/io.hpp"
#include "stagger/montecarlo.hpp"
#include "stagger/simgen.hpp"

namespace {

using namespace stagger;

constexpr int kExitSchema = 2;
constexpr int kExitEstimation = 3;

struct ColumnArgs {
  io::ColumnMap map;
  std::vector<std::string> covariates;
  bool covariates_given = false;

  io::ColumnMap resolve() const {
    io::ColumnMap out = map;
    if (covariates_given) out.covariates = covariates;
    return out;
  }
};

struct DesignArgs {
  int leads = 0;
  int lags = 0;
  std::vector<int> omit{-1};
  std::string endpoints = "drop";
  std::vector<std::string> fe{"unit", "time"};
  bool trends = false;

  EventTimeDesign design() const {
    EventTimeDesign d;
    d.leads = leads;
    d.lags = lags;
    d.omitted = std::set<int>(omit.begin(), omit.end());
    d.endpoints = endpoints == "bin" ? EndpointPolicy::BinEndpoints : EndpointPolicy::DropOutside;
    return d;
  }

  FixedEffectSpec fixed_effects() const {
    FixedEffectSpec spec;
    for (const auto& f : fe) {
      if (f == "unit") spec.dimensions.push_back(FeFactor::Unit);
      else if (f == "time") spec.dimensions.push_back(FeFactor::Time);
      else if (f == "group-time") spec.dimensions.push_back(FeFactor::GroupTime);
    }
    spec.unit_linear_trends = trends;
    return spec;
  }
};

struct InferenceArgs {
  double level = 0.95;
  std::string correction = "stata";
  bool normal = false;
  std::string cluster_on = "cluster";

  InferenceOptions options() const {
    InferenceOptions o;
    o.level = level;
    o.correction = correction == "none" ? SmallSampleCorrection::None : SmallSampleCorrection::StataLike;
    o.normal_critical = normal;
    o.cluster_on = cluster_on == "unit"    ? ClusterOn::Unit
                   : cluster_on == "group" ? ClusterOn::Group
                                           : ClusterOn::ClusterColumn;
    return o;
  }
};

struct EstimatorArgs {
  bool as_keep_first = false;
  bool as_keep_empty_periods = false;
  bool tw_per_tau = false;
  bool tw_strict = false;

  AsOptions as(const InferenceOptions& inf) const {
    AsOptions o;
    o.exclude_first_cohort = !as_keep_first;
    o.drop_untreated_periods = !as_keep_empty_periods;
    o.inference = inf;
    return o;
  }
  TwOptions tw(const InferenceOptions& inf) const {
    TwOptions o;
    o.second_stage = tw_per_tau ? TwSecondStage::PerTau : TwSecondStage::Pooled;
    o.strict = tw_strict;
    o.inference = inf;
    return o;
  }
};

void add_columns(CLI::App* cmd, ColumnArgs& c) {
  cmd->add_option("--unit-col", c.map.unit, "Unit identifier column")->capture_default_str();
  cmd->add_option("--time-col", c.map.time, "Integer period column")->capture_default_str();
  cmd->add_option("--outcome-col", c.map.outcome, "Outcome column")->capture_default_str();
  cmd->add_option("--adoption-col", c.map.adoption, "Adoption period column (empty = never treated)")
      ->capture_default_str();
  cmd->add_option("--cluster-col", c.map.cluster, "Cluster column (absent: cluster on units)")
      ->capture_default_str();
  cmd->add_option("--group-col", c.map.group, "Group column for group-time effects (optional)")
      ->capture_default_str();
  cmd->add_option("--covariates", c.covariates,
                  "Covariate columns (default: every column not mapped above)")
      ->delimiter(',')
      ->each([&c](const std::string&) { c.covariates_given = true; });
}

void add_design(CLI::App* cmd, DesignArgs& d) {
  cmd->add_option("--leads", d.leads, "Number of lead periods K")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--lags", d.lags, "Number of lag periods L")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--omit", d.omit, "Omitted event times")->delimiter(',')->capture_default_str();
  cmd->add_option("--endpoints", d.endpoints, "Observations outside the window: drop or bin")
      ->check(CLI::IsMember({"drop", "bin"}))
      ->capture_default_str();
  cmd->add_option("--fe", d.fe, "Fixed effects: unit, time, group-time")
      ->delimiter(',')
      ->check(CLI::IsMember({"unit", "time", "group-time"}))
      ->capture_default_str();
  cmd->add_flag("--trends", d.trends, "Add unit-specific linear time trends");
}

void add_inference(CLI::App* cmd, InferenceArgs& i) {
  cmd->add_option("--level", i.level, "Confidence level")->check(CLI::Range(0.5, 0.9999))->capture_default_str();
  cmd->add_option("--correction", i.correction, "Small-sample correction: stata or none")
      ->check(CLI::IsMember({"stata", "none"}))
      ->capture_default_str();
  cmd->add_flag("--normal", i.normal, "Normal instead of t(G-1) critical values");
  cmd->add_option("--cluster-on", i.cluster_on, "Cluster by: cluster, unit or group")
      ->check(CLI::IsMember({"cluster", "unit", "group"}))
      ->capture_default_str();
}

void add_estimator_flags(CLI::App* cmd, EstimatorArgs& e) {
  cmd->add_flag("--as-keep-first-cohort", e.as_keep_first, "Interaction-weighted: keep the earliest cohort");
  cmd->add_flag("--as-keep-empty-periods", e.as_keep_empty_periods,
                "Interaction-weighted: keep calendar periods with no adoption");
  cmd->add_flag("--tw-per-tau", e.tw_per_tau, "Split-sample: per-tau second stage instead of pooled");
  cmd->add_flag("--tw-strict", e.tw_strict, "Split-sample: error on treated units with no benchmark periods");
}

nlohmann::ordered_json tw_extras(const TwResult& r) {
  nlohmann::ordered_json j;
  auto split = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < r.table.rows.size(); ++k) {
    split.push_back({{"tau", r.table.rows[k].tau}, {"theta_l", r.theta_l[k]}, {"theta_d", r.theta_d[k]}});
  }
  j["split"] = std::move(split);
  j["excluded_units"] = r.excluded_units;
  return j;
}

nlohmann::ordered_json as_extras(const AsResult& r) {
  nlohmann::ordered_json j;
  j["weights"] = io::weights_to_json(r.weights);
  j["excluded_cohorts"] = r.excluded_cohorts;
  j["dropped_periods"] = r.dropped_periods;
  auto cells = nlohmann::ordered_json::array();
  for (const auto& [e, tau] : r.dropped_cells) cells.push_back({{"cohort", e}, {"tau", tau}});
  j["dropped_cells"] = std::move(cells);
  return j;
}

void write_outputs(const std::string& prefix, const std::string& csv, const nlohmann::ordered_json& json) {
  if (prefix.empty()) return;
  io::atomic_write(prefix + ".csv", csv);
  io::atomic_write(prefix + ".json", json.dump(2) + "\n");
}

int run(int argc, char** argv) {
  CLI::App app{"Staggered-adoption event studies and the church-armed group location model"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML config file");
  bool dump_config = false;
  app.add_flag("--dump-config", dump_config, "Print the effective configuration and exit");

  // estimate
  auto* est = app.add_subcommand("estimate", "Event-study estimates from a panel CSV")->configurable();
  std::string est_input, est_out, estimator = "twfe";
  std::vector<std::string> controls;
  ColumnArgs est_cols;
  DesignArgs est_design;
  InferenceArgs est_inf;
  EstimatorArgs est_flags;
  est->add_option("-i,--input", est_input, "Panel CSV")->required();
  est->add_option("-o,--out", est_out, "Output prefix: writes PREFIX.csv and PREFIX.json");
  est->add_option("-e,--estimator", estimator, "twfe, as or tw")
      ->check(CLI::IsMember({"twfe", "as", "tw"}))
      ->capture_default_str();
  est->add_option("--controls", controls, "Covariates entered as controls (twfe)")->delimiter(',');
  add_columns(est, est_cols);
  add_design(est, est_design);
  add_inference(est, est_inf);
  add_estimator_flags(est, est_flags);

  // compare
  auto* cmp = app.add_subcommand("compare", "All three estimators side by side")->configurable();
  std::string cmp_input, cmp_out;
  ColumnArgs cmp_cols;
  DesignArgs cmp_design;
  InferenceArgs cmp_inf;
  EstimatorArgs cmp_flags;
  cmp->add_option("-i,--input", cmp_input, "Panel CSV")->required();
  cmp->add_option("-o,--out", cmp_out, "Output prefix: writes PREFIX.csv and PREFIX.json");
  add_columns(cmp, cmp_cols);
  add_design(cmp, cmp_design);
  add_inference(cmp, cmp_inf);
  add_estimator_flags(cmp, cmp_flags);

  // theory
  auto* th = app.add_subcommand("theory", "Equilibrium sweep over the church's aversion to violence")->configurable();
  double beta_min = 0.0, beta_max = hotelling::violence_threshold();
  int steps = 46;
  std::string th_out;
  th->add_option("--beta-min", beta_min, "Lowest beta")->capture_default_str();
  th->add_option("--beta-max", beta_max, "Highest beta (at most 9/20)")->capture_default_str();
  th->add_option("--steps", steps, "Grid points")->capture_default_str();
  th->add_option("-o,--out", th_out, "Output CSV (default: stdout)");

  // simulate / montecarlo share the DGP selection
  std::string sim_scenario = "homogeneous", sim_spec, sim_out, sim_spec_out;
  std::uint64_t sim_seed = sim::kDefaultSeed;
  auto* simc = app.add_subcommand("simulate", "Generate one synthetic panel")->configurable();
  simc->add_option("--scenario", sim_scenario, "Built-in scenario")
      ->check(CLI::IsMember(sim::scenario_names()))
      ->capture_default_str();
  auto* sim_spec_opt = simc->add_option("--spec", sim_spec, "DGP spec JSON (overrides --scenario)")
                           ->check(CLI::ExistingFile);
  auto* sim_seed_opt = simc->add_option("--seed", sim_seed, "Random seed")->capture_default_str();
  simc->add_option("-o,--out", sim_out, "Output panel CSV")->required();
  simc->add_option("--spec-out", sim_spec_out, "Also write the effective DGP spec as JSON");

  std::string mc_scenario = "homogeneous", mc_spec, mc_out, mc_panel_out;
  std::uint64_t mc_seed = sim::kDefaultSeed;
  int reps = 500;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::string> mc_estimators{"twfe", "as", "tw"};
  DesignArgs mc_design;
  mc_design.leads = 3;
  mc_design.lags = 5;
  mc_design.fe = {"unit", "time", "group-time"};
  InferenceArgs mc_inf;
  mc_inf.level = 0.90;
  EstimatorArgs mc_flags;
  auto* mc = app.add_subcommand("montecarlo", "Monte Carlo bias, RMSE and coverage of the estimators")->configurable();
  mc->add_option("--scenario", mc_scenario, "Built-in scenario")
      ->check(CLI::IsMember(sim::scenario_names()))
      ->capture_default_str();
  auto* mc_spec_opt = mc->add_option("--spec", mc_spec, "DGP spec JSON (overrides --scenario)")
                          ->check(CLI::ExistingFile);
  auto* mc_seed_opt = mc->add_option("--seed", mc_seed, "Master seed")->capture_default_str();
  mc->add_option("--reps", reps, "Replications")->check(CLI::Range(2, 1000000))->capture_default_str();
  mc->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  mc->add_option("--estimators", mc_estimators, "Subset of twfe, as, tw")
      ->delimiter(',')
      ->check(CLI::IsMember({"twfe", "as", "tw"}))
      ->capture_default_str();
  mc->add_option("-o,--out", mc_out, "Output prefix: writes PREFIX.csv and PREFIX.json")->required();
  mc->add_option("--panel-out", mc_panel_out, "Also write the first replication's panel CSV");
  add_design(mc, mc_design);
  add_inference(mc, mc_inf);
  add_estimator_flags(mc, mc_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitSchema;
  }

  if (dump_config) {
    // Only explicitly given options, so defaults stay defaults on re-run.
    // Written as a [subcommand] section so the file alone selects it.
    std::istringstream lines(app.config_to_str(false, false));
    std::string section;
    for (std::string line; std::getline(lines, line);) {
      if (line.rfind("dump-config", 0) == 0) continue;
      const auto dot = line.find('.');
      const auto eq = line.find('=');
      if (dot != std::string::npos && dot < eq) {
        const std::string sub = line.substr(0, dot);
        if (sub != section) {
          std::cout << '[' << sub << "]\n";
          section = sub;
        }
        line.erase(0, dot + 1);
      }
      std::cout << line << '\n';
    }
    return 0;
  }

  if (est->parsed()) {
    const PanelDataset panel = io::read_panel_csv(est_input, est_cols.resolve());
    const auto design = est_design.design();
    const auto fe = est_design.fixed_effects();
    const auto inf = est_inf.options();
    EstimateTable table;
    nlohmann::ordered_json extras;
    if (estimator == "twfe") {
      TwfeOptions o;
      o.controls = controls;
      o.inference = inf;
      table = twfe_event_study(panel, design, fe, o);
    } else if (estimator == "as") {
      auto r = as_interaction_weighted(panel, design, fe, est_flags.as(inf));
      extras = as_extras(r);
      table = std::move(r.table);
    } else {
      design.validate(panel);
      auto r = tw_split_sample(panel, design.leads, design.lags, est_flags.tw(inf));
      extras = tw_extras(r);
      table = std::move(r.table);
    }
    auto json = io::table_to_json(table);
    for (auto& [k, v] : extras.items()) json[k] = v;
    write_outputs(est_out, io::table_to_csv(table), json);
    std::cout << io::summary_text(table);
    return 0;
  }

  if (cmp->parsed()) {
    const PanelDataset panel = io::read_panel_csv(cmp_input, cmp_cols.resolve());
    CompareOptions o;
    o.inference = cmp_inf.options();
    o.as = cmp_flags.as(o.inference);
    o.tw = cmp_flags.tw(o.inference);
    const auto c = compare_estimators(panel, cmp_design.design(), cmp_design.fixed_effects(), o);
    write_outputs(cmp_out, io::comparison_to_csv(c), io::comparison_to_json(c));
    std::cout << io::comparison_to_csv(c);
    return 0;
  }

  if (th->parsed()) {
    const std::string csv = io::theory_csv(beta_min, beta_max, steps);
    if (th_out.empty()) {
      std::cout << csv;
    } else {
      io::atomic_write(th_out, csv);
    }
    return 0;
  }

  if (simc->parsed()) {
    sim::DgpSpec spec = sim_spec_opt->count() ? io::read_spec(sim_spec) : sim::scenario(sim_scenario);
    if (sim_seed_opt->count() || !sim_spec_opt->count()) spec.seed = sim_seed;
    const auto sp = sim::generate_panel(spec);
    std::ostringstream csv;
    io::write_panel_csv(csv, sp.panel);
    io::atomic_write(sim_out, csv.str());
    if (!sim_spec_out.empty()) io::atomic_write(sim_spec_out, io::spec_to_json(spec).dump(2) + "\n");
    std::cout << fmt::format("wrote {} rows ({} units) to {}\n", sp.panel.n_rows(), sp.panel.n_units(), sim_out);
    return 0;
  }

  if (mc->parsed()) {
    sim::DgpSpec spec = mc_spec_opt->count() ? io::read_spec(mc_spec) : sim::scenario(mc_scenario);
    if (mc_seed_opt->count() || !mc_spec_opt->count()) spec.seed = mc_seed;
    std::vector<sim::EstimatorKind> kinds;
    for (const auto& name : mc_estimators) kinds.push_back(sim::estimator_from_string(name));
    sim::McConfig config;
    config.design = mc_design.design();
    config.fe = mc_design.fixed_effects();
    config.inference = mc_inf.options();
    config.as = mc_flags.as(config.inference);
    config.tw = mc_flags.tw(config.inference);
    config.threads = threads;
    const auto result = sim::monte_carlo(spec, kinds, reps, config);
    const std::string csv = io::mc_to_csv(result);
    write_outputs(mc_out, csv, io::mc_to_json(result, spec));
    if (!mc_panel_out.empty()) {
      sim::DgpSpec first = spec;
      first.seed = sim::replication_seed(spec.seed, 0);
      std::ostringstream panel_csv;
      io::write_panel_csv(panel_csv, sim::generate_panel(first).panel);
      io::atomic_write(mc_panel_out, panel_csv.str());
    }
    std::cout << csv;
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const stagger::SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSchema;
  } catch (const stagger::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSchema;
  } catch (const stagger::Error& e) {
    std::cerr << "estimation failed: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
