#include "stagger/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "stagger/errors.hpp"
#include "stagger/hotelling.hpp"

namespace stagger::io {

namespace {

std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw SchemaError(fmt::format("line {}: unterminated quoted field", line_no));
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

int parse_int(const std::string& s, std::string_view column, std::size_t line_no) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw SchemaError(fmt::format("line {}: column '{}' expects an integer, got '{}'", line_no, column, s));
  }
  return v;
}

double parse_double(const std::string& s, std::string_view column, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw SchemaError(fmt::format("line {}: column '{}' expects a finite number, got '{}'", line_no,
                                  column, s));
  }
  return v;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string format_double(double v) { return fmt::format("{}", v); }

PanelDataset read_panel_csv(std::istream& in, const ColumnMap& columns) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw SchemaError("panel CSV is empty (header required)");
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_record(line, line_no);
  for (auto& h : header) h = trim(h);

  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  auto require = [&](const std::string& name, std::string_view role) {
    auto idx = find(name);
    if (!idx) throw SchemaError(fmt::format("missing required {} column '{}'", role, name));
    return *idx;
  };
  const std::size_t c_unit = require(columns.unit, "unit");
  const std::size_t c_time = require(columns.time, "time");
  const std::size_t c_outcome = require(columns.outcome, "outcome");
  const std::size_t c_adoption = require(columns.adoption, "adoption");
  const auto c_cluster = find(columns.cluster);
  const auto c_group = find(columns.group);

  std::vector<std::string> cov_names;
  std::vector<std::size_t> cov_idx;
  if (columns.covariates) {
    for (const auto& name : *columns.covariates) {
      cov_idx.push_back(require(name, "covariate"));
      cov_names.push_back(name);
    }
  } else {
    std::set<std::size_t> used{c_unit, c_time, c_outcome, c_adoption};
    if (c_cluster) used.insert(*c_cluster);
    if (c_group) used.insert(*c_group);
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (!used.contains(k)) {
        cov_idx.push_back(k);
        cov_names.push_back(header[k]);
      }
    }
  }

  std::vector<PanelRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto f = split_record(line, line_no);
    if (f.size() != header.size()) {
      throw SchemaError(fmt::format("line {}: expected {} fields, found {}", line_no, header.size(), f.size()));
    }
    for (auto& v : f) v = trim(v);
    PanelRow row;
    row.unit = f[c_unit];
    if (row.unit.empty()) throw SchemaError(fmt::format("line {}: empty '{}'", line_no, columns.unit));
    row.time = parse_int(f[c_time], columns.time, line_no);
    row.outcome = parse_double(f[c_outcome], columns.outcome, line_no);
    if (!f[c_adoption].empty()) row.adoption = parse_int(f[c_adoption], columns.adoption, line_no);
    row.cluster = c_cluster ? f[*c_cluster] : row.unit;
    if (row.cluster.empty()) throw SchemaError(fmt::format("line {}: empty '{}'", line_no, columns.cluster));
    if (c_group) {
      if (f[*c_group].empty()) throw SchemaError(fmt::format("line {}: empty '{}'", line_no, columns.group));
      row.group = f[*c_group];
    }
    for (std::size_t k = 0; k < cov_idx.size(); ++k) {
      row.covariates.push_back(parse_double(f[cov_idx[k]], cov_names[k], line_no));
    }
    rows.push_back(std::move(row));
  }
  return PanelDataset::from_rows(cov_names, rows);
}

PanelDataset read_panel_csv(const std::filesystem::path& path, const ColumnMap& columns) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot open '{}'", path.string()));
  return read_panel_csv(in, columns);
}

void write_panel_csv(std::ostream& out, const PanelDataset& panel) {
  out << "unit,time,outcome,adoption,cluster,group";
  for (const auto& name : panel.covariate_names()) out << ',' << csv_field(name);
  out << '\n';
  for (const auto& row : panel.rows()) {
    out << csv_field(row.unit) << ',' << row.time << ',' << format_double(row.outcome) << ',';
    if (row.adoption) out << *row.adoption;
    out << ',' << csv_field(row.cluster) << ',' << (row.group ? csv_field(*row.group) : "");
    for (double x : row.covariates) out << ',' << format_double(x);
    out << '\n';
  }
}

std::string table_to_csv(const EstimateTable& table) {
  std::string out = "tau,estimate,se,ci_low,ci_high\n";
  for (const auto& r : table.rows) {
    out += fmt::format("{},{},{},{},{}\n", r.tau, format_double(r.estimate), format_double(r.se),
                       format_double(r.ci_low), format_double(r.ci_high));
  }
  return out;
}

nlohmann::ordered_json table_to_json(const EstimateTable& table) {
  nlohmann::ordered_json j;
  j["estimator"] = table.estimator;
  j["level"] = table.level;
  j["n_obs"] = table.n_obs;
  j["n_clusters"] = table.n_clusters;
  j["design"] = {{"leads", table.leads},
                 {"lags", table.lags},
                 {"omitted", std::vector<int>(table.omitted.begin(), table.omitted.end())}};
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"tau", r.tau},
                    {"estimate", r.estimate},
                    {"se", r.se},
                    {"ci_low", r.ci_low},
                    {"ci_high", r.ci_high},
                    {"p_value", r.p_value}});
  }
  j["rows"] = std::move(rows);
  j["diagnostics"] = table.diagnostics;
  return j;
}

nlohmann::ordered_json weights_to_json(const CohortWeights& weights) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [tau, by_cohort] : weights) {
    nlohmann::ordered_json w = nlohmann::ordered_json::object();
    for (const auto& [cohort, v] : by_cohort) w[std::to_string(cohort)] = v;
    j[std::to_string(tau)] = std::move(w);
  }
  return j;
}

std::string comparison_to_csv(const Comparison& c) {
  std::set<int> taus;
  for (const auto* t : {&c.twfe, &c.as, &c.tw}) {
    for (const auto& r : t->rows) taus.insert(r.tau);
  }
  std::string out = "tau,twfe_estimate,twfe_se,as_estimate,as_se,tw_estimate,tw_se\n";
  for (int tau : taus) {
    out += std::to_string(tau);
    for (const auto* t : {&c.twfe, &c.as, &c.tw}) {
      if (const auto* r = t->find(tau)) {
        out += fmt::format(",{},{}", format_double(r->estimate), format_double(r->se));
      } else {
        out += ",,";
      }
    }
    out += '\n';
  }
  return out;
}

nlohmann::ordered_json comparison_to_json(const Comparison& c) {
  nlohmann::ordered_json j;
  j["twfe"] = table_to_json(c.twfe);
  j["as"] = table_to_json(c.as);
  j["as"]["weights"] = weights_to_json(c.as_weights);
  j["tw"] = table_to_json(c.tw);
  return j;
}

std::string stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.10) return "*";
  return "";
}

std::string summary_text(const EstimateTable& table) {
  std::string out = fmt::format("estimator: {}   observations: {}   clusters: {}\n", table.estimator,
                                table.n_obs, table.n_clusters);
  out += fmt::format("{:>6}  {:>14}  {:>12}  {:>27}\n", "tau", "estimate", "se",
                     fmt::format("{:.0f}% CI", table.level * 100.0));
  for (const auto& r : table.rows) {
    out += fmt::format("{:>6}  {:>11.6f}{:<3}  {:>12.6f}  [{:>11.6f}, {:>11.6f}]\n", r.tau, r.estimate,
                       stars(r.p_value), r.se, r.ci_low, r.ci_high);
  }
  out += "* p<0.10, ** p<0.05, *** p<0.01\n";
  for (const auto& d : table.diagnostics) out += "note: " + d + "\n";
  return out;
}

std::string mc_to_csv(const sim::McResult& result) {
  std::string out =
      "estimator,tau,n,mean_estimate,mean_target,bias,mc_se,rmse,empirical_se,mean_se,coverage\n";
  for (const auto& rep : result.reports) {
    for (const auto& s : rep.taus) {
      out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", sim::to_string(rep.estimator), s.tau, s.n,
                         format_double(s.mean_estimate), format_double(s.mean_target),
                         format_double(s.bias), format_double(s.mc_se), format_double(s.rmse),
                         format_double(s.empirical_se), format_double(s.mean_se),
                         format_double(s.coverage));
    }
  }
  return out;
}

nlohmann::ordered_json mc_to_json(const sim::McResult& result, const sim::DgpSpec& spec) {
  nlohmann::ordered_json j;
  j["master_seed"] = result.master_seed;
  j["reps"] = result.reps;
  j["spec"] = spec_to_json(spec);
  auto reports = nlohmann::ordered_json::array();
  for (const auto& rep : result.reports) {
    nlohmann::ordered_json r;
    r["estimator"] = sim::to_string(rep.estimator);
    r["failures"] = rep.failures;
    auto taus = nlohmann::ordered_json::array();
    for (const auto& s : rep.taus) {
      taus.push_back({{"tau", s.tau},
                      {"n", s.n},
                      {"mean_estimate", s.mean_estimate},
                      {"mean_target", s.mean_target},
                      {"bias", s.bias},
                      {"mc_se", s.mc_se},
                      {"rmse", s.rmse},
                      {"empirical_se", s.empirical_se},
                      {"mean_se", s.mean_se},
                      {"coverage", s.coverage}});
    }
    r["taus"] = std::move(taus);
    reports.push_back(std::move(r));
  }
  j["reports"] = std::move(reports);
  return j;
}

namespace {

nlohmann::ordered_json int_map_to_json(const std::map<int, double>& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::map<int, double> int_map_from_json(const nlohmann::json& j, std::string_view what) {
  if (!j.is_object()) throw SchemaError(fmt::format("'{}' must be an object", what));
  std::map<int, double> out;
  for (const auto& [k, v] : j.items()) {
    int key = 0;
    auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), key);
    if (ec != std::errc() || ptr != k.data() + k.size()) {
      throw SchemaError(fmt::format("'{}': key '{}' is not an integer", what, k));
    }
    if (!v.is_number()) throw SchemaError(fmt::format("'{}': value for '{}' is not a number", what, k));
    out[key] = v.get<double>();
  }
  return out;
}

}  // namespace

nlohmann::ordered_json spec_to_json(const sim::DgpSpec& spec) {
  nlohmann::ordered_json j;
  j["n_units"] = spec.n_units;
  j["n_periods"] = spec.n_periods;
  j["cohort_probs"] = int_map_to_json(spec.cohort_probs);
  j["never_treated_prob"] = spec.never_treated_prob;
  nlohmann::ordered_json effects;
  effects["common"] = int_map_to_json(spec.effects.common);
  nlohmann::ordered_json by = nlohmann::ordered_json::object();
  for (const auto& [cohort, path] : spec.effects.by_cohort) by[std::to_string(cohort)] = int_map_to_json(path);
  effects["by_cohort"] = std::move(by);
  j["effects"] = std::move(effects);
  j["base_rate"] = spec.base_rate;
  j["unit_fe_sd"] = spec.unit_fe_sd;
  j["time_fe_sd"] = spec.time_fe_sd;
  j["group_time_sd"] = spec.group_time_sd;
  j["noise_sd"] = spec.noise_sd;
  j["group_count"] = spec.group_count;
  j["covariates"] = {{"count", spec.covariates.count},
                     {"coefficient", spec.covariates.coefficient},
                     {"sd", spec.covariates.sd}};
  j["binary_outcome"] = spec.binary_outcome;
  j["seed"] = spec.seed;
  if (!spec.effect_link.empty()) j["effect_link"] = spec.effect_link;
  return j;
}

sim::DgpSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("DGP spec must be a JSON object");
  static const std::set<std::string> known{
      "n_units",   "n_periods",     "cohort_probs", "never_treated_prob", "effects",
      "base_rate", "unit_fe_sd",    "time_fe_sd",   "group_time_sd",      "noise_sd",
      "group_count", "covariates",  "binary_outcome", "seed",             "effect_link"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw SchemaError(fmt::format("unknown DGP spec field '{}'", k));
  }
  sim::DgpSpec spec;
  try {
    if (j.contains("n_units")) spec.n_units = j.at("n_units").get<int>();
    if (j.contains("n_periods")) spec.n_periods = j.at("n_periods").get<int>();
    if (j.contains("cohort_probs")) spec.cohort_probs = int_map_from_json(j.at("cohort_probs"), "cohort_probs");
    if (j.contains("never_treated_prob")) spec.never_treated_prob = j.at("never_treated_prob").get<double>();
    if (j.contains("effects")) {
      const auto& e = j.at("effects");
      if (e.contains("common")) spec.effects.common = int_map_from_json(e.at("common"), "effects.common");
      if (e.contains("by_cohort")) {
        for (const auto& [k, v] : e.at("by_cohort").items()) {
          spec.effects.by_cohort[std::stoi(k)] = int_map_from_json(v, "effects.by_cohort");
        }
      }
    }
    if (j.contains("base_rate")) spec.base_rate = j.at("base_rate").get<double>();
    if (j.contains("unit_fe_sd")) spec.unit_fe_sd = j.at("unit_fe_sd").get<double>();
    if (j.contains("time_fe_sd")) spec.time_fe_sd = j.at("time_fe_sd").get<double>();
    if (j.contains("group_time_sd")) spec.group_time_sd = j.at("group_time_sd").get<double>();
    if (j.contains("noise_sd")) spec.noise_sd = j.at("noise_sd").get<double>();
    if (j.contains("group_count")) spec.group_count = j.at("group_count").get<int>();
    if (j.contains("covariates")) {
      const auto& c = j.at("covariates");
      if (c.contains("count")) spec.covariates.count = c.at("count").get<int>();
      if (c.contains("coefficient")) spec.covariates.coefficient = c.at("coefficient").get<double>();
      if (c.contains("sd")) spec.covariates.sd = c.at("sd").get<double>();
    }
    if (j.contains("binary_outcome")) spec.binary_outcome = j.at("binary_outcome").get<bool>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("effect_link")) spec.effect_link = j.at("effect_link").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(fmt::format("invalid DGP spec: {}", e.what()));
  } catch (const std::logic_error& e) {
    throw SchemaError(fmt::format("invalid DGP spec: {}", e.what()));
  }
  spec.validate();
  return spec;
}

sim::DgpSpec read_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot open spec file '{}'", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(fmt::format("spec file '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return spec_from_json(j);
}

std::string theory_csv(double beta_min, double beta_max, int steps) {
  if (steps < 2) throw SchemaError("theory grid needs at least two points");
  if (!(beta_min >= 0.0 && beta_max <= hotelling::violence_threshold() && beta_min < beta_max)) {
    throw SchemaError("theory grid must satisfy 0 <= beta_min < beta_max <= 9/20");
  }
  std::vector<double> grid;
  for (int k = 0; k < steps; ++k) {
    grid.push_back(k == steps - 1 ? beta_max : beta_min + (beta_max - beta_min) * k / (steps - 1));
  }
  if (std::find(grid.begin(), grid.end(), hotelling::violence_threshold()) == grid.end()) {
    grid.push_back(hotelling::violence_threshold());
  }
  std::string out = "beta,a_c,b_c,f_c,delta_f\n";
  for (double beta : grid) {
    const auto eq = hotelling::duopoly_equilibrium(beta);
    out += fmt::format("{},{},{},{},{}\n", format_double(beta), format_double(eq.a),
                       format_double(*eq.b), format_double(eq.f), format_double(*eq.delta_f));
  }
  const auto m = hotelling::monopoly_equilibrium();
  out += fmt::format("monopoly,{},,{},\n", format_double(m.a), format_double(m.f));
  return out;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw SchemaError(fmt::format("cannot write '{}'", tmp.string()));
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw SchemaError(fmt::format("failed writing '{}'", tmp.string()));
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw SchemaError(fmt::format("cannot move output into '{}'", path.string()));
  }
}

}  // namespace stagger::io
