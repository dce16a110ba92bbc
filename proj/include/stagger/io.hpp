#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagger/estimators.hpp"
#include "stagger/montecarlo.hpp"
#include "stagger/panel.hpp"
#include "stagger/simgen.hpp"

namespace stagger::io {

// Column names of the panel CSV. Unit, time, outcome and adoption are
// required; a missing cluster column means clustering on units, a missing
// group column means no groups. Covariates default to every other column.
struct ColumnMap {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "outcome";
  std::string adoption = "adoption";
  std::string cluster = "cluster";
  std::string group = "group";
  std::optional<std::vector<std::string>> covariates;
};

// Header required. An empty adoption field means never treated. Throws
// SchemaError naming the offending column or line.
PanelDataset read_panel_csv(std::istream& in, const ColumnMap& columns = {});
PanelDataset read_panel_csv(const std::filesystem::path& path, const ColumnMap& columns = {});

// Writes the default schema: unit,time,outcome,adoption,cluster,group,<covariates>.
void write_panel_csv(std::ostream& out, const PanelDataset& panel);

// Shortest representation that round-trips.
std::string format_double(double v);

std::string table_to_csv(const EstimateTable& table);
nlohmann::ordered_json table_to_json(const EstimateTable& table);
nlohmann::ordered_json weights_to_json(const CohortWeights& weights);
std::string comparison_to_csv(const Comparison& comparison);
nlohmann::ordered_json comparison_to_json(const Comparison& comparison);

// Plain-text event-study table; stars mark p < 0.10, 0.05, 0.01.
std::string summary_text(const EstimateTable& table);
std::string stars(double p_value);

std::string mc_to_csv(const sim::McResult& result);
nlohmann::ordered_json mc_to_json(const sim::McResult& result, const sim::DgpSpec& spec);

nlohmann::ordered_json spec_to_json(const sim::DgpSpec& spec);
// Fields absent from the JSON keep their DgpSpec defaults; unknown keys are
// rejected. Throws SchemaError.
sim::DgpSpec spec_from_json(const nlohmann::json& j);
sim::DgpSpec read_spec(const std::filesystem::path& path);

// Rows "beta,a_c,b_c,f_c,delta_f" over `steps` evenly spaced beta values in
// [beta_min, beta_max] plus the threshold 9/20 if not on the grid, then a
// final "monopoly,a_m,,f_m," row.
std::string theory_csv(double beta_min, double beta_max, int steps);

// Writes to a temporary sibling and renames it into place, so the target is
// either fully written or untouched.
void atomic_write(const std::filesystem::path& path, const std::string& content);

}  // namespace stagger::io
