#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace stagger {

// One unit-period observation in label form. This is what CSV ingestion and
// the simulator produce, and what PanelDataset::rows() gives back.
struct PanelRow {
  std::string unit;
  int time = 0;
  double outcome = 0.0;
  std::optional<int> adoption;  // absent = never treated
  std::string cluster;
  std::optional<std::string> group;
  std::vector<double> covariates;
};

// Event time of a unit-period: t - E_i, or nothing for never-treated units.
// Zero is the adoption period.
std::optional<int> relative_time(std::optional<int> adoption, int t);

// Validated, columnar unit x time panel. Units, clusters and groups are coded
// 0..n-1 in sorted label order so reductions over them are deterministic.
class PanelDataset {
 public:
  // Throws SchemaError on duplicate (unit, time), adoption periods that vary
  // within a unit, non-finite values, covariate width mismatches, or a group
  // label present on some rows and missing on others.
  static PanelDataset from_rows(std::vector<std::string> covariate_names,
                                std::span<const PanelRow> rows);

  std::size_t n_rows() const { return time_.size(); }
  std::size_t n_units() const { return unit_labels_.size(); }
  std::size_t n_clusters() const { return cluster_labels_.size(); }
  std::size_t n_groups() const { return group_labels_.size(); }
  bool has_groups() const { return !group_labels_.empty(); }

  std::span<const int> unit_codes() const { return unit_; }
  std::span<const int> times() const { return time_; }
  std::span<const double> outcomes() const { return outcome_; }
  std::span<const int> cluster_codes() const { return cluster_; }
  // Empty when the panel carries no group column.
  std::span<const int> group_codes() const { return group_; }

  const std::vector<std::string>& unit_labels() const { return unit_labels_; }
  const std::vector<std::string>& cluster_labels() const { return cluster_labels_; }
  const std::vector<std::string>& group_labels() const { return group_labels_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  const std::optional<int>& unit_adoption(int unit) const { return adoption_[unit]; }
  const std::optional<int>& row_adoption(std::size_t row) const {
    return adoption_[unit_[row]];
  }
  std::optional<int> row_relative_time(std::size_t row) const {
    return relative_time(row_adoption(row), time_[row]);
  }

  // Throws SchemaError if the covariate does not exist.
  std::span<const double> covariate(std::string_view name) const;

  int min_time() const { return min_time_; }
  int max_time() const { return max_time_; }
  int time_span() const { return max_time_ - min_time_; }

  // Distinct adoption periods over units, ascending.
  std::vector<int> cohorts() const;

  Eigen::VectorXd outcome_vector() const;

  // Keeps rows for which keep(row) is true; labels that lose all their rows
  // disappear and codes are reassigned.
  PanelDataset filter(const std::function<bool(std::size_t)>& keep) const;

  // Same panel with outcome column replaced (used by simulations and tests).
  PanelDataset with_outcomes(std::span<const double> outcomes) const;

  std::vector<PanelRow> rows() const;

 private:
  std::vector<int> unit_;
  std::vector<int> time_;
  std::vector<double> outcome_;
  std::vector<int> cluster_;
  std::vector<int> group_;
  std::vector<std::vector<double>> covariates_;  // one vector per covariate

  std::vector<std::string> unit_labels_;
  std::vector<std::string> cluster_labels_;
  std::vector<std::string> group_labels_;
  std::vector<std::string> covariate_names_;
  std::vector<std::optional<int>> adoption_;  // per unit

  int min_time_ = 0;
  int max_time_ = 0;
};

enum class EndpointPolicy { DropOutside, BinEndpoints };

// Leads/lags window for event-study indicators.
struct EventTimeDesign {
  int leads = 0;  // K: indicators for tau = -K..-1
  int lags = 0;   // L: indicators for tau = 0..L
  std::set<int> omitted{-1};
  EndpointPolicy endpoints = EndpointPolicy::DropOutside;

  // tau in [-leads, lags] minus the omitted set, ascending.
  std::vector<int> retained_taus() const;

  // Throws SchemaError: negative window, empty omitted set, window longer than
  // the panel's time span, or nothing left after omissions.
  void validate(const PanelDataset& panel) const;
};

struct EventIndicators {
  std::vector<int> taus;       // column labels
  Eigen::MatrixXd columns;     // n_rows x taus.size(), 0/1
};

// One indicator column per retained tau. Omitted taus and never-treated rows
// are all-zero; rows outside the window are zero (DropOutside) or pooled into
// the nearest endpoint column (BinEndpoints; with no leads, earlier periods
// stay in the reference group).
EventIndicators build_event_design(const PanelDataset& panel, const EventTimeDesign& design);

// Column index of tau for one row under the design, or nothing when all
// indicators are zero for that row.
std::optional<int> indicator_tau(std::optional<int> rel, const EventTimeDesign& design);

}  // namespace stagger
