#include "stagger/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include <fmt/format.h>

#include "stagger/errors.hpp"

namespace stagger {

std::optional<int> relative_time(std::optional<int> adoption, int t) {
  if (!adoption) return std::nullopt;
  return t - *adoption;
}

namespace {

// Maps labels to codes in sorted label order.
std::pair<std::vector<std::string>, std::map<std::string, int>> code_labels(
    const std::vector<std::string>& raw) {
  std::map<std::string, int> index;
  for (const auto& s : raw) index.emplace(s, 0);
  std::vector<std::string> labels;
  labels.reserve(index.size());
  int next = 0;
  for (auto& [label, code] : index) {
    code = next++;
    labels.push_back(label);
  }
  return {std::move(labels), std::move(index)};
}

}  // namespace

PanelDataset PanelDataset::from_rows(std::vector<std::string> covariate_names,
                                     std::span<const PanelRow> rows) {
  if (rows.empty()) throw SchemaError("panel has no rows");

  PanelDataset p;
  p.covariate_names_ = std::move(covariate_names);
  const std::size_t n = rows.size();
  const std::size_t n_cov = p.covariate_names_.size();

  std::vector<std::string> units, clusters, groups;
  units.reserve(n);
  clusters.reserve(n);
  const bool grouped = rows.front().group.has_value();
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = rows[r];
    if (row.group.has_value() != grouped) {
      throw SchemaError(fmt::format("row {} (unit '{}'): group label missing on some rows only",
                                    r, row.unit));
    }
    if (!std::isfinite(row.outcome)) {
      throw SchemaError(fmt::format("row {} (unit '{}', time {}): non-finite outcome", r,
                                    row.unit, row.time));
    }
    if (row.covariates.size() != n_cov) {
      throw SchemaError(fmt::format("row {}: expected {} covariates, got {}", r, n_cov,
                                    row.covariates.size()));
    }
    for (std::size_t k = 0; k < n_cov; ++k) {
      if (!std::isfinite(row.covariates[k])) {
        throw SchemaError(fmt::format("row {} (unit '{}'): non-finite covariate '{}'", r,
                                      row.unit, p.covariate_names_[k]));
      }
    }
    units.push_back(row.unit);
    clusters.push_back(row.cluster);
    if (grouped) groups.push_back(*row.group);
  }

  auto [unit_labels, unit_index] = code_labels(units);
  auto [cluster_labels, cluster_index] = code_labels(clusters);
  p.unit_labels_ = std::move(unit_labels);
  p.cluster_labels_ = std::move(cluster_labels);
  std::map<std::string, int> group_index;
  if (grouped) {
    auto coded = code_labels(groups);
    p.group_labels_ = std::move(coded.first);
    group_index = std::move(coded.second);
  }

  p.unit_.resize(n);
  p.time_.resize(n);
  p.outcome_.resize(n);
  p.cluster_.resize(n);
  if (grouped) p.group_.resize(n);
  p.covariates_.assign(n_cov, std::vector<double>(n));
  p.adoption_.assign(p.unit_labels_.size(), std::nullopt);
  std::vector<bool> adoption_seen(p.unit_labels_.size(), false);
  std::set<std::pair<int, int>> seen;

  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = rows[r];
    const int u = unit_index.at(row.unit);
    if (!seen.emplace(u, row.time).second) {
      throw SchemaError(fmt::format("duplicate observation for unit '{}' at time {}", row.unit,
                                    row.time));
    }
    if (!adoption_seen[u]) {
      p.adoption_[u] = row.adoption;
      adoption_seen[u] = true;
    } else if (p.adoption_[u] != row.adoption) {
      throw SchemaError(fmt::format("unit '{}': adoption period varies across rows", row.unit));
    }
    p.unit_[r] = u;
    p.time_[r] = row.time;
    p.outcome_[r] = row.outcome;
    p.cluster_[r] = cluster_index.at(row.cluster);
    if (grouped) p.group_[r] = group_index.at(*row.group);
    for (std::size_t k = 0; k < n_cov; ++k) p.covariates_[k][r] = row.covariates[k];
  }

  auto [lo, hi] = std::minmax_element(p.time_.begin(), p.time_.end());
  p.min_time_ = *lo;
  p.max_time_ = *hi;
  return p;
}

std::span<const double> PanelDataset::covariate(std::string_view name) const {
  auto it = std::find(covariate_names_.begin(), covariate_names_.end(), name);
  if (it == covariate_names_.end()) {
    throw SchemaError(fmt::format("unknown covariate '{}'", name));
  }
  return covariates_[static_cast<std::size_t>(it - covariate_names_.begin())];
}

std::vector<int> PanelDataset::cohorts() const {
  std::set<int> out;
  for (const auto& e : adoption_) {
    if (e) out.insert(*e);
  }
  return {out.begin(), out.end()};
}

Eigen::VectorXd PanelDataset::outcome_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(outcome_.data(),
                                           static_cast<Eigen::Index>(outcome_.size()));
}

std::vector<PanelRow> PanelDataset::rows() const {
  std::vector<PanelRow> out(n_rows());
  for (std::size_t r = 0; r < n_rows(); ++r) {
    auto& row = out[r];
    row.unit = unit_labels_[unit_[r]];
    row.time = time_[r];
    row.outcome = outcome_[r];
    row.adoption = adoption_[unit_[r]];
    row.cluster = cluster_labels_[cluster_[r]];
    if (has_groups()) row.group = group_labels_[group_[r]];
    row.covariates.resize(covariates_.size());
    for (std::size_t k = 0; k < covariates_.size(); ++k) row.covariates[k] = covariates_[k][r];
  }
  return out;
}

PanelDataset PanelDataset::filter(const std::function<bool(std::size_t)>& keep) const {
  std::vector<PanelRow> kept;
  auto all = rows();
  kept.reserve(all.size());
  for (std::size_t r = 0; r < all.size(); ++r) {
    if (keep(r)) kept.push_back(std::move(all[r]));
  }
  if (kept.empty()) throw SchemaError("row filter removed every observation");
  return from_rows(covariate_names_, kept);
}

PanelDataset PanelDataset::with_outcomes(std::span<const double> outcomes) const {
  if (outcomes.size() != n_rows()) throw SchemaError("outcome vector length mismatch");
  for (double v : outcomes) {
    if (!std::isfinite(v)) throw SchemaError("non-finite outcome");
  }
  PanelDataset copy = *this;
  copy.outcome_.assign(outcomes.begin(), outcomes.end());
  return copy;
}

std::vector<int> EventTimeDesign::retained_taus() const {
  std::vector<int> taus;
  for (int tau = -leads; tau <= lags; ++tau) {
    if (!omitted.contains(tau)) taus.push_back(tau);
  }
  return taus;
}

void EventTimeDesign::validate(const PanelDataset& panel) const {
  if (leads < 0 || lags < 0) throw SchemaError("leads and lags must be non-negative");
  if (omitted.empty()) {
    throw SchemaError("at least one relative period must be omitted (collinearity)");
  }
  if (leads > panel.time_span() || lags > panel.time_span()) {
    throw SchemaError(fmt::format("window (leads {}, lags {}) exceeds the panel time span {}",
                                  leads, lags, panel.time_span()));
  }
  if (retained_taus().empty()) throw SchemaError("event window is empty after omissions");
}

std::optional<int> indicator_tau(std::optional<int> rel, const EventTimeDesign& design) {
  if (!rel) return std::nullopt;
  int tau = *rel;
  if (design.omitted.contains(tau)) return std::nullopt;
  if (tau < -design.leads || tau > design.lags) {
    if (design.endpoints == EndpointPolicy::DropOutside) return std::nullopt;
    // Without leads there is no pre-period bin; earlier periods stay in the reference.
    if (tau < -design.leads && design.leads == 0) return std::nullopt;
    tau = tau < -design.leads ? -design.leads : design.lags;
    if (design.omitted.contains(tau)) return std::nullopt;
  }
  return tau;
}

EventIndicators build_event_design(const PanelDataset& panel, const EventTimeDesign& design) {
  design.validate(panel);
  EventIndicators out;
  out.taus = design.retained_taus();
  const auto n = static_cast<Eigen::Index>(panel.n_rows());
  out.columns = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(out.taus.size()));
  const int first = out.taus.front();
  std::vector<int> column_of(static_cast<std::size_t>(out.taus.back() - first + 1), -1);
  for (std::size_t c = 0; c < out.taus.size(); ++c) column_of[out.taus[c] - first] = static_cast<int>(c);

  for (Eigen::Index r = 0; r < n; ++r) {
    auto tau = indicator_tau(panel.row_relative_time(static_cast<std::size_t>(r)), design);
    if (tau) out.columns(r, column_of[*tau - first]) = 1.0;
  }
  return out;
}

}  // namespace stagger
