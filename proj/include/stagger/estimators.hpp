#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stagger/demean.hpp"
#include "stagger/panel.hpp"
#include "stagger/regress.hpp"

namespace stagger {

enum class ClusterOn { ClusterColumn, Unit, Group };

struct InferenceOptions {
  double level = 0.95;
  SmallSampleCorrection correction = SmallSampleCorrection::StataLike;
  bool normal_critical = false;  // default: Student-t with G - 1 df
  ClusterOn cluster_on = ClusterOn::ClusterColumn;
};

struct EstimateRow {
  int tau = 0;
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
};

struct EstimateTable {
  std::string estimator;
  std::vector<EstimateRow> rows;  // ascending tau
  std::size_t n_obs = 0;
  int n_clusters = 0;
  int leads = 0;
  int lags = 0;
  std::set<int> omitted;
  double level = 0.95;
  std::vector<std::string> diagnostics;

  const EstimateRow* find(int tau) const;
};

// weights[tau][cohort], each inner map sums to one.
using CohortWeights = std::map<int, std::map<int, double>>;

struct TwfeOptions {
  std::vector<std::string> controls;
  InferenceOptions inference;
  DemeanOptions demean;
};

// Dynamic two-way fixed-effects event study: event indicators plus controls,
// residualized against the fixed effects, then OLS with cluster-robust SEs.
EstimateTable twfe_event_study(const PanelDataset& panel, const EventTimeDesign& design,
                               const FixedEffectSpec& fe, const TwfeOptions& options = {});

struct AsOptions {
  bool exclude_first_cohort = true;
  // Drop calendar periods between the first and last remaining cohort in
  // which no unit adopts.
  bool drop_untreated_periods = true;
  InferenceOptions inference;
  DemeanOptions demean;
};

struct AsResult {
  EstimateTable table;
  CohortWeights weights;
  std::map<std::pair<int, int>, double> cohort_effects;  // (cohort, tau) -> delta
  std::vector<int> excluded_cohorts;
  std::vector<int> dropped_periods;
  std::vector<std::pair<int, int>> dropped_cells;  // collinear (cohort, tau)
};

// Interaction-weighted estimator: cohort x event-time saturated regression
// with the same fixed effects, then cohort-share weighted averages per tau.
// Standard errors treat the weights as fixed.
AsResult as_interaction_weighted(const PanelDataset& panel, const EventTimeDesign& design,
                                 const FixedEffectSpec& fe, const AsOptions& options = {});

// How the second split-sample regression is run.
//   Pooled: one coefficient on L from all rows, first-stage effects measured
//           against the mean of the influenced subsample.
//   PerTau: for each tau, first stage on {1, D^tau} within L = 1, second stage
//           on {1, L} within D^tau = 0.
// Both give the same total effect; they differ only in the split.
enum class TwSecondStage { Pooled, PerTau };

struct TwOptions {
  TwSecondStage second_stage = TwSecondStage::Pooled;
  // Error instead of excluding treated units that have no period outside
  // their influence window.
  bool strict = false;
  InferenceOptions inference;
};

struct TwResult {
  EstimateTable table;
  std::vector<double> theta_l;  // aligned with table.rows
  std::vector<double> theta_d;
  std::vector<std::string> excluded_units;
};

// Split-sample delayed/anticipated effects for tau in [-leads, lags], each
// reported as theta^{tau,L} + theta^{tau,D}. Deviations are taken from each
// unit's mean outcome over periods outside its influence window.
TwResult tw_split_sample(const PanelDataset& panel, int leads, int lags,
                         const TwOptions& options = {});

struct CompareOptions {
  InferenceOptions inference;
  DemeanOptions demean;
  AsOptions as;
  TwOptions tw;
};

struct Comparison {
  EstimateTable twfe;
  EstimateTable as;
  EstimateTable tw;
  CohortWeights as_weights;
};

// All three estimators on the same input; TW uses the design's window.
Comparison compare_estimators(const PanelDataset& panel, const EventTimeDesign& design,
                              const FixedEffectSpec& fe, const CompareOptions& options = {});

// Cluster codes of each row under the chosen clustering column.
Clustering row_clusters(const PanelDataset& panel, ClusterOn on);

}  // namespace stagger
