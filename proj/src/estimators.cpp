#include "stagger/estimators.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "stagger/errors.hpp"

namespace stagger {

namespace {

// Relative to a column's norm before fixed-effect residualization. Demeaning
// is only accurate to its tolerance, so the kernel's 1e-10 would keep columns
// that the fixed effects absorb.
constexpr double kAbsorbedTol = 1e-6;

std::vector<double> column_norms(const Eigen::MatrixXd& m) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) out[c] = m.col(c).norm();
  return out;
}

Clustering subset_clusters(const Clustering& all, const std::vector<std::size_t>& rows) {
  std::vector<int> codes;
  codes.reserve(rows.size());
  for (std::size_t r : rows) codes.push_back(all.codes[r]);
  return Clustering::from_codes(codes);
}

EstimateRow make_row(int tau, double estimate, double se, int n_clusters,
                     const InferenceOptions& inf) {
  EstimateRow row;
  row.tau = tau;
  row.estimate = estimate;
  row.se = se;
  const double crit = critical_value(inf.level, n_clusters - 1, inf.normal_critical);
  row.ci_low = estimate - crit * se;
  row.ci_high = estimate + crit * se;
  row.p_value = se > 0.0 ? two_sided_p(estimate / se, n_clusters - 1, inf.normal_critical)
                         : (estimate == 0.0 ? 1.0 : 0.0);
  return row;
}

EstimateTable table_header(std::string name, const PanelDataset& panel, int leads, int lags,
                           std::set<int> omitted, const InferenceOptions& inf) {
  EstimateTable t;
  t.estimator = std::move(name);
  t.n_obs = panel.n_rows();
  t.leads = leads;
  t.lags = lags;
  t.omitted = std::move(omitted);
  t.level = inf.level;
  return t;
}

// Residualizes [y | X] jointly and fits OLS, dropping absorbed columns.
struct FeFit {
  Eigen::MatrixXd X;  // residualized design
  OlsFit fit;
  DemeanResult demeaned;
};

FeFit fit_with_fe(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const FeStructure& fe,
                  const DemeanOptions& demean_options) {
  Eigen::MatrixXd stacked(X.rows(), X.cols() + 1);
  stacked.col(0) = y;
  stacked.rightCols(X.cols()) = X;
  FeFit out;
  out.demeaned = demean(stacked, fe, demean_options);
  out.X = out.demeaned.residuals.rightCols(X.cols());
  const Eigen::VectorXd y_dm = out.demeaned.residuals.col(0);
  const auto norms = column_norms(X);
  out.fit = ols(out.X, y_dm, kAbsorbedTol, norms);
  return out;
}

void note_demeaning(EstimateTable& table, const DemeanResult& d) {
  if (!d.singleton_rows.empty()) {
    table.diagnostics.push_back(
        fmt::format("{} singleton observations residualized to zero", d.singleton_rows.size()));
  }
}

}  // namespace

const EstimateRow* EstimateTable::find(int tau) const {
  for (const auto& r : rows) {
    if (r.tau == tau) return &r;
  }
  return nullptr;
}

Clustering row_clusters(const PanelDataset& panel, ClusterOn on) {
  switch (on) {
    case ClusterOn::ClusterColumn: return Clustering::from_codes(panel.cluster_codes());
    case ClusterOn::Unit: return Clustering::from_codes(panel.unit_codes());
    case ClusterOn::Group:
      if (!panel.has_groups()) throw SchemaError("clustering on groups but the panel has no group column");
      return Clustering::from_codes(panel.group_codes());
  }
  throw SchemaError("unknown cluster option");
}

EstimateTable twfe_event_study(const PanelDataset& panel, const EventTimeDesign& design,
                               const FixedEffectSpec& fe, const TwfeOptions& options) {
  const EventIndicators ind = build_event_design(panel, design);
  const auto n_ind = static_cast<Eigen::Index>(ind.taus.size());
  const auto n_ctrl = static_cast<Eigen::Index>(options.controls.size());
  const auto n = static_cast<Eigen::Index>(panel.n_rows());

  Eigen::MatrixXd X(n, n_ind + n_ctrl);
  X.leftCols(n_ind) = ind.columns;
  for (Eigen::Index k = 0; k < n_ctrl; ++k) {
    const auto col = panel.covariate(options.controls[static_cast<std::size_t>(k)]);
    for (Eigen::Index r = 0; r < n; ++r) X(r, n_ind + k) = col[static_cast<std::size_t>(r)];
  }

  const FeStructure fes = FeStructure::resolve(panel, fe);
  FeFit ff = fit_with_fe(panel.outcome_vector(), X, fes, options.demean);

  bool any = false;
  for (Eigen::Index c = 0; c < n_ind; ++c) any = any || ff.fit.position_of(c).has_value();
  if (!any) {
    throw EstimationError(
        "all event-time indicators are collinear with the fixed effects (e.g. every unit treated "
        "in the same period)");
  }

  const Clustering clusters = row_clusters(panel, options.inference.cluster_on);
  const ClusterVcov vcov = cluster_vcov(ff.fit, ff.X, clusters, options.inference.correction);
  const Eigen::VectorXd se = vcov.standard_errors();

  EstimateTable table = table_header("twfe", panel, design.leads, design.lags, design.omitted,
                                     options.inference);
  table.n_clusters = vcov.n_clusters;
  for (Eigen::Index c = 0; c < n_ind; ++c) {
    const auto pos = ff.fit.position_of(c);
    if (!pos) {
      table.diagnostics.push_back(fmt::format("tau {} dropped (collinear)", ind.taus[c]));
      continue;
    }
    table.rows.push_back(make_row(ind.taus[c], ff.fit.coefficients(*pos), se(*pos),
                                  vcov.n_clusters, options.inference));
  }
  for (Eigen::Index k = 0; k < n_ctrl; ++k) {
    if (!ff.fit.position_of(n_ind + k)) {
      table.diagnostics.push_back(
          fmt::format("control '{}' dropped (collinear)", options.controls[static_cast<std::size_t>(k)]));
    }
  }
  note_demeaning(table, ff.demeaned);
  return table;
}

AsResult as_interaction_weighted(const PanelDataset& panel, const EventTimeDesign& design,
                                 const FixedEffectSpec& fe, const AsOptions& options) {
  if (fe.unit_linear_trends) {
    throw SchemaError("the interaction-weighted estimator does not take unit-specific trends");
  }
  design.validate(panel);
  AsResult result;

  // Sample exclusions.
  std::vector<int> cohorts = panel.cohorts();
  std::set<int> excluded;
  if (options.exclude_first_cohort && !cohorts.empty()) {
    excluded.insert(cohorts.front());
    cohorts.erase(cohorts.begin());
  }
  std::set<int> dropped_periods;
  if (options.drop_untreated_periods && cohorts.size() >= 2) {
    std::set<int> observed(panel.times().begin(), panel.times().end());
    for (int t : observed) {
      if (t > cohorts.front() && t < cohorts.back() &&
          !std::binary_search(cohorts.begin(), cohorts.end(), t)) {
        dropped_periods.insert(t);
      }
    }
  }
  if (cohorts.size() < 2) {
    throw EstimationError(fmt::format(
        "interaction-weighted estimator needs at least two treated cohorts after exclusions, found {}",
        cohorts.size()));
  }
  result.excluded_cohorts.assign(excluded.begin(), excluded.end());
  result.dropped_periods.assign(dropped_periods.begin(), dropped_periods.end());

  const PanelDataset sample =
      excluded.empty() && dropped_periods.empty()
          ? panel
          : panel.filter([&](std::size_t r) {
              const auto& e = panel.row_adoption(r);
              if (e && excluded.contains(*e)) return false;
              return !dropped_periods.contains(panel.times()[r]);
            });

  // Cohort x tau cells with at least one observation.
  const std::vector<int> taus = design.retained_taus();
  const auto n = static_cast<Eigen::Index>(sample.n_rows());
  std::map<std::pair<int, int>, std::vector<Eigen::Index>> cell_rows;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& e = sample.row_adoption(static_cast<std::size_t>(r));
    const auto tau = indicator_tau(sample.row_relative_time(static_cast<std::size_t>(r)), design);
    if (e && tau) cell_rows[{*e, *tau}].push_back(r);
  }
  std::vector<std::pair<int, int>> cells;
  for (const auto& [key, rows] : cell_rows) cells.push_back(key);
  if (cells.empty()) throw EstimationError("no cohort is observed inside the event window");

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(cells.size()));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (Eigen::Index r : cell_rows[cells[c]]) X(r, static_cast<Eigen::Index>(c)) = 1.0;
  }

  const FeStructure fes = FeStructure::resolve(sample, fe);
  FeFit ff = fit_with_fe(sample.outcome_vector(), X, fes, options.demean);
  const Clustering clusters = row_clusters(sample, options.inference.cluster_on);
  const ClusterVcov vcov = cluster_vcov(ff.fit, ff.X, clusters, options.inference.correction);

  EstimateTable& table = result.table;
  table = table_header("as", sample, design.leads, design.lags, design.omitted, options.inference);
  table.n_clusters = vcov.n_clusters;
  if (!excluded.empty()) {
    table.diagnostics.push_back(fmt::format("excluded first cohort {}", fmt::join(excluded, ",")));
  }
  if (!dropped_periods.empty()) {
    table.diagnostics.push_back(
        fmt::format("dropped periods without adoption: {}", fmt::join(dropped_periods, ",")));
  }

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto pos = ff.fit.position_of(static_cast<Eigen::Index>(c));
    if (pos) {
      result.cohort_effects[cells[c]] = ff.fit.coefficients(*pos);
    } else {
      result.dropped_cells.push_back(cells[c]);
      table.diagnostics.push_back(
          fmt::format("cell (cohort {}, tau {}) dropped (collinear)", cells[c].first, cells[c].second));
    }
  }

  for (int tau : taus) {
    // Weights: share of observations in identified cells at this tau.
    std::vector<std::pair<Eigen::Index, double>> terms;  // (retained position, count)
    std::map<int, double> counts;
    double total = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].second != tau) continue;
      const auto pos = ff.fit.position_of(static_cast<Eigen::Index>(c));
      if (!pos) continue;
      const double count = static_cast<double>(cell_rows[cells[c]].size());
      terms.emplace_back(*pos, count);
      counts[cells[c].first] = count;
      total += count;
    }
    if (total == 0.0) {
      table.diagnostics.push_back(fmt::format("tau {} dropped (no identified cohort)", tau));
      continue;
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(ff.fit.rank);
    for (const auto& [pos, count] : terms) w(pos) = count / total;
    auto& wt = result.weights[tau];
    for (const auto& [cohort, count] : counts) wt[cohort] = count / total;

    const double estimate = w.dot(ff.fit.coefficients);
    const double var = w.dot(vcov.matrix * w);
    table.rows.push_back(make_row(tau, estimate, std::sqrt(std::max(var, 0.0)), vcov.n_clusters,
                                  options.inference));
  }
  if (table.rows.empty()) throw EstimationError("no event time has an identified cohort");
  note_demeaning(table, ff.demeaned);
  return result;
}

TwResult tw_split_sample(const PanelDataset& panel, int leads, int lags, const TwOptions& options) {
  if (leads < 0 || lags < 0) throw SchemaError("leads and lags must be non-negative");
  const std::size_t n_all = panel.n_rows();
  const auto units = panel.unit_codes();
  const auto y = panel.outcomes();

  // Influence window and benchmark mean per unit.
  std::vector<char> influenced(n_all, 0);
  std::vector<double> out_sum(panel.n_units(), 0.0), out_count(panel.n_units(), 0.0);
  for (std::size_t r = 0; r < n_all; ++r) {
    const auto rel = panel.row_relative_time(r);
    influenced[r] = rel && *rel >= -leads && *rel <= lags;
    if (!influenced[r]) {
      out_sum[units[r]] += y[r];
      out_count[units[r]] += 1.0;
    }
  }

  TwResult result;
  std::vector<char> unit_kept(panel.n_units(), 1);
  for (std::size_t u = 0; u < panel.n_units(); ++u) {
    if (out_count[u] == 0.0) {
      const auto& label = panel.unit_labels()[u];
      if (options.strict) {
        throw EstimationError(fmt::format(
            "unit '{}' has no period outside its influence window; its benchmark mean is undefined",
            label));
      }
      unit_kept[u] = 0;
      result.excluded_units.push_back(label);
    }
  }

  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < n_all; ++r) {
    if (unit_kept[units[r]]) rows.push_back(r);
  }
  if (rows.empty()) throw EstimationError("no unit has a benchmark period");

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd dev(n);
  std::vector<int> tau_of(rows.size(), 0);
  std::vector<char> in_window(rows.size(), 0);
  std::set<int> observed_taus;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    dev(static_cast<Eigen::Index>(i)) = y[r] - out_sum[units[r]] / out_count[units[r]];
    in_window[i] = influenced[r];
    if (influenced[r]) {
      tau_of[i] = *panel.row_relative_time(r);
      observed_taus.insert(tau_of[i]);
    }
  }
  std::size_t n_window = std::count(in_window.begin(), in_window.end(), 1);
  if (n_window == 0) throw EstimationError("no observation falls inside any influence window");
  if (n_window == rows.size()) throw EstimationError("second subsample has no non-influenced periods");

  const Clustering all_clusters = row_clusters(panel, options.inference.cluster_on);
  const Clustering clusters = subset_clusters(all_clusters, rows);
  if (clusters.n_levels < 2) throw EstimationError("cluster-robust variance needs at least two clusters");
  const double G = clusters.n_levels;
  const double factor =
      options.inference.correction == SmallSampleCorrection::StataLike ? G / (G - 1.0) : 1.0;

  EstimateTable& table = result.table;
  table = table_header("tw", panel, leads, lags, {}, options.inference);
  table.n_obs = rows.size();
  table.n_clusters = clusters.n_levels;
  if (!result.excluded_units.empty()) {
    table.diagnostics.push_back(fmt::format("excluded units without benchmark periods: {}",
                                            fmt::join(result.excluded_units, ",")));
  }
  std::vector<int> taus;
  for (int tau = -leads; tau <= lags; ++tau) {
    if (observed_taus.contains(tau)) {
      taus.push_back(tau);
    } else {
      table.diagnostics.push_back(fmt::format("tau {} not observed", tau));
    }
  }

  // Window subsample indices (positions within rows).
  std::vector<Eigen::Index> window_pos;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (in_window[i]) window_pos.push_back(static_cast<Eigen::Index>(i));
  }

  auto emit = [&](int tau, double theta_l, double theta_d, const Eigen::VectorXd& psi) {
    // psi: per-row influence of the total effect, indexed by position in rows.
    Eigen::VectorXd s = Eigen::VectorXd::Zero(clusters.n_levels);
    for (Eigen::Index i = 0; i < n; ++i) s(clusters.codes[static_cast<std::size_t>(i)]) += psi(i);
    const double se = std::sqrt(factor * s.squaredNorm());
    result.theta_l.push_back(theta_l);
    result.theta_d.push_back(theta_d);
    table.rows.push_back(make_row(tau, theta_l + theta_d, se, clusters.n_levels, options.inference));
  };

  const auto n_w = static_cast<Eigen::Index>(window_pos.size());
  if (options.second_stage == TwSecondStage::Pooled) {
    // First stage: window subsample on the full set of tau indicators.
    Eigen::MatrixXd X1 = Eigen::MatrixXd::Zero(n_w, static_cast<Eigen::Index>(taus.size()));
    Eigen::VectorXd y1(n_w);
    for (Eigen::Index k = 0; k < n_w; ++k) {
      const auto i = static_cast<std::size_t>(window_pos[k]);
      const auto col = std::lower_bound(taus.begin(), taus.end(), tau_of[i]) - taus.begin();
      X1(k, col) = 1.0;
      y1(k) = dev(window_pos[k]);
    }
    const OlsFit fit1 = ols(X1, y1);
    const Eigen::MatrixXd inf1 = coefficient_influence(fit1, X1);
    Eigen::VectorXd share(static_cast<Eigen::Index>(taus.size()));
    for (Eigen::Index c = 0; c < share.size(); ++c) share(c) = X1.col(c).sum() / static_cast<double>(n_w);
    const double window_mean = share.dot(fit1.coefficients);

    // Second stage: all rows on {1, L}.
    Eigen::MatrixXd X2(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      X2(i, 0) = 1.0;
      X2(i, 1) = in_window[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    }
    const OlsFit fit2 = ols(X2, dev);
    const double theta_d = fit2.coefficients(1);
    const Eigen::MatrixXd inf2 = coefficient_influence(fit2, X2);

    for (std::size_t c = 0; c < taus.size(); ++c) {
      const auto cc = static_cast<Eigen::Index>(c);
      const double theta_l = fit1.coefficients(cc) - window_mean;
      Eigen::VectorXd psi = inf2.col(1);
      for (Eigen::Index k = 0; k < n_w; ++k) {
        psi(window_pos[k]) += inf1(k, cc) - inf1.row(k).dot(share);
      }
      emit(taus[c], theta_l, theta_d, psi);
    }
  } else {
    for (int tau : taus) {
      Eigen::MatrixXd X1(n_w, 2);
      Eigen::VectorXd y1(n_w);
      for (Eigen::Index k = 0; k < n_w; ++k) {
        const auto i = static_cast<std::size_t>(window_pos[k]);
        X1(k, 0) = 1.0;
        X1(k, 1) = tau_of[i] == tau ? 1.0 : 0.0;
        y1(k) = dev(window_pos[k]);
      }
      std::vector<Eigen::Index> second;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        if (!(in_window[ii] && tau_of[ii] == tau)) second.push_back(i);
      }
      const auto n2 = static_cast<Eigen::Index>(second.size());
      Eigen::MatrixXd X2(n2, 2);
      Eigen::VectorXd y2(n2);
      for (Eigen::Index k = 0; k < n2; ++k) {
        X2(k, 0) = 1.0;
        X2(k, 1) = in_window[static_cast<std::size_t>(second[k])] ? 1.0 : 0.0;
        y2(k) = dev(second[k]);
      }
      const OlsFit fit1 = ols(X1, y1);
      const OlsFit fit2 = ols(X2, y2);
      if (fit1.rank < 2 || fit2.rank < 2) {
        throw EstimationError(fmt::format(
            "per-tau split at tau {} is degenerate: no influenced period at another event time", tau));
      }
      const Eigen::MatrixXd inf1 = coefficient_influence(fit1, X1);
      const Eigen::MatrixXd inf2 = coefficient_influence(fit2, X2);
      Eigen::VectorXd psi = Eigen::VectorXd::Zero(n);
      for (Eigen::Index k = 0; k < n_w; ++k) psi(window_pos[k]) += inf1(k, 1);
      for (Eigen::Index k = 0; k < n2; ++k) psi(second[k]) += inf2(k, 1);
      emit(tau, fit1.coefficients(1), fit2.coefficients(1), psi);
    }
  }
  return result;
}

Comparison compare_estimators(const PanelDataset& panel, const EventTimeDesign& design,
                              const FixedEffectSpec& fe, const CompareOptions& options) {
  Comparison out;
  TwfeOptions twfe_options;
  twfe_options.inference = options.inference;
  twfe_options.demean = options.demean;
  out.twfe = twfe_event_study(panel, design, fe, twfe_options);

  AsOptions as_options = options.as;
  as_options.inference = options.inference;
  as_options.demean = options.demean;
  AsResult as = as_interaction_weighted(panel, design, fe, as_options);
  out.as = std::move(as.table);
  out.as_weights = std::move(as.weights);

  TwOptions tw_options = options.tw;
  tw_options.inference = options.inference;
  out.tw = tw_split_sample(panel, design.leads, design.lags, tw_options).table;
  return out;
}

}  // namespace stagger
