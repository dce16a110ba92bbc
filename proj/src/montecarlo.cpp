#include "stagger/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "stagger/errors.hpp"

namespace stagger::sim {

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Twfe: return "twfe";
    case EstimatorKind::As: return "as";
    case EstimatorKind::Tw: return "tw";
  }
  return "?";
}

EstimatorKind estimator_from_string(std::string_view s) {
  if (s == "twfe") return EstimatorKind::Twfe;
  if (s == "as") return EstimatorKind::As;
  if (s == "tw") return EstimatorKind::Tw;
  throw SchemaError(fmt::format("unknown estimator '{}' (expected twfe, as or tw)", s));
}

namespace {

// Mean true effect per tau over rows where tau_of(row) is set.
template <typename TauOf>
std::map<int, double> mean_effect(const PanelDataset& panel, const GroundTruth& truth, TauOf tau_of) {
  std::map<int, std::pair<double, int>> acc;
  for (std::size_t r = 0; r < panel.n_rows(); ++r) {
    const auto tau = tau_of(r);
    if (!tau) continue;
    const int e = *panel.row_adoption(r);
    auto& [sum, count] = acc[*tau];
    sum += truth.effect(e, *panel.row_relative_time(r));
    ++count;
  }
  std::map<int, double> out;
  for (const auto& [tau, sc] : acc) out[tau] = sc.first / sc.second;
  return out;
}

}  // namespace

std::map<int, double> twfe_target(const PanelDataset& panel, const GroundTruth& truth,
                                  const EventTimeDesign& design) {
  return mean_effect(panel, truth, [&](std::size_t r) {
    return indicator_tau(panel.row_relative_time(r), design);
  });
}

std::map<int, double> as_target(const PanelDataset& panel, const GroundTruth& truth,
                                const EventTimeDesign& design, const AsResult& fitted) {
  const std::set<int> excluded(fitted.excluded_cohorts.begin(), fitted.excluded_cohorts.end());
  const std::set<int> dropped(fitted.dropped_periods.begin(), fitted.dropped_periods.end());
  const std::set<std::pair<int, int>> bad(fitted.dropped_cells.begin(), fitted.dropped_cells.end());
  return mean_effect(panel, truth, [&](std::size_t r) -> std::optional<int> {
    const auto& e = panel.row_adoption(r);
    if (!e || excluded.contains(*e) || dropped.contains(panel.times()[r])) return std::nullopt;
    const auto tau = indicator_tau(panel.row_relative_time(r), design);
    if (!tau || bad.contains({*e, *tau})) return std::nullopt;
    return tau;
  });
}

std::map<int, double> tw_target(const PanelDataset& panel, const GroundTruth& truth, int leads,
                                int lags, const TwResult& fitted) {
  const std::set<std::string> excluded(fitted.excluded_units.begin(), fitted.excluded_units.end());
  return mean_effect(panel, truth, [&](std::size_t r) -> std::optional<int> {
    if (excluded.contains(panel.unit_labels()[panel.unit_codes()[r]])) return std::nullopt;
    const auto rel = panel.row_relative_time(r);
    if (!rel || *rel < -leads || *rel > lags) return std::nullopt;
    return rel;
  });
}

const McTauStats* McReport::find(int tau) const {
  for (const auto& s : taus) {
    if (s.tau == tau) return &s;
  }
  return nullptr;
}

const McReport& McResult::report(EstimatorKind k) const {
  for (const auto& r : reports) {
    if (r.estimator == k) return r;
  }
  throw SchemaError(fmt::format("estimator {} was not part of this run", to_string(k)));
}

PairedDifference paired_difference(const McResult& result, EstimatorKind a, EstimatorKind b, int tau) {
  auto index = [&](EstimatorKind k) {
    auto it = std::find(result.estimators.begin(), result.estimators.end(), k);
    if (it == result.estimators.end()) throw SchemaError("estimator not part of this run");
    return static_cast<std::size_t>(it - result.estimators.begin());
  };
  const auto& da = result.draws[index(a)];
  const auto& db = result.draws[index(b)];
  std::vector<double> diff;
  for (std::size_t r = 0; r < da.size(); ++r) {
    if (!da[r].ok || !db[r].ok) continue;
    auto ea = da[r].estimate.find(tau);
    auto eb = db[r].estimate.find(tau);
    if (ea == da[r].estimate.end() || eb == db[r].estimate.end()) continue;
    diff.push_back(ea->second - eb->second);
  }
  PairedDifference out;
  out.n = static_cast<int>(diff.size());
  if (out.n == 0) return out;
  double sum = 0.0;
  for (double d : diff) sum += d;
  out.mean = sum / out.n;
  if (out.n > 1) {
    double ss = 0.0;
    for (double d : diff) ss += (d - out.mean) * (d - out.mean);
    out.mc_se = std::sqrt(ss / (out.n - 1) / out.n);
  }
  return out;
}

namespace {

McDraw run_one(EstimatorKind kind, const SimulatedPanel& sp, const McConfig& config) {
  McDraw draw;
  const EstimateTable* table = nullptr;
  EstimateTable twfe;
  AsResult as;
  TwResult tw;
  switch (kind) {
    case EstimatorKind::Twfe: {
      TwfeOptions options;
      options.inference = config.inference;
      twfe = twfe_event_study(sp.panel, config.design, config.fe, options);
      table = &twfe;
      draw.target = twfe_target(sp.panel, sp.truth, config.design);
      break;
    }
    case EstimatorKind::As: {
      AsOptions options = config.as;
      options.inference = config.inference;
      as = as_interaction_weighted(sp.panel, config.design, config.fe, options);
      table = &as.table;
      draw.target = as_target(sp.panel, sp.truth, config.design, as);
      break;
    }
    case EstimatorKind::Tw: {
      TwOptions options = config.tw;
      options.inference = config.inference;
      tw = tw_split_sample(sp.panel, config.design.leads, config.design.lags, options);
      table = &tw.table;
      draw.target = tw_target(sp.panel, sp.truth, config.design.leads, config.design.lags, tw);
      break;
    }
  }
  for (const auto& row : table->rows) {
    draw.estimate[row.tau] = row.estimate;
    draw.se[row.tau] = row.se;
    draw.ci[row.tau] = {row.ci_low, row.ci_high};
  }
  draw.ok = true;
  return draw;
}

McReport summarize(EstimatorKind kind, const std::vector<McDraw>& draws) {
  McReport report;
  report.estimator = kind;
  report.reps = static_cast<int>(draws.size());
  std::set<int> taus;
  for (const auto& d : draws) {
    if (!d.ok) {
      ++report.failures;
      continue;
    }
    for (const auto& [tau, v] : d.estimate) taus.insert(tau);
  }
  for (int tau : taus) {
    McTauStats s;
    s.tau = tau;
    std::vector<double> est, err;
    double target_sum = 0.0, se_sum = 0.0;
    int covered = 0;
    for (const auto& d : draws) {
      if (!d.ok) continue;
      auto e = d.estimate.find(tau);
      auto t = d.target.find(tau);
      if (e == d.estimate.end() || t == d.target.end()) continue;
      est.push_back(e->second);
      err.push_back(e->second - t->second);
      target_sum += t->second;
      se_sum += d.se.at(tau);
      const auto [lo, hi] = d.ci.at(tau);
      if (lo <= t->second && t->second <= hi) ++covered;
    }
    s.n = static_cast<int>(est.size());
    if (s.n == 0) continue;
    const double n = s.n;
    double sum_e = 0.0, sum_err = 0.0, sq_err = 0.0;
    for (std::size_t k = 0; k < est.size(); ++k) {
      sum_e += est[k];
      sum_err += err[k];
      sq_err += err[k] * err[k];
    }
    s.mean_estimate = sum_e / n;
    s.bias = sum_err / n;
    s.mean_target = target_sum / n;
    s.mean_se = se_sum / n;
    s.rmse = std::sqrt(sq_err / n);
    s.coverage = covered / n;
    if (s.n > 1) {
      double ss_e = 0.0, ss_err = 0.0;
      for (std::size_t k = 0; k < est.size(); ++k) {
        ss_e += (est[k] - s.mean_estimate) * (est[k] - s.mean_estimate);
        ss_err += (err[k] - s.bias) * (err[k] - s.bias);
      }
      s.empirical_se = std::sqrt(ss_e / (n - 1));
      s.mc_se = std::sqrt(ss_err / (n - 1) / n);
    }
    report.taus.push_back(s);
  }
  return report;
}

}  // namespace

McResult monte_carlo(const DgpSpec& spec, std::span<const EstimatorKind> estimators, int reps,
                     const McConfig& config) {
  if (reps < 2) throw SchemaError("Monte Carlo needs at least two replications");
  if (estimators.empty()) throw SchemaError("no estimator requested");
  spec.validate();

  McResult result;
  result.master_seed = spec.seed;
  result.reps = reps;
  result.estimators.assign(estimators.begin(), estimators.end());
  result.draws.assign(estimators.size(), std::vector<McDraw>(static_cast<std::size_t>(reps)));
  std::vector<std::vector<std::string>> errors(estimators.size(),
                                               std::vector<std::string>(static_cast<std::size_t>(reps)));

  std::atomic<int> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  auto worker = [&] {
    for (int r = next++; r < reps; r = next++) {
      try {
        DgpSpec rep_spec = spec;
        rep_spec.seed = replication_seed(spec.seed, static_cast<std::uint64_t>(r));
        const SimulatedPanel sp = generate_panel(rep_spec);
        for (std::size_t k = 0; k < estimators.size(); ++k) {
          try {
            result.draws[k][static_cast<std::size_t>(r)] = run_one(estimators[k], sp, config);
          } catch (const Error& e) {
            errors[k][static_cast<std::size_t>(r)] = e.what();
          }
        }
      } catch (...) {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(config.threads, reps));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  for (std::size_t k = 0; k < estimators.size(); ++k) {
    McReport report = summarize(estimators[k], result.draws[k]);
    if (report.failures > config.max_failure_rate * reps) {
      std::vector<std::string> first;
      for (int r = 0; r < reps && first.size() < 3; ++r) {
        if (!errors[k][static_cast<std::size_t>(r)].empty()) {
          first.push_back(fmt::format("rep {}: {}", r, errors[k][static_cast<std::size_t>(r)]));
        }
      }
      throw EstimationError(fmt::format("{} failed in {} of {} replications; {}",
                                        to_string(estimators[k]), report.failures, reps,
                                        fmt::join(first, "; ")));
    }
    result.reports.push_back(std::move(report));
  }
  return result;
}

}  // namespace stagger::sim
