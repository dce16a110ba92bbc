#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stagger/estimators.hpp"
#include "stagger/simgen.hpp"

namespace stagger::sim {

enum class EstimatorKind { Twfe, As, Tw };

std::string to_string(EstimatorKind k);
EstimatorKind estimator_from_string(std::string_view s);

// Ground-truth estimand of each estimator on a realized panel: the average
// true effect over the observations that identify tau in that estimator's
// sample (for AS, this is the cohort-share weighted average it targets).
std::map<int, double> twfe_target(const PanelDataset& panel, const GroundTruth& truth,
                                  const EventTimeDesign& design);
std::map<int, double> as_target(const PanelDataset& panel, const GroundTruth& truth,
                                const EventTimeDesign& design, const AsResult& fitted);
std::map<int, double> tw_target(const PanelDataset& panel, const GroundTruth& truth, int leads,
                                int lags, const TwResult& fitted);

struct McConfig {
  EventTimeDesign design;
  FixedEffectSpec fe = FixedEffectSpec::baseline();
  InferenceOptions inference{0.90};
  AsOptions as;
  TwOptions tw;
  int threads = 1;
  double max_failure_rate = 0.10;
};

struct McTauStats {
  int tau = 0;
  int n = 0;                  // successful replications with this tau
  double mean_estimate = 0.0;
  double mean_target = 0.0;
  double bias = 0.0;          // mean(estimate - target)
  double mc_se = 0.0;         // sd(estimate - target) / sqrt(n)
  double rmse = 0.0;
  double empirical_se = 0.0;  // sd(estimate)
  double mean_se = 0.0;       // average reported standard error
  double coverage = 0.0;      // share of CIs containing the target
};

struct McReport {
  EstimatorKind estimator = EstimatorKind::Twfe;
  int reps = 0;
  int failures = 0;
  std::vector<McTauStats> taus;

  const McTauStats* find(int tau) const;
};

// Per-replication draws, kept so estimators can be compared pairwise.
struct McDraw {
  bool ok = false;
  std::map<int, double> estimate;
  std::map<int, double> target;
  std::map<int, std::pair<double, double>> ci;
  std::map<int, double> se;
};

struct McResult {
  std::uint64_t master_seed = 0;
  int reps = 0;
  std::vector<McReport> reports;               // one per requested estimator
  std::vector<std::vector<McDraw>> draws;      // [estimator][replication]
  std::vector<EstimatorKind> estimators;

  const McReport& report(EstimatorKind k) const;
};

struct PairedDifference {
  double mean = 0.0;    // mean(estimate_a - estimate_b)
  double mc_se = 0.0;
  int n = 0;
};

PairedDifference paired_difference(const McResult& result, EstimatorKind a, EstimatorKind b, int tau);

// Runs `reps` replications of the DGP. Replication r uses the seed
// replication_seed(spec.seed, r), so the result does not depend on the thread
// count. Throws EstimationError when any estimator fails in more than
// max_failure_rate of replications, with the first failure messages.
McResult monte_carlo(const DgpSpec& spec, std::span<const EstimatorKind> estimators, int reps,
                     const McConfig& config);

}  // namespace stagger::sim
