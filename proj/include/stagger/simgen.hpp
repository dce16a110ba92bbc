#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "stagger/panel.hpp"

namespace stagger::sim {

inline constexpr std::uint64_t kDefaultSeed = 20240917;

// True dynamic effects. by_cohort entries override common ones; anything
// unspecified is zero. Negative tau entries are anticipation effects.
struct EffectPaths {
  std::map<int, double> common;
  std::map<int, std::map<int, double>> by_cohort;

  double effect(int cohort, int tau) const;
  bool empty() const;
};

struct CovariateSpec {
  int count = 0;
  double coefficient = 0.0;
  double sd = 1.0;
};

// Recipe for a synthetic staggered-adoption panel over periods 1..n_periods.
//   y = base_rate + unit effect + period effect + group-period shock
//       + coefficient * sum(covariates) + effect(E_i, t - E_i) + noise
// With binary_outcome, y is a Bernoulli draw with probability equal to that
// latent index clamped to [0, 1] (a linear-probability approximation).
struct DgpSpec {
  int n_units = 400;
  int n_periods = 14;
  std::map<int, double> cohort_probs;  // adoption period -> probability
  double never_treated_prob = 0.3;
  EffectPaths effects;
  double base_rate = 0.0;
  double unit_fe_sd = 0.0;
  double time_fe_sd = 0.0;
  double group_time_sd = 0.0;
  double noise_sd = 0.0;
  int group_count = 1;
  CovariateSpec covariates;
  bool binary_outcome = false;
  std::uint64_t seed = kDefaultSeed;
  std::string effect_link;  // provenance note carried into GroundTruth

  // Throws SchemaError on a malformed recipe.
  void validate() const;
};

struct GroundTruth {
  EffectPaths effects;
  std::vector<int> cohorts;  // cohorts realized in the panel
  std::string link;          // how the effects were derived, if from the model

  double effect(int cohort, int tau) const { return effects.effect(cohort, tau); }
};

struct SimulatedPanel {
  PanelDataset panel;
  GroundTruth truth;
};

// Deterministic in spec.seed. Units are labelled u0001.., clustered by unit,
// and assigned uniformly to groups g01...
SimulatedPanel generate_panel(const DgpSpec& spec);

// Sets the adoption-period effect to scale * delta_f(beta) for every cohort:
// the armed group's violent response is proportional to the support it
// stands to lose. This proportional link is a modelling convention of this
// toolkit. Throws DomainError for beta outside [0, 9/20].
DgpSpec dgp_from_model(double beta, double base_rate, double scale, DgpSpec rest);

// Stream seed for replication `index` under a master seed (splitmix64 mix).
std::uint64_t replication_seed(std::uint64_t master, std::uint64_t index);

// Built-in scenarios: "homogeneous", "heterogeneous", "anticipation", "null".
// All use 400 units x 14 periods, 40 groups, adoption in periods 4..10 and
// 30% never treated.
DgpSpec scenario(std::string_view name);
std::vector<std::string> scenario_names();

}  // namespace stagger::sim
