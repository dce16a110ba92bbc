#include "stagger/simgen.hpp"

#include <algorithm>
#include <cmath>

#include <boost/random/discrete_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <fmt/format.h>

#include "stagger/errors.hpp"
#include "stagger/hotelling.hpp"

namespace stagger::sim {

double EffectPaths::effect(int cohort, int tau) const {
  if (auto c = by_cohort.find(cohort); c != by_cohort.end()) {
    if (auto it = c->second.find(tau); it != c->second.end()) return it->second;
  }
  if (auto it = common.find(tau); it != common.end()) return it->second;
  return 0.0;
}

bool EffectPaths::empty() const {
  auto nonzero = [](const std::map<int, double>& m) {
    return std::any_of(m.begin(), m.end(), [](const auto& kv) { return kv.second != 0.0; });
  };
  if (nonzero(common)) return false;
  return std::none_of(by_cohort.begin(), by_cohort.end(),
                      [&](const auto& kv) { return nonzero(kv.second); });
}

void DgpSpec::validate() const {
  if (n_units < 2) throw SchemaError("a simulated panel needs at least two units");
  if (n_periods < 2) throw SchemaError("a simulated panel needs at least two periods");
  if (group_count < 1) throw SchemaError("group_count must be at least 1");
  for (double sd : {unit_fe_sd, time_fe_sd, group_time_sd, noise_sd, covariates.sd}) {
    if (!(sd >= 0.0) || !std::isfinite(sd)) throw SchemaError("standard deviations must be finite and non-negative");
  }
  if (covariates.count < 0) throw SchemaError("covariate count must be non-negative");
  double total = never_treated_prob;
  if (!(never_treated_prob >= 0.0)) throw SchemaError("never-treated probability must be non-negative");
  for (const auto& [period, p] : cohort_probs) {
    if (!(p >= 0.0)) throw SchemaError(fmt::format("negative probability for cohort {}", period));
    if (period < 1 || period > n_periods) {
      throw SchemaError(fmt::format("cohort {} lies outside periods 1..{}", period, n_periods));
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw SchemaError(fmt::format("cohort probabilities sum to {:.17g}, not 1", total));
  }
  const bool any_treated = std::any_of(cohort_probs.begin(), cohort_probs.end(),
                                       [](const auto& kv) { return kv.second > 0.0; });
  if (!any_treated && !effects.empty()) {
    throw SchemaError("treatment effects requested but every unit is never treated");
  }
}

SimulatedPanel generate_panel(const DgpSpec& spec) {
  spec.validate();
  boost::random::mt19937_64 rng(spec.seed);
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  boost::random::uniform_01<double> uniform;

  std::vector<int> periods;
  std::vector<double> weights;
  for (const auto& [period, p] : spec.cohort_probs) {
    periods.push_back(period);
    weights.push_back(p);
  }
  weights.push_back(spec.never_treated_prob);
  boost::random::discrete_distribution<int, double> cohort_draw(weights.begin(), weights.end());
  boost::random::uniform_int_distribution<int> group_draw(0, spec.group_count - 1);

  const int width_u = static_cast<int>(std::to_string(spec.n_units).size());
  const int width_g = std::max(2, static_cast<int>(std::to_string(spec.group_count).size()));

  struct Unit {
    std::optional<int> adoption;
    int group = 0;
    double effect = 0.0;
  };
  std::vector<Unit> units(static_cast<std::size_t>(spec.n_units));
  for (auto& u : units) {
    const int k = cohort_draw(rng);
    if (k < static_cast<int>(periods.size())) u.adoption = periods[k];
    u.group = group_draw(rng);
    u.effect = spec.unit_fe_sd * normal(rng);
  }
  std::vector<double> period_effect(static_cast<std::size_t>(spec.n_periods));
  for (auto& a : period_effect) a = spec.time_fe_sd * normal(rng);
  std::vector<double> shock(static_cast<std::size_t>(spec.group_count * spec.n_periods));
  for (auto& s : shock) s = spec.group_time_sd * normal(rng);

  std::vector<std::string> names;
  for (int k = 0; k < spec.covariates.count; ++k) names.push_back(fmt::format("x{}", k + 1));

  std::vector<PanelRow> rows;
  rows.reserve(static_cast<std::size_t>(spec.n_units) * static_cast<std::size_t>(spec.n_periods));
  for (int i = 0; i < spec.n_units; ++i) {
    const Unit& u = units[static_cast<std::size_t>(i)];
    const std::string label = fmt::format("u{:0{}}", i + 1, width_u);
    const std::string group = fmt::format("g{:0{}}", u.group + 1, width_g);
    for (int t = 1; t <= spec.n_periods; ++t) {
      PanelRow row;
      row.unit = label;
      row.time = t;
      row.adoption = u.adoption;
      row.cluster = label;
      row.group = group;
      double y = spec.base_rate + u.effect + period_effect[static_cast<std::size_t>(t - 1)] +
                 shock[static_cast<std::size_t>(u.group * spec.n_periods + t - 1)];
      for (int k = 0; k < spec.covariates.count; ++k) {
        const double x = spec.covariates.sd * normal(rng);
        row.covariates.push_back(x);
        y += spec.covariates.coefficient * x;
      }
      if (u.adoption) y += spec.effects.effect(*u.adoption, t - *u.adoption);
      y += spec.noise_sd * normal(rng);
      if (spec.binary_outcome) {
        const double p = std::clamp(y, 0.0, 1.0);
        y = uniform(rng) < p ? 1.0 : 0.0;
      }
      row.outcome = y;
      rows.push_back(std::move(row));
    }
  }

  SimulatedPanel out{PanelDataset::from_rows(names, rows), {}};
  out.truth.effects = spec.effects;
  out.truth.cohorts = out.panel.cohorts();
  out.truth.link = spec.effect_link;
  return out;
}

DgpSpec dgp_from_model(double beta, double base_rate, double scale, DgpSpec rest) {
  const double impact = scale * hotelling::delta_f(beta);
  rest.base_rate = base_rate;
  rest.effects.common[0] = impact;
  rest.effect_link = fmt::format("tau=0 effect = {} * delta_f({}) = {}", scale, beta, impact);
  return rest;
}

std::uint64_t replication_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

DgpSpec base_scenario() {
  DgpSpec spec;
  spec.n_units = 400;
  spec.n_periods = 14;
  for (int e = 4; e <= 10; ++e) spec.cohort_probs[e] = 0.1;
  spec.never_treated_prob = 0.3;
  spec.unit_fe_sd = 0.5;
  spec.time_fe_sd = 0.2;
  spec.group_time_sd = 0.05;
  spec.noise_sd = 0.2;
  spec.group_count = 40;
  return spec;
}

}  // namespace

std::vector<std::string> scenario_names() { return {"homogeneous", "heterogeneous", "anticipation", "null"}; }

DgpSpec scenario(std::string_view name) {
  DgpSpec spec = base_scenario();
  if (name == "homogeneous") {
    // Adoption-period effect 0.45 * delta_f(0) = 0.09, fading over two periods.
    spec = dgp_from_model(0.0, 0.1, 0.45, spec);
    spec.effects.common[1] = 0.06;
    spec.effects.common[2] = 0.03;
  } else if (name == "heterogeneous") {
    // Earlier cohorts respond more strongly and their effects build up.
    spec.base_rate = 0.1;
    for (int e = 4; e <= 10; ++e) {
      for (int tau = 0; tau <= 5; ++tau) {
        spec.effects.by_cohort[e][tau] = 0.09 * (1.0 + 0.5 * (10 - e)) * (1.0 + tau) / 3.0;
      }
    }
  } else if (name == "anticipation") {
    spec = dgp_from_model(0.0, 0.1, 0.45, spec);
    spec.effects.common[-2] = 0.06;
    spec.effects.common[-1] = 0.06;
    spec.effects.common[1] = 0.06;
    spec.effects.common[2] = 0.03;
  } else if (name == "null") {
    spec.base_rate = 0.1;
  } else {
    throw SchemaError(fmt::format("unknown scenario '{}'", name));
  }
  return spec;
}

}  // namespace stagger::sim
