#include "stagger/hotelling.hpp"

#include <cmath>

#include <fmt/format.h>

#include "stagger/errors.hpp"

namespace stagger::hotelling {

namespace {

constexpr double kRegionSlack = 1e-12;

void check_unit(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError(fmt::format("{} = {} is outside [0, 1]", name, x));
}

void check_region(double beta) {
  if (!(beta >= 0.0)) throw DomainError(fmt::format("beta = {} is negative", beta));
  if (beta > violence_threshold()) {
    throw DomainError(fmt::format(
        "beta = {} exceeds the violence threshold 9/20; the duopoly closed forms do not apply",
        beta));
  }
}

// Integral of 1 - (a - x) over [lo, hi] (members left of a).
double left_mass(double a, double lo, double hi) {
  return (1.0 - a) * (hi - lo) + 0.5 * (hi * hi - lo * lo);
}

// Integral of 1 - (x - a) over [lo, hi] (members right of a).
double right_mass(double a, double lo, double hi) {
  return (1.0 + a) * (hi - lo) - 0.5 * (hi * hi - lo * lo);
}

}  // namespace

EquilibriumResult monopoly_equilibrium() {
  EquilibriumResult r;
  r.scenario = Scenario::Monopoly;
  r.a = 2.0 / 5.0;
  r.f = kMonopolyShare;
  return r;
}

BestResponse best_response_a(double b, double beta) {
  check_unit(b, "b");
  if (!(beta >= 0.0 && beta < 1.0)) throw DomainError(fmt::format("beta = {} is outside [0, 1)", beta));
  const double denom = 5.0 - 3.0 * (1.0 - beta);
  BestResponse r;
  r.a = b / denom + (12.0 - 14.0 * (1.0 - beta)) / (5.0 * denom);
  r.within_region = r.a >= -kRegionSlack && r.a <= 1.0 && r.a / 2.0 <= kMonopolyShare + kRegionSlack;
  return r;
}

double best_response_b(double a) {
  check_unit(a, "a");
  return (a + 2.0) / 5.0;
}

double duopoly_share_unchecked(double beta) { return 7.0 * beta / (9.0 + 15.0 * beta); }

double delta_f_unchecked(double beta) { return (9.0 - 20.0 * beta) / (5.0 * (9.0 + 15.0 * beta)); }

double delta_f(double beta) {
  check_region(beta);
  return delta_f_unchecked(beta);
}

EquilibriumResult duopoly_equilibrium(double beta) {
  check_region(beta);
  EquilibriumResult r;
  r.scenario = Scenario::Duopoly;
  r.a = 14.0 * beta / (9.0 + 15.0 * beta);
  r.b = (r.a + 2.0) / 5.0;
  r.f = duopoly_share_unchecked(beta);
  r.delta_f = delta_f_unchecked(beta);
  return r;
}

Payoffs church_payoff(double a, std::optional<double> b, double beta) {
  check_unit(a, "a");
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError(fmt::format("beta = {} is outside [0, 1]", beta));
  Payoffs p;
  if (!b) {
    // Members on [a/2, a] and [a, 1].
    p.church_a = left_mass(a, a / 2.0, a) + right_mass(a, a, 1.0);
    return p;
  }
  check_unit(*b, "b");
  if (*b < a) throw DomainError(fmt::format("duopoly requires a <= b (a = {}, b = {})", a, *b));

  const double mid = (a + *b) / 2.0;
  if (a / 2.0 <= kMonopolyShare) {
    p.church_a = (1.0 - beta) * left_mass(a, a / 2.0, kMonopolyShare) +
                 left_mass(a, kMonopolyShare, a) + right_mass(a, a, mid);
  } else {
    p.church_a = left_mass(a, a / 2.0, a) + right_mass(a, a, mid);
  }
  // B serves [mid, b] and [b, 1].
  p.church_b = left_mass(*b, mid, *b) + right_mass(*b, *b, 1.0);
  return p;
}

EquilibriumResult fixed_point_solve(double beta, double tol, int max_iter, std::vector<double>* trace) {
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  if (!(beta >= 0.0 && beta < 1.0)) throw DomainError(fmt::format("beta = {} is outside [0, 1)", beta));
  double a = monopoly_equilibrium().a;
  if (trace) trace->assign(1, a);
  for (int k = 1; k <= max_iter; ++k) {
    const double b = best_response_b(a);
    const BestResponse next = best_response_a(b, beta);
    if (!next.within_region) {
      throw DomainError(fmt::format(
          "iterate {} left the validity region (a = {}, needs 0 <= a and a/2 <= 1/5) at beta = {}",
          k, next.a, beta));
    }
    const double step = std::abs(next.a - a);
    a = next.a;
    if (trace) trace->push_back(a);
    if (step < tol) {
      EquilibriumResult r;
      r.scenario = Scenario::Duopoly;
      r.a = a;
      r.b = best_response_b(a);
      r.f = a / 2.0;
      r.delta_f = kMonopolyShare - r.f;
      r.iterations = k;
      return r;
    }
  }
  throw ConvergenceError(fmt::format("best-response iteration did not converge in {} steps", max_iter));
}

}  // namespace stagger::hotelling
