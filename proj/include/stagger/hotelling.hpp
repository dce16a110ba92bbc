#pragma once

#include <optional>
#include <vector>

namespace stagger::hotelling {

// Church competition on the strictness line [0, 1]. The armed group sits at
// 0, church A at a and (with competition) church B at b >= a. beta is the
// share of recruited members' contributions that A loses to violence.
//
// The circle-space variant of the model would slot in here as a second
// payoff/best-response family; it is not implemented.

enum class Scenario { Monopoly, Duopoly };

struct EquilibriumResult {
  Scenario scenario = Scenario::Monopoly;
  double a = 0.0;
  std::optional<double> b;        // duopoly only
  double f = 0.0;                 // armed-group share, a / 2
  std::optional<double> delta_f;  // f^m - f, duopoly only
  int iterations = 0;             // fixed_point_solve only
};

struct BestResponse {
  double a = 0.0;
  // False when a / 2 > 1/5 or a lies outside [0, 1]; the first-order
  // condition behind the closed form assumed otherwise.
  bool within_region = true;
};

struct Payoffs {
  double church_a = 0.0;
  std::optional<double> church_b;
};

// Monopoly strictness that maximizes A's contributions: a = 2/5, f = 1/5.
EquilibriumResult monopoly_equilibrium();

// A's best response to b under recruitment cost beta.
// Throws DomainError for b outside [0, 1] or beta outside [0, 1).
BestResponse best_response_a(double b, double beta);

// B's best response to a: (a + 2) / 5. Throws DomainError for a outside [0, 1].
double best_response_b(double a);

// Closed-form duopoly equilibrium. Throws DomainError unless 0 <= beta <= 9/20.
EquilibriumResult duopoly_equilibrium(double beta);

// f^m - f^c = (9 - 20 beta) / (5 (9 + 15 beta)). Throws DomainError unless
// 0 <= beta <= 9/20.
double delta_f(double beta);

// Same formula without the region check, for continuation past the threshold.
double delta_f_unchecked(double beta);

// Duopoly armed-group share 7 beta / (9 + 15 beta), no region check.
double duopoly_share_unchecked(double beta);

// The beta at which competition stops reducing armed-group support: 9/20.
constexpr double violence_threshold() { return 9.0 / 20.0; }

inline constexpr double kMonopolyShare = 1.0 / 5.0;

// Contributions to each church in closed form. Without b this is the monopoly
// objective for A. With b, A's objective charges (1 - beta) on members
// recruited from the armed group over [a/2, 1/5] when a/2 <= 1/5.
// Throws DomainError for locations outside [0, 1], b < a, or beta outside [0, 1].
Payoffs church_payoff(double a, std::optional<double> b, double beta);

// Iterates a <- best_response_a(best_response_b(a)) from a = 2/5 until the
// step is below tol. Throws ConvergenceError after max_iter steps and
// DomainError if an iterate leaves the validity region.
EquilibriumResult fixed_point_solve(double beta, double tol = 1e-12, int max_iter = 1000,
                                    std::vector<double>* trace = nullptr);

}  // namespace stagger::hotelling
