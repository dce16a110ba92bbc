// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.
#include <fmt/format.h>

#include <nlohmann/json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stagger/errors.hpp"
#include "stagger/estimators.hpp"
#include "stagger/hotelling.hpp"
#include "stagger/io.hpp"
#include "stagger/montecarlo.hpp"
#include "stagger/regress.hpp"
#include "stagger/simgen.hpp"

using namespace stagger;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, std::string note) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "FAILED ") + std::move(note));
  }
  void info(std::string note) { notes.push_back(std::move(note)); }
};

void report(int id, const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.require(false, fmt::format("threw: {}", e.what()));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out.pass) ++g_failures;
  std::string detail;
  for (const auto& n : out.notes) detail += (detail.empty() ? "" : "; ") + n;
  fmt::print("{} [{}] {} ({:.2f}s): {}\n", out.pass ? "PASS" : "FAIL", id, name, secs, detail);
  std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Monte Carlo setup shared by the simulation criteria, identical to the
// montecarlo subcommand defaults.
sim::McConfig mc_config() {
  sim::McConfig c;
  c.design.leads = 3;
  c.design.lags = 5;
  c.design.omitted = {-1};
  c.fe = FixedEffectSpec::baseline();
  c.inference = InferenceOptions{0.90};
  c.as.inference = c.inference;
  c.tw.inference = c.inference;
  c.threads = 1;
  return c;
}

constexpr int kReps = 500;
const std::vector<sim::EstimatorKind> kAll{sim::EstimatorKind::Twfe, sim::EstimatorKind::As,
                                           sim::EstimatorKind::Tw};

struct Z {
  double worst = 0.0;
  int worst_tau = 0;
};

// Largest |bias| / MC SE over taus. A zero MC SE with zero bias counts as 0.
Z worst_z(const sim::McReport& r, int lo, int hi) {
  Z z;
  for (const auto& st : r.taus) {
    if (st.tau < lo || st.tau > hi) continue;
    const double v = st.mc_se > 0 ? std::abs(st.bias) / st.mc_se : (st.bias == 0 ? 0.0 : INFINITY);
    if (v > z.worst) z = {v, st.tau};
  }
  return z;
}

double z_at(const sim::McReport& r, int tau) {
  const auto* st = r.find(tau);
  if (!st) throw std::runtime_error(fmt::format("tau {} missing from the {} report", tau, sim::to_string(r.estimator)));
  return st->bias / st->mc_se;
}

std::string z_profile(const sim::McReport& r) {
  std::string s;
  for (const auto& st : r.taus) s += fmt::format("{}{}:{:+.2f}", s.empty() ? "" : " ", st.tau, st.bias / st.mc_se);
  return s;
}

// The homogeneous run feeds both the recovery and the coverage criteria.
const sim::McResult& homogeneous_run() {
  static const sim::McResult r = sim::monte_carlo(sim::scenario("homogeneous"), kAll, kReps, mc_config());
  return r;
}

void theory_exactness(Outcome& o) {
  using namespace hotelling;
  const auto m = monopoly_equilibrium();
  o.require(std::abs(m.a - 0.4) <= 1e-12, fmt::format("a_m = {}", m.a));
  o.require(std::abs(m.f - 0.2) <= 1e-12, fmt::format("f_m = {}", m.f));
  o.require(std::abs(violence_threshold() - 0.45) <= 1e-12, fmt::format("threshold = {}", violence_threshold()));
  o.require(std::abs(delta_f(0.45)) <= 1e-12, fmt::format("delta_f(9/20) = {}", delta_f(0.45)));
  o.require(std::abs(delta_f(0.0) - 0.2) <= 1e-12, fmt::format("delta_f(0) = {}", delta_f(0.0)));
}

void oracle_equivalence(Outcome& o) {
  using namespace hotelling;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double beta = std::min(0.45, 0.45 * k / 99.0);
    const auto it = fixed_point_solve(beta, 1e-13);
    const auto cf = duopoly_equilibrium(beta);
    worst = std::max({worst, std::abs(it.a - cf.a), std::abs(*it.b - *cf.b), std::abs(*it.delta_f - *cf.delta_f)});
  }
  o.require(worst <= 1e-10, fmt::format("max |iterated - closed form| over 100 betas = {:.2e}", worst));

  // Central differences at the closed-form equilibrium. A is evaluated on the
  // interior of [0, 9/20): beta = 0 puts a on its lower bound and beta = 9/20
  // on the kink at a = 2/5.
  const double h = 1e-6;
  double res_a = 0.0, res_b = 0.0;
  for (int k = 1; k < 100; ++k) {
    const double beta = 0.45 * k / 100.0;
    const auto eq = duopoly_equilibrium(beta);
    const double a = eq.a, b = *eq.b;
    const double da =
        (church_payoff(a + h, b, beta).church_a - church_payoff(a - h, b, beta).church_a) / (2 * h);
    const double db =
        (*church_payoff(a, b + h, beta).church_b - *church_payoff(a, b - h, beta).church_b) / (2 * h);
    res_a = std::max(res_a, std::abs(da));
    res_b = std::max(res_b, std::abs(db));
  }
  o.require(res_b < 1e-6, fmt::format("max |dV_B/db| = {:.2e}", res_b));
  o.require(res_a < 1e-6, fmt::format("max |dV_A/da| = {:.2e}", res_a));
  const double secs = elapsed_since(t0);
  o.require(secs < 5.0, fmt::format("runtime {:.3f}s", secs));
}

void monotonicity(Outcome& o) {
  using namespace hotelling;
  bool decreasing = true;
  double prev = delta_f(0.0);
  for (int k = 1; k < 100; ++k) {
    const double d = delta_f(std::min(0.45, 0.45 * k / 99.0));
    decreasing = decreasing && d < prev;
    prev = d;
  }
  o.require(decreasing, "delta_f strictly decreasing on 100-point grid");
  o.require(duopoly_equilibrium(0.44).f <= kMonopolyShare, "f_c <= f_m at 0.44");
  o.require(duopoly_equilibrium(0.45).f <= kMonopolyShare + 1e-15, "f_c <= f_m at 0.45");
  bool rejected = false;
  try {
    duopoly_equilibrium(0.46);
  } catch (const DomainError&) {
    rejected = true;
  }
  o.require(rejected, "0.46 rejected by the closed form");
  const double cont = duopoly_share_unchecked(0.46);
  o.require(cont > kMonopolyShare, fmt::format("continued f_c(0.46) = {:.6f} > 0.2", cont));
}

void regression_kernel(Outcome& o) {
  Eigen::MatrixXd X(6, 2);
  X << 1, 0, 1, 1, 1, 0, 1, 1, 1, 0, 1, 1;
  Eigen::VectorXd y(6);
  y << 0.3, 1.9, -0.2, 1.4, 0.8, 2.6;
  const std::vector<int> cl{0, 1, 2, 3, 4, 4};

  // brute-force sandwich with explicit cluster loops
  const Eigen::MatrixXd bread = (X.transpose() * X).inverse();
  const Eigen::VectorXd beta = bread * X.transpose() * y;
  const Eigen::VectorXd u = y - X * beta;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(2, 2);
  for (int c = 0; c < 5; ++c) {
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    for (int i = 0; i < 6; ++i) {
      if (cl[static_cast<std::size_t>(i)] == c) s += X.row(i).transpose() * u(i);
    }
    meat += s * s.transpose();
  }
  const double factor = 5.0 / 4.0 * 5.0 / 4.0;
  const Eigen::MatrixXd oracle = factor * bread * meat * bread;

  const auto fit = ols(X, y);
  const auto v = cluster_vcov(fit, X, Clustering::from_codes(cl), SmallSampleCorrection::StataLike);
  const double coef_err = (fit.coefficients - beta).cwiseAbs().maxCoeff();
  double se_err = 0.0;
  for (int j = 0; j < 2; ++j) se_err = std::max(se_err, std::abs(std::sqrt(v.matrix(j, j)) - std::sqrt(oracle(j, j))));
  o.require(coef_err <= 1e-10, fmt::format("coef error {:.1e}", coef_err));
  o.require(se_err <= 1e-10, fmt::format("cluster SE error {:.1e}", se_err));

  const auto panel = io::read_panel_csv(fs::path(STAGGER_TEST_DATA) / "did_2x2.csv");
  EventTimeDesign d;
  const auto t = twfe_event_study(panel, d, FixedEffectSpec::two_way());
  const auto* r0 = t.find(0);
  o.require(r0 && r0->estimate == 3.0, fmt::format("2x2 gamma_0 = {}", r0 ? r0->estimate : NAN));
}

void estimator_recovery(Outcome& o) {
  const auto spec = sim::scenario("homogeneous");
  o.info(fmt::format("{} units x {} periods, {} clusters, {} reps", spec.n_units, spec.n_periods,
                     spec.n_units, kReps));
  const auto& r = homogeneous_run();
  for (const auto& rep : r.reports) {
    const auto all = worst_z(rep, -3, 5);
    const auto leads = worst_z(rep, -3, -2);
    o.require(all.worst < 2.0 && leads.worst < 2.0,
              fmt::format("{} max |bias|/MCSE {:.2f} at tau {}", sim::to_string(rep.estimator), all.worst,
                          all.worst_tau));
  }
}

void heterogeneity(Outcome& o) {
  const auto r = sim::monte_carlo(sim::scenario("heterogeneous"), kAll, kReps, mc_config());
  const auto twfe = worst_z(r.report(sim::EstimatorKind::Twfe), -3, 5);
  o.require(twfe.worst > 3.0, fmt::format("twfe max |z| {:.2f} at tau {}", twfe.worst, twfe.worst_tau));
  for (auto k : {sim::EstimatorKind::As, sim::EstimatorKind::Tw}) {
    const auto z = worst_z(r.report(k), -3, 5);
    o.require(z.worst < 2.0, fmt::format("{} max |z| {:.2f} at tau {}", sim::to_string(k), z.worst, z.worst_tau));
  }
}

void anticipation(Outcome& o) {
  const auto r = sim::monte_carlo(sim::scenario("anticipation"), kAll, kReps, mc_config());
  const auto& tw = r.report(sim::EstimatorKind::Tw);
  const double z = z_at(tw, -2);
  o.require(std::abs(z) < 2.0, fmt::format("tw z at tau -2 = {:+.2f} (mean {:.4f}, target {:.4f})", z,
                                           tw.find(-2)->mean_estimate, tw.find(-2)->mean_target));
  const auto* as = r.report(sim::EstimatorKind::As).find(-2);
  o.info(fmt::format("as at tau -2: mean {:.4f}, true effect 0.06, z vs target {:+.2f} (biased)", as->mean_estimate,
                     as->bias / as->mc_se));
  o.info("as z profile " + z_profile(r.report(sim::EstimatorKind::As)));
}

void tw_identity(Outcome& o) {
  double worst = 0.0;
  int runs = 0;
  for (const auto& name : sim::scenario_names()) {
    for (std::uint64_t k = 0; k < 25; ++k) {
      auto spec = sim::scenario(name);
      spec.seed = sim::replication_seed(spec.seed, k);
      const auto sp = sim::generate_panel(spec);
      for (auto variant : {TwSecondStage::Pooled, TwSecondStage::PerTau}) {
        TwOptions opts;
        opts.second_stage = variant;
        const auto r = tw_split_sample(sp.panel, 3, 5, opts);
        for (std::size_t i = 0; i < r.table.rows.size(); ++i) {
          worst = std::max(worst, std::abs(r.table.rows[i].estimate - (r.theta_l[i] + r.theta_d[i])));
        }
        ++runs;
      }
    }
  }
  o.require(worst <= 1e-12, fmt::format("max |gamma - (theta_L + theta_D)| = {:.1e} over {} runs", worst, runs));

  const auto hand = tw_split_sample(io::read_panel_csv(fs::path(STAGGER_TEST_DATA) / "tw_hand.csv"), 1, 1);
  const auto* r0 = hand.table.find(0);
  o.require(r0 && std::abs(r0->estimate - 1.0) <= 1e-12, fmt::format("hand fixture tau 0 = {}", r0 ? r0->estimate : NAN));
}

void coverage(Outcome& o) {
  const auto& r = homogeneous_run();
  auto range = [](const sim::McReport& rep) {
    double lo = 1.0, hi = 0.0;
    for (const auto& st : rep.taus) {
      lo = std::min(lo, st.coverage);
      hi = std::max(hi, st.coverage);
    }
    return std::pair{lo, hi};
  };
  const auto [lo, hi] = range(r.report(sim::EstimatorKind::Twfe));
  o.require(lo >= 0.85 && hi <= 0.95, fmt::format("twfe coverage in [{:.3f}, {:.3f}]", lo, hi));
  const auto [alo, ahi] = range(r.report(sim::EstimatorKind::As));
  o.info(fmt::format("as coverage in [{:.3f}, {:.3f}]", alo, ahi));
  const auto [tlo, thi] = range(r.report(sim::EstimatorKind::Tw));
  o.info(fmt::format("tw coverage in [{:.3f}, {:.3f}] (no period effects in the split-sample model)", tlo, thi));
}

int run(const std::string& args) {
  const std::string cmd = fmt::format("\"{}\" {} > /dev/null 2>&1", STAGGER_CLI, args);
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void cli_reproducibility(Outcome& o) {
  const fs::path work = fs::temp_directory_path() / fmt::format("stagger_acceptance_{}", ::getpid());
  fs::create_directories(work);
  const fs::path data(STAGGER_TEST_DATA);

  for (const char* run_name : {"a", "b"}) {
    o.require(run(fmt::format("montecarlo --scenario heterogeneous --reps 25 --seed 11 -o \"{}\"",
                              (work / fmt::format("mc_{}", run_name)).string())) == 0,
              fmt::format("montecarlo run {}", run_name));
    o.require(run(fmt::format("simulate --seed 11 -o \"{}\"", (work / fmt::format("sim_{}.csv", run_name)).string())) == 0,
              fmt::format("simulate run {}", run_name));
  }
  const bool same = slurp(work / "mc_a.csv") == slurp(work / "mc_b.csv") &&
                    slurp(work / "mc_a.json") == slurp(work / "mc_b.json") &&
                    slurp(work / "sim_a.csv") == slurp(work / "sim_b.csv") && !slurp(work / "mc_a.csv").empty();
  o.require(same, "repeated runs byte-identical");

  o.require(run(fmt::format("estimate -i \"{}\" -o \"{}\"", (data / "did_2x2.csv").string(),
                            (work / "did").string())) == 0,
            "estimate on 2x2 fixture");
  const auto j = nlohmann::json::parse(slurp(work / "did.json"));
  const double g0 = j.at("rows").at(0).at("estimate").get<double>();
  o.require(g0 == 3.0, fmt::format("fixture gamma_0 = {}", g0));

  o.require(run(fmt::format("theory -o \"{}\"", (work / "theory.csv").string())) == 0, "theory");
  // Rows keyed by their first field, values compared at the theory tolerance.
  std::map<std::string, std::vector<std::string>> rows;
  std::istringstream theory(slurp(work / "theory.csv"));
  for (std::string line; std::getline(theory, line);) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (!f.empty()) rows[f[0]] = f;
  }
  auto near = [&](const std::string& key, std::size_t col, double want) {
    const auto it = rows.find(key);
    return it != rows.end() && col < it->second.size() && std::abs(std::stod(it->second[col]) - want) <= 1e-12;
  };
  o.require(near("0", 4, 0.2) && near("0", 3, 0.0), "theory row beta 0");
  o.require(near("0.45", 4, 0.0) && near("0.45", 1, 0.4), "theory row beta 9/20");
  o.require(near("monopoly", 1, 0.4) && near("monopoly", 3, 0.2), "theory monopoly row");
  fs::remove_all(work);
}

}  // namespace

int main() {
  report(1, "theory exactness", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    theory_exactness(o);
    const double secs = elapsed_since(t0);
    o.require(secs < 1.0, fmt::format("runtime {:.3f}s", secs));
  });
  report(2, "oracle equivalence", oracle_equivalence);
  report(3, "monotonicity", monotonicity);
  report(4, "regression kernel", regression_kernel);
  report(5, "estimator recovery (homogeneous)", estimator_recovery);
  report(6, "heterogeneity stress", heterogeneity);
  report(7, "anticipation stress", anticipation);
  report(8, "split-sample identity", tw_identity);
  report(9, "coverage", coverage);
  report(10, "cli reproducibility", cli_reproducibility);
  fmt::print("{} of 10 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
