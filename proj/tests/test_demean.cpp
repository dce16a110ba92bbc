#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "stagger/demean.hpp"
#include "stagger/errors.hpp"

using namespace stagger;
using testutil::row;

namespace {

FeStructure two_factor(const std::vector<int>& a, int na, const std::vector<int>& b, int nb) {
  FeStructure fe;
  fe.names = {"a", "b"};
  fe.levels = {a, b};
  fe.level_counts = {na, nb};
  return fe;
}

PanelDataset grid_panel(int units, int periods, bool groups = false) {
  std::vector<PanelRow> rows;
  for (int u = 0; u < units; ++u) {
    for (int t = 1; t <= periods; ++t) {
      rows.push_back(row("u" + std::to_string(u), t, 0.0, std::nullopt,
                         groups ? std::optional<std::string>("g" + std::to_string(u % 2)) : std::nullopt));
    }
  }
  return testutil::panel(rows);
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n01(gen);
  }
  return m;
}

}  // namespace

TEST_CASE("one factor subtracts level means in a single sweep") {
  FeStructure fe;
  fe.names = {"unit"};
  fe.levels = {{0, 0, 1, 1, 1}};
  fe.level_counts = {2};
  Eigen::MatrixXd x(5, 1);
  x << 1, 3, 2, 4, 9;
  auto r = demean(x, fe);
  CHECK(r.iterations == 1);
  Eigen::VectorXd expected(5);
  expected << -1, 1, -3, -1, 4;
  CHECK((r.residuals.col(0) - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("columns constant within levels are annihilated") {
  auto p = grid_panel(4, 5);
  auto fe = FeStructure::resolve(p, FixedEffectSpec::two_way());
  Eigen::MatrixXd x(p.n_rows(), 1);
  for (std::size_t r = 0; r < p.n_rows(); ++r) x(static_cast<Eigen::Index>(r), 0) = 3.0 * p.unit_codes()[r];
  auto r = demean(x, fe);
  CHECK(r.residuals.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("two-way residuals match the dense annihilator on a 4x4 panel") {
  auto p = grid_panel(4, 4);
  auto fe = FeStructure::resolve(p, FixedEffectSpec::two_way());
  // drop one observation so the panel is unbalanced and the projection is not one sweep
  auto q = p.filter([](std::size_t r) { return r != 5; });
  auto feq = FeStructure::resolve(q, FixedEffectSpec::two_way());
  for (const auto* pair : {&fe, &feq}) {
    const auto n = static_cast<Eigen::Index>(pair->n_rows());
    Eigen::MatrixXd z(n, pair->level_counts[0] + pair->level_counts[1]);
    z << testutil::dummies(pair->levels[0], pair->level_counts[0]),
        testutil::dummies(pair->levels[1], pair->level_counts[1]);
    const Eigen::MatrixXd x = random_matrix(n, 3, 7);
    const Eigen::MatrixXd oracle = testutil::annihilator(z) * x;
    DemeanOptions o;
    o.tol = 1e-13;
    auto r = demean(x, *pair, o);
    CHECK((r.residuals - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("unit, time and group-time effects with trends match the dense annihilator") {
  auto p = grid_panel(6, 5, true);
  FixedEffectSpec spec = FixedEffectSpec::baseline();
  spec.unit_linear_trends = true;
  auto fe = FeStructure::resolve(p, spec);
  const auto n = static_cast<Eigen::Index>(p.n_rows());
  Eigen::MatrixXd z(n, 6 + 5 + 10 + 6);
  Eigen::MatrixXd trend = Eigen::MatrixXd::Zero(n, 6);
  for (Eigen::Index r = 0; r < n; ++r) trend(r, fe.trend_unit[r]) = fe.trend_time[r];
  z << testutil::dummies(fe.levels[0], fe.level_counts[0]), testutil::dummies(fe.levels[1], fe.level_counts[1]),
      testutil::dummies(fe.levels[2], fe.level_counts[2]), trend;
  const Eigen::MatrixXd x = random_matrix(n, 2, 11);
  DemeanOptions o;
  o.tol = 1e-13;
  auto r = demean(x, fe, o);
  CHECK((r.residuals - testutil::annihilator(z) * x).cwiseAbs().maxCoeff() < 1e-9);

  // orthogonal to each unit's {1, t}
  for (int u = 0; u < 6; ++u) {
    double s1 = 0.0, st = 0.0;
    for (Eigen::Index row = 0; row < n; ++row) {
      if (fe.trend_unit[row] != u) continue;
      s1 += r.residuals(row, 0);
      st += r.residuals(row, 0) * fe.trend_time[row];
    }
    CHECK(std::abs(s1) < 1e-9);
    CHECK(std::abs(st) < 1e-9);
  }
}

TEST_CASE("demeaning is idempotent and annihilates added level effects") {
  auto p = grid_panel(7, 6, true);
  auto fe = FeStructure::resolve(p, FixedEffectSpec::baseline());
  const auto n = static_cast<Eigen::Index>(p.n_rows());
  const Eigen::MatrixXd x = random_matrix(n, 2, 3);
  DemeanOptions o;
  auto once = demean(x, fe, o).residuals;
  auto twice = demean(once, fe, o).residuals;
  CHECK((once - twice).cwiseAbs().maxCoeff() < 10 * o.tol);

  Eigen::MatrixXd shifted = x;
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> unit_shift(p.n_units()), time_shift(10);
  for (auto& s : unit_shift) s = u(gen);
  for (auto& s : time_shift) s = u(gen);
  for (Eigen::Index r = 0; r < n; ++r) {
    shifted(r, 0) += unit_shift[p.unit_codes()[r]] + time_shift[p.times()[r]];
  }
  auto after = demean(shifted, fe, o).residuals;
  CHECK((after - once).cwiseAbs().maxCoeff() < 10 * o.tol);
}

TEST_CASE("singleton levels are residualized to zero and reported") {
  auto fe = two_factor({0, 0, 1, 1, 2}, 3, {0, 1, 0, 1, 0}, 2);
  Eigen::MatrixXd x(5, 1);
  x << 1, 2, 3, 5, 8;
  auto r = demean(x, fe);
  CHECK(r.residuals(4, 0) == 0.0);
  REQUIRE(r.singleton_rows.size() == 1);
  CHECK(r.singleton_rows[0] == 4);
}

TEST_CASE("demeaning errors") {
  auto fe = two_factor({0, 0, 1, 1}, 3, {0, 1, 0, 1}, 2);  // level 2 of factor a is empty
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 1);
  CHECK_THROWS_AS(demean(x, fe), SchemaError);
  auto ok = two_factor({0, 0, 1, 1}, 2, {0, 1, 0, 1}, 2);
  CHECK_THROWS_AS(demean(Eigen::MatrixXd::Ones(3, 1), ok), SchemaError);
  DemeanOptions bad;
  bad.tol = 0.0;
  CHECK_THROWS_AS(demean(x, ok, bad), SchemaError);

  // an unbalanced two-way structure cannot converge in one sweep
  auto p = grid_panel(5, 5).filter([](std::size_t r) { return r % 7 != 3; });
  auto slow = FeStructure::resolve(p, FixedEffectSpec::two_way());
  DemeanOptions tight;
  tight.tol = 1e-15;
  tight.max_iter = 1;
  CHECK_THROWS_AS(demean(random_matrix(static_cast<Eigen::Index>(p.n_rows()), 1, 2), slow, tight),
                  ConvergenceError);
  CHECK_THROWS_AS(FeStructure::resolve(p, FixedEffectSpec::baseline()), SchemaError);
}
