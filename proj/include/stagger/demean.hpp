#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stagger/panel.hpp"

namespace stagger {

enum class FeFactor { Unit, Time, GroupTime };

std::string to_string(FeFactor f);

struct FixedEffectSpec {
  std::vector<FeFactor> dimensions;
  bool unit_linear_trends = false;

  static FixedEffectSpec two_way() { return {{FeFactor::Unit, FeFactor::Time}, false}; }
  // Unit, time and group x time effects.
  static FixedEffectSpec baseline() {
    return {{FeFactor::Unit, FeFactor::Time, FeFactor::GroupTime}, false};
  }
};

// A FixedEffectSpec resolved against concrete rows: one level code per row
// per factor, plus per-row unit codes and times when trends are requested.
struct FeStructure {
  std::vector<std::string> names;
  std::vector<std::vector<int>> levels;  // [factor][row]
  std::vector<int> level_counts;         // [factor]
  bool unit_linear_trends = false;
  std::vector<int> trend_unit;           // [row], only with trends
  std::vector<double> trend_time;        // [row], only with trends
  int n_trend_units = 0;

  std::size_t n_rows() const;
  std::string describe() const;

  // Throws SchemaError when a group x time factor is requested on a panel
  // without groups.
  static FeStructure resolve(const PanelDataset& panel, const FixedEffectSpec& spec);
};

struct DemeanOptions {
  double tol = 1e-8;
  int max_iter = 10000;
};

struct DemeanResult {
  Eigen::MatrixXd residuals;
  int iterations = 0;  // sweeps used by the slowest column
  // Rows that sit alone in some fixed-effect level (or in a trend unit with
  // at most two periods). They are residualized to exactly zero.
  std::vector<std::size_t> singleton_rows;
};

// Residualizes every column against all fixed effects by alternating
// projections. A single projection (one factor, no trends) is exact and
// returns after one sweep. Otherwise sweeps repeat until the largest change
// of any entry within a sweep is below tol.
//
// Throws SchemaError for tol <= 0, row-count mismatch or a declared level
// without rows, and ConvergenceError after max_iter sweeps.
DemeanResult demean(const Eigen::MatrixXd& columns, const FeStructure& fe,
                    const DemeanOptions& options = {});

}  // namespace stagger
