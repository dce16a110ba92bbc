#include "stagger/demean.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "stagger/errors.hpp"

namespace stagger {

std::string to_string(FeFactor f) {
  switch (f) {
    case FeFactor::Unit: return "unit";
    case FeFactor::Time: return "time";
    case FeFactor::GroupTime: return "group_time";
  }
  return "?";
}

std::size_t FeStructure::n_rows() const {
  if (!levels.empty()) return levels.front().size();
  return trend_unit.size();
}

std::string FeStructure::describe() const {
  std::vector<std::string> parts;
  for (std::size_t k = 0; k < names.size(); ++k) {
    parts.push_back(fmt::format("{} ({} levels)", names[k], level_counts[k]));
  }
  if (unit_linear_trends) parts.push_back(fmt::format("unit trends ({} units)", n_trend_units));
  return fmt::format("{}", fmt::join(parts, ", "));
}

FeStructure FeStructure::resolve(const PanelDataset& panel, const FixedEffectSpec& spec) {
  FeStructure fe;
  const std::size_t n = panel.n_rows();
  const auto units = panel.unit_codes();
  const auto times = panel.times();

  for (FeFactor f : spec.dimensions) {
    std::vector<int> codes(n);
    int count = 0;
    switch (f) {
      case FeFactor::Unit:
        std::copy(units.begin(), units.end(), codes.begin());
        count = static_cast<int>(panel.n_units());
        break;
      case FeFactor::Time: {
        std::map<int, int> index;
        for (int t : times) index.emplace(t, 0);
        for (auto& [t, c] : index) c = count++;
        for (std::size_t r = 0; r < n; ++r) codes[r] = index.at(times[r]);
        break;
      }
      case FeFactor::GroupTime: {
        if (!panel.has_groups()) {
          throw SchemaError("group x time fixed effects requested but the panel has no group column");
        }
        const auto groups = panel.group_codes();
        std::map<std::pair<int, int>, int> index;
        for (std::size_t r = 0; r < n; ++r) index.emplace(std::pair{groups[r], times[r]}, 0);
        for (auto& [key, c] : index) c = count++;
        for (std::size_t r = 0; r < n; ++r) codes[r] = index.at({groups[r], times[r]});
        break;
      }
    }
    fe.names.push_back(to_string(f));
    fe.levels.push_back(std::move(codes));
    fe.level_counts.push_back(count);
  }

  if (spec.unit_linear_trends) {
    fe.unit_linear_trends = true;
    fe.trend_unit.assign(units.begin(), units.end());
    fe.trend_time.resize(n);
    for (std::size_t r = 0; r < n; ++r) fe.trend_time[r] = static_cast<double>(times[r]);
    fe.n_trend_units = static_cast<int>(panel.n_units());
  }
  return fe;
}

namespace {

// Per-unit pieces of the projection onto span{1, t}.
struct TrendBasis {
  std::vector<double> count, mean_t, sxx;
};

TrendBasis trend_basis(const FeStructure& fe) {
  TrendBasis b;
  const auto u = static_cast<std::size_t>(fe.n_trend_units);
  b.count.assign(u, 0.0);
  b.mean_t.assign(u, 0.0);
  b.sxx.assign(u, 0.0);
  for (std::size_t r = 0; r < fe.trend_unit.size(); ++r) {
    b.count[fe.trend_unit[r]] += 1.0;
    b.mean_t[fe.trend_unit[r]] += fe.trend_time[r];
  }
  for (std::size_t k = 0; k < u; ++k) {
    if (b.count[k] > 0) b.mean_t[k] /= b.count[k];
  }
  for (std::size_t r = 0; r < fe.trend_unit.size(); ++r) {
    const double d = fe.trend_time[r] - b.mean_t[fe.trend_unit[r]];
    b.sxx[fe.trend_unit[r]] += d * d;
  }
  return b;
}

class Projector {
 public:
  Projector(const FeStructure& fe) : fe_(fe) {
    counts_.resize(fe.levels.size());
    for (std::size_t k = 0; k < fe.levels.size(); ++k) {
      counts_[k].assign(static_cast<std::size_t>(fe.level_counts[k]), 0.0);
      for (int code : fe.levels[k]) counts_[k][code] += 1.0;
      for (std::size_t level = 0; level < counts_[k].size(); ++level) {
        if (counts_[k][level] == 0.0) {
          throw SchemaError(fmt::format("fixed effect '{}' has an empty level {}", fe.names[k], level));
        }
      }
    }
    if (fe.unit_linear_trends) trend_ = trend_basis(fe);
    sums_.resize(fe.levels.size());
    for (std::size_t k = 0; k < fe.levels.size(); ++k) sums_[k].resize(counts_[k].size());
  }

  std::size_t n_projections() const {
    return fe_.levels.size() + (fe_.unit_linear_trends ? 1 : 0);
  }

  void sweep(double* x, std::size_t n) {
    for (std::size_t k = 0; k < fe_.levels.size(); ++k) {
      auto& s = sums_[k];
      std::fill(s.begin(), s.end(), 0.0);
      const auto& codes = fe_.levels[k];
      for (std::size_t r = 0; r < n; ++r) s[codes[r]] += x[r];
      for (std::size_t level = 0; level < s.size(); ++level) s[level] /= counts_[k][level];
      for (std::size_t r = 0; r < n; ++r) x[r] -= s[codes[r]];
    }
    if (fe_.unit_linear_trends) project_trends(x, n);
  }

  std::vector<std::size_t> singleton_rows() const {
    std::vector<bool> flag(fe_.n_rows(), false);
    for (std::size_t k = 0; k < fe_.levels.size(); ++k) {
      for (std::size_t r = 0; r < flag.size(); ++r) {
        if (counts_[k][fe_.levels[k][r]] == 1.0) flag[r] = true;
      }
    }
    if (fe_.unit_linear_trends) {
      for (std::size_t r = 0; r < flag.size(); ++r) {
        if (trend_.count[fe_.trend_unit[r]] <= 2.0) flag[r] = true;
      }
    }
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < flag.size(); ++r) {
      if (flag[r]) out.push_back(r);
    }
    return out;
  }

 private:
  void project_trends(double* x, std::size_t n) {
    const auto units = static_cast<std::size_t>(fe_.n_trend_units);
    std::vector<double> mean(units, 0.0), cross(units, 0.0);
    for (std::size_t r = 0; r < n; ++r) mean[fe_.trend_unit[r]] += x[r];
    for (std::size_t u = 0; u < units; ++u) {
      if (trend_.count[u] > 0) mean[u] /= trend_.count[u];
    }
    for (std::size_t r = 0; r < n; ++r) {
      const int u = fe_.trend_unit[r];
      cross[u] += (fe_.trend_time[r] - trend_.mean_t[u]) * x[r];
    }
    for (std::size_t r = 0; r < n; ++r) {
      const int u = fe_.trend_unit[r];
      const double dt = fe_.trend_time[r] - trend_.mean_t[u];
      const double slope = trend_.sxx[u] > 0.0 ? cross[u] / trend_.sxx[u] : 0.0;
      x[r] -= mean[u] + slope * dt;
    }
  }

  const FeStructure& fe_;
  std::vector<std::vector<double>> counts_;
  std::vector<std::vector<double>> sums_;
  TrendBasis trend_;
};

}  // namespace

DemeanResult demean(const Eigen::MatrixXd& columns, const FeStructure& fe,
                    const DemeanOptions& options) {
  if (!(options.tol > 0.0)) throw SchemaError("demeaning tolerance must be positive");
  if (options.max_iter < 1) throw SchemaError("max_iter must be at least 1");
  const auto n = static_cast<std::size_t>(columns.rows());
  if ((!fe.levels.empty() || fe.unit_linear_trends) && fe.n_rows() != n) {
    throw SchemaError(fmt::format("fixed effects cover {} rows, matrix has {}", fe.n_rows(), n));
  }

  DemeanResult out;
  out.residuals = columns;
  Projector projector(fe);
  if (projector.n_projections() == 0) return out;

  std::vector<double> previous(n);
  for (Eigen::Index c = 0; c < columns.cols(); ++c) {
    double* x = out.residuals.col(c).data();
    int sweeps = 0;
    if (projector.n_projections() == 1) {
      projector.sweep(x, n);
      sweeps = 1;
    } else {
      bool converged = false;
      while (sweeps < options.max_iter) {
        std::copy(x, x + n, previous.begin());
        projector.sweep(x, n);
        ++sweeps;
        double change = 0.0;
        for (std::size_t r = 0; r < n; ++r) change = std::max(change, std::abs(x[r] - previous[r]));
        if (change < options.tol) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        throw ConvergenceError(fmt::format(
            "demeaning did not converge in {} sweeps (column {}; fixed effects: {})",
            options.max_iter, c, fe.describe()));
      }
    }
    out.iterations = std::max(out.iterations, sweeps);
  }

  out.singleton_rows = projector.singleton_rows();
  for (std::size_t r : out.singleton_rows) out.residuals.row(static_cast<Eigen::Index>(r)).setZero();
  return out;
}

}  // namespace stagger
