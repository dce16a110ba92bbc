#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace stagger {

// Least-squares fit over the linearly independent subset of the design.
struct OlsFit {
  Eigen::VectorXd coefficients;          // one per retained column
  std::vector<Eigen::Index> retained;    // design column indices, ascending
  std::vector<Eigen::Index> dropped;     // collinear with earlier columns
  Eigen::VectorXd residuals;
  Eigen::MatrixXd xtx_inverse;           // over retained columns
  Eigen::Index n_obs = 0;
  Eigen::Index rank = 0;

  // Coefficient of a design column, or nothing if it was dropped.
  std::optional<double> coefficient_of(Eigen::Index column) const;
  // Position of a design column among the retained ones.
  std::optional<Eigen::Index> position_of(Eigen::Index column) const;
};

// Columns are scanned left to right and a column is dropped when its
// component orthogonal to the columns kept so far has norm below
// rank_tol * (its own norm), so on ties the later-indexed column goes.
//
// With reference_norms (e.g. column norms before fixed-effect
// residualization) the residual norm is compared against those instead, so
// columns the fixed effects absorbed up to round-off are dropped too.
//
// Throws SchemaError on size mismatch, empty input or non-finite values and
// EstimationError when no column survives.
OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double rank_tol = 1e-10,
           std::span<const double> reference_norms = {});

enum class SmallSampleCorrection { None, StataLike };

// Cluster membership with codes 0..n_levels-1.
struct Clustering {
  std::vector<int> codes;
  int n_levels = 0;

  // Compresses arbitrary non-negative codes to 0..G-1 keeping their order.
  static Clustering from_codes(std::span<const int> raw);
  // Uses the codes as given; validate() rejects declared levels with no rows.
  static Clustering declared(std::vector<int> codes, int n_levels);
  void validate() const;
};

struct ClusterVcov {
  Eigen::MatrixXd matrix;  // over OlsFit::retained
  int n_clusters = 0;
  double small_sample_factor = 1.0;

  Eigen::VectorXd standard_errors() const;
};

// c * (X'X)^-1 (sum_g X_g' u_g u_g' X_g) (X'X)^-1 over retained columns, with
// c = 1 (None) or G/(G-1) * (N-1)/(N-k) (StataLike).
//
// Throws EstimationError with fewer than two clusters and SchemaError for a
// cluster with no rows or a label vector of the wrong length.
ClusterVcov cluster_vcov(const OlsFit& fit, const Eigen::MatrixXd& X, const Clustering& clusters,
                         SmallSampleCorrection correction = SmallSampleCorrection::StataLike);

// Per-row contribution to the coefficient error: row i is
// (X'X)^-1 x_i u_i over retained columns (an n x rank matrix).
Eigen::MatrixXd coefficient_influence(const OlsFit& fit, const Eigen::MatrixXd& X);

// Sum of per-row influence within each cluster (G x k), in cluster code order.
Eigen::MatrixXd cluster_scores(const Eigen::MatrixXd& influence, const Clustering& clusters);

// Two-sided critical value at confidence level: Student-t with df degrees of
// freedom, or standard normal when normal is set.
double critical_value(double level, int df, bool normal = false);

// Two-sided p-value of a t statistic under the same reference distribution.
double two_sided_p(double t_stat, int df, bool normal = false);

}  // namespace stagger
