#include "stagger/regress.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "stagger/errors.hpp"

namespace stagger {

std::optional<Eigen::Index> OlsFit::position_of(Eigen::Index column) const {
  auto it = std::lower_bound(retained.begin(), retained.end(), column);
  if (it == retained.end() || *it != column) return std::nullopt;
  return static_cast<Eigen::Index>(it - retained.begin());
}

std::optional<double> OlsFit::coefficient_of(Eigen::Index column) const {
  auto pos = position_of(column);
  if (!pos) return std::nullopt;
  return coefficients(*pos);
}

OlsFit ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double rank_tol,
           std::span<const double> reference_norms) {
  if (X.rows() != y.size()) {
    throw SchemaError(fmt::format("design has {} rows but outcome has {}", X.rows(), y.size()));
  }
  if (y.size() < 1) throw SchemaError("least squares needs at least one observation");
  if (!X.allFinite() || !y.allFinite()) throw SchemaError("non-finite value in regression input");
  if (!reference_norms.empty() && static_cast<Eigen::Index>(reference_norms.size()) != X.cols()) {
    throw SchemaError("reference norms must match the number of design columns");
  }

  const Eigen::Index n = X.rows();
  OlsFit fit;
  fit.n_obs = n;

  // In-order Gram-Schmidt with one reorthogonalization pass.
  Eigen::MatrixXd Q(n, std::min(n, X.cols()));
  Eigen::Index kept = 0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double norm = X.col(j).norm();
    if (norm == 0.0 || kept == n) {
      fit.dropped.push_back(j);
      continue;
    }
    Eigen::VectorXd v = X.col(j);
    for (int pass = 0; pass < 2 && kept > 0; ++pass) {
      v.noalias() -= Q.leftCols(kept) * (Q.leftCols(kept).transpose() * v);
    }
    const double rest = v.norm();
    const double scale = reference_norms.empty() ? norm : std::max(norm, reference_norms[j]);
    if (rest <= rank_tol * scale) {
      fit.dropped.push_back(j);
      continue;
    }
    Q.col(kept++) = v / rest;
    fit.retained.push_back(j);
  }
  if (fit.retained.empty()) throw EstimationError("every design column is zero or collinear");
  fit.rank = kept;

  Eigen::MatrixXd Xr(n, kept);
  for (Eigen::Index k = 0; k < kept; ++k) Xr.col(k) = X.col(fit.retained[k]);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Xr);
  fit.coefficients = qr.solve(y);
  fit.residuals = y - Xr * fit.coefficients;

  const Eigen::MatrixXd R = qr.matrixQR().topRows(kept).triangularView<Eigen::Upper>();
  Eigen::MatrixXd r_inv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(kept, kept));
  fit.xtx_inverse = r_inv * r_inv.transpose();
  return fit;
}

Clustering Clustering::from_codes(std::span<const int> raw) {
  std::map<int, int> index;
  for (int c : raw) index.emplace(c, 0);
  int next = 0;
  for (auto& [c, code] : index) code = next++;
  Clustering out;
  out.codes.reserve(raw.size());
  for (int c : raw) out.codes.push_back(index.at(c));
  out.n_levels = next;
  return out;
}

Clustering Clustering::declared(std::vector<int> codes, int n_levels) {
  Clustering out{std::move(codes), n_levels};
  out.validate();
  return out;
}

void Clustering::validate() const {
  std::vector<int> count(static_cast<std::size_t>(std::max(n_levels, 0)), 0);
  for (int c : codes) {
    if (c < 0 || c >= n_levels) throw SchemaError(fmt::format("cluster code {} out of range", c));
    ++count[c];
  }
  for (int g = 0; g < n_levels; ++g) {
    if (count[g] == 0) throw SchemaError(fmt::format("cluster {} has no rows", g));
  }
}

Eigen::VectorXd ClusterVcov::standard_errors() const {
  return matrix.diagonal().cwiseMax(0.0).cwiseSqrt();
}

Eigen::MatrixXd coefficient_influence(const OlsFit& fit, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Xr(X.rows(), fit.rank);
  for (Eigen::Index k = 0; k < fit.rank; ++k) Xr.col(k) = X.col(fit.retained[k]);
  Eigen::MatrixXd inf = Xr * fit.xtx_inverse;
  return inf.array().colwise() * fit.residuals.array();
}

Eigen::MatrixXd cluster_scores(const Eigen::MatrixXd& influence, const Clustering& clusters) {
  if (static_cast<Eigen::Index>(clusters.codes.size()) != influence.rows()) {
    throw SchemaError(fmt::format("{} cluster labels for {} rows", clusters.codes.size(),
                                  influence.rows()));
  }
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(clusters.n_levels, influence.cols());
  for (Eigen::Index r = 0; r < influence.rows(); ++r) {
    scores.row(clusters.codes[static_cast<std::size_t>(r)]) += influence.row(r);
  }
  return scores;
}

ClusterVcov cluster_vcov(const OlsFit& fit, const Eigen::MatrixXd& X, const Clustering& clusters,
                         SmallSampleCorrection correction) {
  if (static_cast<Eigen::Index>(clusters.codes.size()) != X.rows() || X.rows() != fit.n_obs) {
    throw SchemaError(fmt::format("{} cluster labels for {} rows", clusters.codes.size(), X.rows()));
  }
  clusters.validate();
  if (clusters.n_levels < 2) {
    throw EstimationError("cluster-robust variance needs at least two clusters");
  }

  const Eigen::MatrixXd scores = cluster_scores(coefficient_influence(fit, X), clusters);
  ClusterVcov out;
  out.n_clusters = clusters.n_levels;
  const double G = clusters.n_levels;
  const double N = static_cast<double>(fit.n_obs);
  const double k = static_cast<double>(fit.rank);
  if (correction == SmallSampleCorrection::StataLike) {
    if (N <= k) throw EstimationError("stata-like correction needs more observations than regressors");
    out.small_sample_factor = G / (G - 1.0) * (N - 1.0) / (N - k);
  }
  Eigen::MatrixXd v = out.small_sample_factor * (scores.transpose() * scores);
  out.matrix = 0.5 * (v + v.transpose());
  return out;
}

double critical_value(double level, int df, bool normal) {
  if (!(level > 0.0 && level < 1.0)) throw SchemaError("confidence level must lie in (0, 1)");
  const double p = 0.5 + level / 2.0;
  if (normal) return boost::math::quantile(boost::math::normal_distribution<>(), p);
  if (df < 1) throw EstimationError("t critical value needs at least one degree of freedom");
  return boost::math::quantile(boost::math::students_t_distribution<>(df), p);
}

double two_sided_p(double t_stat, int df, bool normal) {
  if (!std::isfinite(t_stat)) return 0.0;
  const double a = std::abs(t_stat);
  if (normal) return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<>(), a));
  if (df < 1) throw EstimationError("t p-value needs at least one degree of freedom");
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<>(df), a));
}

}  // namespace stagger
