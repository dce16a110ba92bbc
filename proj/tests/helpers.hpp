#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stagger/panel.hpp"

namespace testutil {

inline stagger::PanelRow row(std::string unit, int t, double y, std::optional<int> adoption,
                             std::optional<std::string> group = std::nullopt) {
  stagger::PanelRow r;
  r.cluster = unit;
  r.unit = std::move(unit);
  r.time = t;
  r.outcome = y;
  r.adoption = adoption;
  r.group = std::move(group);
  return r;
}

inline stagger::PanelDataset panel(const std::vector<stagger::PanelRow>& rows) {
  return stagger::PanelDataset::from_rows({}, rows);
}

// Residual-maker of a dense regressor matrix: I - Z (Z'Z)^+ Z'.
inline Eigen::MatrixXd annihilator(const Eigen::MatrixXd& z) {
  const Eigen::Index n = z.rows();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(z.transpose() * z);
  return Eigen::MatrixXd::Identity(n, n) - z * cod.pseudoInverse() * z.transpose();
}

// Dummy matrix of integer codes (one column per level).
inline Eigen::MatrixXd dummies(const std::vector<int>& codes, int levels) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(codes.size()), levels);
  for (std::size_t i = 0; i < codes.size(); ++i) d(static_cast<Eigen::Index>(i), codes[i]) = 1.0;
  return d;
}

}  // namespace testutil
