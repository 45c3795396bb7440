#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "gcfa/error.hpp"

namespace gcfa {

/// Correlation matrix with factor structure C = L L' + diag(u), where L holds
/// scaled loadings with row norms below one.
struct CorrelationMatrix {
  Eigen::MatrixXd scaled_loadings;
  Eigen::VectorXd uniqueness;
  Eigen::MatrixXd values;
};

struct ScaledLoadings {
  Eigen::MatrixXd scaled;
  Eigen::VectorXd uniqueness;
};

/// lambda~_jh = lambda_jh / sqrt(1 + |lambda_j|^2), u_j = 1 / (1 + |lambda_j|^2).
inline ScaledLoadings scale_loadings(const Eigen::MatrixXd& loadings) {
  ScaledLoadings out{loadings, Eigen::VectorXd(loadings.rows())};
  for (Eigen::Index j = 0; j < loadings.rows(); ++j) {
    const double total = 1.0 + loadings.row(j).squaredNorm();
    out.scaled.row(j) /= std::sqrt(total);
    out.uniqueness(j) = 1.0 / total;
  }
  return out;
}

// Scaling with per-row noise variances, for models where sigma_j != 1.
inline ScaledLoadings scale_loadings(const Eigen::MatrixXd& loadings, const Eigen::VectorXd& noise_variance) {
  ScaledLoadings out{loadings, Eigen::VectorXd(loadings.rows())};
  for (Eigen::Index j = 0; j < loadings.rows(); ++j) {
    const double total = noise_variance(j) + loadings.row(j).squaredNorm();
    out.scaled.row(j) /= std::sqrt(total);
    out.uniqueness(j) = noise_variance(j) / total;
  }
  return out;
}

inline CorrelationMatrix correlation_from_loadings(const Eigen::MatrixXd& scaled, const Eigen::VectorXd& uniqueness) {
  Eigen::MatrixXd c = scaled * scaled.transpose();
  c.diagonal() += uniqueness;
  return {scaled, uniqueness, std::move(c)};
}

/// (L L' + U)^-1 through the Woodbury identity; only a k x k system is factored.
/// Zeros in it mean conditional independence of the observed variables only
/// when every margin is continuous.
inline Eigen::MatrixXd precision_woodbury(const Eigen::MatrixXd& scaled, const Eigen::VectorXd& uniqueness) {
  if ((uniqueness.array() <= 0.0).any()) throw input_error("precision requires every uniqueness > 0");
  const Eigen::VectorXd inv_u = uniqueness.cwiseInverse();
  const Eigen::MatrixXd ul = inv_u.asDiagonal() * scaled;  // U^-1 L
  Eigen::MatrixXd inner = scaled.transpose() * ul;
  inner.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(inner);
  if (llt.info() != Eigen::Success) throw numeric_error("Woodbury inner matrix is not positive definite");
  Eigen::MatrixXd r = -ul * llt.solve(ul.transpose());
  r.diagonal() += inv_u;
  return r;
}

}  // namespace gcfa
