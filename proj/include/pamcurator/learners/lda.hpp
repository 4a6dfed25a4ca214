#pragma once

#include <vector>

#include "pamcurator/learners/linear_model.hpp"

namespace pam::learners {

inline constexpr double kLdaJitter = 1e-6;

/// Two-class Fisher discriminant: w = S^-1 (mu1 - mu0) with the pooled
/// within-class covariance S (plus jitter on the diagonal), threshold at the
/// projected midpoint of the class means. The score w.x + b is the log-odds
/// under equal priors and shared Gaussian covariance.
inline LinearModel train_lda(const Matrix& X, const std::vector<int>& y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ArgumentError("train_lda: X and labels differ in length");
  const Eigen::Index d = X.cols();
  Vector mu[2] = {Vector::Zero(d), Vector::Zero(d)};
  double n[2] = {0, 0};
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int c = y[static_cast<std::size_t>(i)];
    if (c != 0 && c != 1) throw ArgumentError("train_lda: labels must be 0 or 1");
    mu[c] += X.row(i).transpose();
    n[c] += 1;
  }
  if (n[0] < 2 || n[1] < 2) throw DataError("train_lda: need at least two samples of each class");
  for (int c = 0; c < 2; ++c) mu[c] /= n[c];
  Matrix S = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector r = X.row(i).transpose() - mu[y[static_cast<std::size_t>(i)]];
    S.noalias() += r * r.transpose();
  }
  S /= (n[0] + n[1] - 2.0);
  S.diagonal().array() += kLdaJitter;
  const Vector delta = mu[1] - mu[0];
  if (delta.norm() <= 1e-12 * (1.0 + mu[0].norm())) throw DataError("train_lda: class means are identical");
  Eigen::LDLT<Matrix> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-15)
    throw DataError("train_lda: pooled covariance is singular after jitter");
  const Vector w = ldlt.solve(delta);
  if (!w.allFinite()) throw DataError("train_lda: pooled covariance is singular after jitter");
  LinearModel m;
  m.model_type = "lda";
  m.feature_kind = features::FeatureKind::lda9;
  m.weights = w.transpose();
  m.bias = {-0.5 * w.dot(mu[0] + mu[1])};
  return m;
}

}  // namespace pam::learners
