#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "pamcurator/learners/linear_model.hpp"

namespace pam::learners {

inline constexpr std::size_t kLossEstimatorMinSamples = 10;

/// Per-sample log-loss of a binary probabilistic prediction, clipped away from 0 and 1.
inline double log_loss(double p_positive, int y) {
  const double p = std::clamp(p_positive, 1e-12, 1.0 - 1e-12);
  return y ? -std::log(p) : -std::log1p(-p);
}

/// Binary entropy in nats.
inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -(p * std::log(p) + (1.0 - p) * std::log1p(-p));
}

struct LossEstimator {
  LinearModel model;      ///< model_type "ridge"; decision() is the predicted loss
  bool fallback = false;  ///< too few samples: rank by entropy instead
  std::string warning;
};

/// Ridge regression of realized losses on features; the intercept is not
/// penalized (data centred first). Below kLossEstimatorMinSamples the
/// estimator is marked as a fallback.
inline LossEstimator train_loss_estimator(const Matrix& X, const Vector& losses, double ridge_lambda = 1e-3) {
  if (X.rows() != losses.size()) throw ArgumentError("train_loss_estimator: X and losses differ in length");
  if (!(ridge_lambda >= 0.0)) throw ArgumentError("train_loss_estimator: lambda must be >= 0");
  LossEstimator est;
  est.model.model_type = "ridge";
  est.model.classes = {"loss"};
  est.model.l2_lambda = ridge_lambda;
  est.model.weights = Matrix::Zero(1, X.cols());
  est.model.bias = {losses.size() ? losses.mean() : 0.0};
  if (static_cast<std::size_t>(X.rows()) < kLossEstimatorMinSamples) {
    est.fallback = true;
    est.warning = "loss estimator: " + std::to_string(X.rows()) + " labeled samples (< " +
                  std::to_string(kLossEstimatorMinSamples) + "), ranking by entropy";
    return est;
  }
  const Vector mx = X.colwise().mean().transpose();
  const double my = losses.mean();
  const Matrix Xc = X.rowwise() - mx.transpose();
  const Vector yc = losses.array() - my;
  Matrix A = Xc.transpose() * Xc / static_cast<double>(X.rows());
  A.diagonal().array() += ridge_lambda;
  const Vector rhs = Xc.transpose() * yc / static_cast<double>(X.rows());
  Vector w = A.ldlt().solve(rhs);
  if (!w.allFinite()) w = A.completeOrthogonalDecomposition().solve(rhs);
  est.model.weights = w.transpose();
  est.model.bias = {my - w.dot(mx)};
  return est;
}

/// Indices sorted by descending score; equal scores keep input order.
inline std::vector<std::size_t> rank_descending(const std::vector<double>& score) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return order;
}

/// Predicted loss per candidate (entropy of `p_positive` when the estimator fell back).
inline std::vector<double> loss_scores(const LossEstimator& est, const Matrix& X, const Vector& p_positive) {
  std::vector<double> s(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    s[static_cast<std::size_t>(i)] = est.fallback ? binary_entropy(p_positive(i)) : est.model.decision(X.row(i).transpose());
  return s;
}

}  // namespace pam::learners
