#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pamcurator/learners/linear_model.hpp"

namespace pam::learners {

struct LogregOptions {
  double l2_lambda = 1e-4;
  int max_epochs = 1000;
  double grad_tol = 1e-6;
  bool standardize = true;
};

struct LogregTrace {
  std::vector<double> losses;  ///< objective after each epoch (index 0 = initial point)
  int epochs = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

/// Mean log-loss plus (lambda/2)|w|^2 (bias unpenalized) on already
/// standardized inputs Z with 0/1 targets. Gradient written when requested.
inline double logreg_objective(const Matrix& Z, const Vector& y, const Vector& w, double b, double lambda,
                               Vector* grad_w = nullptr, double* grad_b = nullptr) {
  const double n = static_cast<double>(Z.rows());
  const Vector s = (Z * w).array() + b;
  double loss = 0.0;
  Vector r(Z.rows());
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    loss += softplus(s(i)) - y(i) * s(i);
    r(i) = sigmoid(s(i)) - y(i);
  }
  loss = loss / n + 0.5 * lambda * w.squaredNorm();
  if (grad_w) *grad_w = Z.transpose() * r / n + lambda * w;
  if (grad_b) *grad_b = r.sum() / n;
  return loss;
}

/// Full-batch gradient descent, diagonally preconditioned by the logistic
/// Hessian bound (0.25 mean(z_j^2) + lambda per weight, 0.25 for the bias) so
/// a heavily penalized w and a free bias move at comparable rates.
/// Barzilai-Borwein trial step in the preconditioned metric, Armijo
/// backtracking, so the objective never increases between epochs.
inline void fit_binary_logreg(const Matrix& Z, const Vector& y, double lambda, const LogregOptions& opt, Vector& w,
                              double& b, LogregTrace* trace = nullptr) {
  const Eigen::Index d = Z.cols();
  if (w.size() != d) w = Vector::Zero(d);
  const Vector dinv = (0.25 * Z.array().square().colwise().mean().transpose() + lambda + 1e-12).inverse().matrix();
  constexpr double kBiasInv = 4.0;
  Vector g(d), g_new(d), w_new(d);
  double gb = 0.0, gb_new = 0.0;
  double f = logreg_objective(Z, y, w, b, lambda, &g, &gb);
  if (trace) trace->losses.assign(1, f);
  double step = 1.0;
  int epoch = 0;
  auto gnorm = [&] { return std::sqrt(g.squaredNorm() + gb * gb); };
  bool converged = gnorm() <= opt.grad_tol;
  for (; epoch < opt.max_epochs && !converged; ++epoch) {
    const Vector pw = dinv.cwiseProduct(g);
    const double pb = kBiasInv * gb;
    const double gp = g.dot(pw) + gb * pb;
    double a = step;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, a *= 0.5) {
      w_new = w - a * pw;
      const double b_new = b - a * pb;
      const double f_new = logreg_objective(Z, y, w_new, b_new, lambda, &g_new, &gb_new);
      if (f_new <= f - 1e-4 * a * gp) {
        accepted = true;
        // BB1 step for the next epoch: (s' D s) / (s' dg) with D the inverse preconditioner.
        const Vector dw = w_new - w;
        const double db = b_new - b;
        const double sy = dw.dot(g_new - g) + db * (gb_new - gb);
        const double sds = dw.cwiseQuotient(dinv).dot(dw) + db * db / kBiasInv;
        step = sy > 0.0 ? std::min(1e6, sds / sy) : 2.0 * a;
        w.swap(w_new);
        b = b_new;
        g.swap(g_new);
        gb = gb_new;
        f = f_new;
        break;
      }
    }
    if (trace) trace->losses.push_back(f);
    if (!accepted) break;  // no representable decrease left
    converged = gnorm() <= opt.grad_tol;
  }
  if (trace) {
    trace->epochs = epoch;
    trace->grad_norm = gnorm();
    trace->converged = converged;
  }
}

/// labels[i] indexes `classes`; two classes give a binary model, more give
/// one-vs-rest rows.
inline LinearModel train_logreg(const Matrix& X, const std::vector<int>& labels, const std::vector<std::string>& classes,
                                const LogregOptions& opt = {}, LogregTrace* trace = nullptr) {
  if (classes.size() < 2) throw ArgumentError("train_logreg: need at least two classes");
  if (static_cast<std::size_t>(X.rows()) != labels.size()) throw ArgumentError("train_logreg: X and labels differ in length");
  if (!(opt.l2_lambda >= 0.0)) throw ArgumentError("train_logreg: l2_lambda must be >= 0");
  std::vector<std::size_t> counts(classes.size(), 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes.size()) throw ArgumentError("train_logreg: label out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  for (std::size_t k = 0; k < classes.size(); ++k)
    if (counts[k] == 0) throw DataError("train_logreg: no training samples of class '" + classes[k] + "'");
  if (!X.allFinite()) throw DataError("train_logreg: non-finite features");

  LinearModel m;
  m.model_type = "logreg";
  m.classes = classes;
  m.l2_lambda = opt.l2_lambda;
  Matrix Z = X;
  if (opt.standardize) {
    fit_standardizer(X, m.offset, m.scale);
    Z = (X.rowwise() - m.offset.transpose()).array().rowwise() / m.scale.transpose().array();
  }
  const std::size_t rows = classes.size() == 2 ? 1 : classes.size();
  m.weights = Matrix::Zero(static_cast<Eigen::Index>(rows), X.cols());
  m.bias.assign(rows, 0.0);
  for (std::size_t k = 0; k < rows; ++k) {
    const int target = classes.size() == 2 ? 1 : static_cast<int>(k);
    Vector y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = labels[static_cast<std::size_t>(i)] == target ? 1.0 : 0.0;
    Vector w = Vector::Zero(X.cols());
    double b = 0.0;
    fit_binary_logreg(Z, y, opt.l2_lambda, opt, w, b, k == 0 ? trace : nullptr);
    m.weights.row(static_cast<Eigen::Index>(k)) = w.transpose();
    m.bias[k] = b;
  }
  return m;
}

/// Binary convenience: y[i] in {0, 1}.
inline LinearModel train_logreg(const Matrix& X, const std::vector<int>& y, const LogregOptions& opt = {},
                                LogregTrace* trace = nullptr) {
  return train_logreg(X, y, {"negative", "positive"}, opt, trace);
}

}  // namespace pam::learners
