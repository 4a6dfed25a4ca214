#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pamcurator/core/error.hpp"
#include "pamcurator/features/embedding.hpp"

namespace pam::learners {

inline constexpr int kModelFormatVersion = 1;

using Matrix = Eigen::MatrixXd;  ///< one row per sample
using Vector = Eigen::VectorXd;

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

/// log(1 + exp(s)) without overflow.
inline double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

/// Score-based linear model. Binary models carry one score row (for
/// classes[1]); multiclass models carry one one-vs-rest row per class.
/// Inputs are standardized as (x - offset) / scale before scoring; empty
/// offset/scale means identity.
struct LinearModel {
  std::string model_type = "logreg";  ///< logreg | lda | ridge
  std::vector<std::string> classes{"negative", "positive"};
  Matrix weights;         ///< rows = score rows, cols = feature dim
  std::vector<double> bias;
  double l2_lambda = 0.0;
  features::FeatureKind feature_kind = features::FeatureKind::embedding;
  Vector offset, scale;

  Eigen::Index dim() const noexcept { return weights.cols(); }
  bool binary() const noexcept { return classes.size() == 2; }

  void check_dim(Eigen::Index d) const {
    if (d != dim())
      throw ArgumentError("model expects " + std::to_string(dim()) + " features, got " + std::to_string(d));
  }

  Vector standardize(const Eigen::Ref<const Vector>& x) const {
    if (offset.size() == 0) return x;
    return (x - offset).cwiseQuotient(scale);
  }

  /// Raw score of each row (log-odds for logistic models).
  Vector scores(const Eigen::Ref<const Vector>& x) const {
    check_dim(x.size());
    const Vector z = standardize(x);
    Vector s = weights * z;
    for (Eigen::Index k = 0; k < s.size(); ++k) s(k) += bias[static_cast<std::size_t>(k)];
    return s;
  }

  /// Binary: score of the positive class. Regression models return the prediction.
  double decision(const Eigen::Ref<const Vector>& x) const { return scores(x)(0); }
};

inline Vector to_vector(const std::vector<float>& v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) x(static_cast<Eigen::Index>(i)) = v[i];
  return x;
}

inline Matrix to_matrix(const std::vector<features::FeatureVector>& rows) {
  if (rows.empty()) return Matrix(0, 0);
  const auto d = static_cast<Eigen::Index>(rows.front().values.size());
  Matrix X(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].values.size()) != d)
      throw ArgumentError("feature vector '" + rows[i].sample_id + "' has inconsistent length");
    for (Eigen::Index j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), j) = rows[i].values[static_cast<std::size_t>(j)];
  }
  return X;
}

/// Class probabilities; binary models give {1 - p, p}, one-vs-rest models
/// normalize the per-class sigmoids.
inline std::vector<double> predict_proba(const LinearModel& m, const Eigen::Ref<const Vector>& x) {
  const Vector s = m.scores(x);
  if (m.binary()) {
    const double p = sigmoid(s(0));
    return {1.0 - p, p};
  }
  std::vector<double> p(static_cast<std::size_t>(s.size()));
  double sum = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) sum += p[static_cast<std::size_t>(k)] = sigmoid(s(k));
  for (double& v : p) v = sum > 0.0 ? v / sum : 1.0 / static_cast<double>(p.size());
  return p;
}

inline std::vector<double> predict_proba(const LinearModel& m, const features::FeatureVector& x) {
  return predict_proba(m, to_vector(x.values));
}

/// Positive-class probability for every row of X (binary models).
inline Vector predict_positive(const LinearModel& m, const Matrix& X) {
  m.check_dim(X.cols());
  Vector out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = sigmoid(m.decision(X.row(i).transpose()));
  return out;
}

inline std::size_t predict_class(const LinearModel& m, const Eigen::Ref<const Vector>& x) {
  const auto p = predict_proba(m, x);
  std::size_t best = 0;
  for (std::size_t k = 1; k < p.size(); ++k)
    if (p[k] > p[best]) best = k;
  return best;
}

// ---------------------------------------------------------------- JSON

namespace detail {

inline nlohmann::json vec_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector json_vec(const nlohmann::json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json model_to_json(const LinearModel& m) {
  nlohmann::json w = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.weights.rows(); ++r) w.push_back(detail::vec_json(m.weights.row(r).transpose()));
  return {{"format_version", kModelFormatVersion}, {"model_type", m.model_type},   {"classes", m.classes},
          {"feature_kind", features::to_string(m.feature_kind)},                   {"l2_lambda", m.l2_lambda},
          {"weights", w},  {"bias", m.bias}, {"offset", detail::vec_json(m.offset)}, {"scale", detail::vec_json(m.scale)}};
}

inline LinearModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion)
      throw UnsupportedFormatError("model: unsupported format_version " + j.at("format_version").dump());
    LinearModel m;
    m.model_type = j.at("model_type").get<std::string>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.feature_kind = features::parse_feature_kind(j.at("feature_kind").get<std::string>());
    m.l2_lambda = j.at("l2_lambda").get<double>();
    const auto& w = j.at("weights");
    const auto rows = static_cast<Eigen::Index>(w.size());
    const auto cols = rows ? static_cast<Eigen::Index>(w[0].size()) : 0;
    m.weights = Matrix(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (static_cast<Eigen::Index>(w[static_cast<std::size_t>(r)].size()) != cols) throw DataError("model: ragged weights");
      m.weights.row(r) = detail::json_vec(w[static_cast<std::size_t>(r)]).transpose();
    }
    m.bias = j.at("bias").get<std::vector<double>>();
    m.offset = detail::json_vec(j.at("offset"));
    m.scale = detail::json_vec(j.at("scale"));
    if (static_cast<Eigen::Index>(m.bias.size()) != rows) throw DataError("model: bias/weights mismatch");
    if (m.offset.size() != 0 && (m.offset.size() != cols || m.scale.size() != cols))
      throw DataError("model: standardization vectors do not match weights");
    if (!m.weights.allFinite()) throw DataError("model: non-finite weights");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

/// Column means and standard deviations (zero spread maps to scale 1).
inline void fit_standardizer(const Matrix& X, Vector& offset, Vector& scale) {
  offset = X.colwise().mean().transpose();
  scale = Vector(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double sd = std::sqrt((X.col(j).array() - offset(j)).square().mean());
    scale(j) = sd > 1e-12 ? sd : 1.0;
  }
}

}  // namespace pam::learners
