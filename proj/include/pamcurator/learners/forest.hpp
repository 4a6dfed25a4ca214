#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamcurator/core/error.hpp"
#include "pamcurator/core/rng.hpp"
#include "pamcurator/features/embedding.hpp"
#include "pamcurator/learners/linear_model.hpp"

namespace pam::learners {

struct ForestOptions {
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 1;
  int max_features = 0;  ///< features tried per split; 0 means round(sqrt(dim))
  bool bootstrap = true;
  std::uint64_t seed = 1;
};

struct TreeNode {
  int feature = -1;  ///< -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;  ///< x[feature] <= threshold goes left
  std::vector<double> dist;   ///< class distribution at the node, sums to 1
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  ///< nodes[0] is the root

  const TreeNode& leaf(const Eigen::Ref<const Vector>& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)];
  }
};

struct ForestModel {
  std::vector<std::string> classes{"negative", "positive"};
  std::vector<DecisionTree> trees;
  ForestOptions options;
  Eigen::Index dim = 0;
  features::FeatureKind feature_kind = features::FeatureKind::rocca;
};

namespace detail {

inline double gini(const std::vector<double>& counts, double total) {
  if (total <= 0.0) return 0.0;
  double s = 1.0;
  for (double c : counts) s -= (c / total) * (c / total);
  return s;
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const std::vector<int>& y, std::size_t classes, const ForestOptions& opt, Rng& rng)
      : X_(X), y_(y), k_(classes), opt_(opt), rng_(rng) {
    const auto d = static_cast<std::size_t>(X.cols());
    mf_ = opt.max_features > 0 ? std::min<std::size_t>(d, static_cast<std::size_t>(opt.max_features))
                               : std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d)))));
  }

  DecisionTree build(std::vector<std::size_t> idx) {
    DecisionTree t;
    t.nodes.emplace_back();
    struct Job {
      int node;
      std::vector<std::size_t> idx;
      int depth;
    };
    std::vector<Job> stack;
    stack.push_back({0, std::move(idx), 0});
    while (!stack.empty()) {
      Job job = std::move(stack.back());
      stack.pop_back();
      std::vector<double> counts(k_, 0.0);
      for (auto i : job.idx) counts[static_cast<std::size_t>(y_[i])] += 1.0;
      const double total = static_cast<double>(job.idx.size());
      auto& node = t.nodes[static_cast<std::size_t>(job.node)];
      node.dist.resize(k_);
      for (std::size_t c = 0; c < k_; ++c) node.dist[c] = counts[c] / total;
      const double parent_gini = gini(counts, total);
      if (job.depth >= opt_.max_depth || parent_gini <= 0.0 ||
          job.idx.size() < 2 * static_cast<std::size_t>(std::max(1, opt_.min_leaf)))
        continue;
      int best_f = -1;
      // Zero-gain splits are allowed on impure nodes so unrestricted trees reach pure leaves.
      double best_thr = 0.0, best_score = parent_gini * total + 1e-12;
      std::vector<std::size_t> order = job.idx;
      const auto feats = rng_.sample_indices(static_cast<std::size_t>(X_.cols()), mf_);
      for (auto f : feats) {
        const auto fe = static_cast<Eigen::Index>(f);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          const double va = X_(static_cast<Eigen::Index>(a), fe), vb = X_(static_cast<Eigen::Index>(b), fe);
          return va != vb ? va < vb : a < b;
        });
        std::vector<double> left(k_, 0.0), right = counts;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          const auto c = static_cast<std::size_t>(y_[order[i]]);
          left[c] += 1.0;
          right[c] -= 1.0;
          const double v = X_(static_cast<Eigen::Index>(order[i]), fe);
          const double v_next = X_(static_cast<Eigen::Index>(order[i + 1]), fe);
          if (v == v_next) continue;
          const double nl = static_cast<double>(i + 1), nr = total - nl;
          if (nl < opt_.min_leaf || nr < opt_.min_leaf) continue;
          const double score = gini(left, nl) * nl + gini(right, nr) * nr;
          if (score < best_score) {
            best_score = score;
            best_f = static_cast<int>(f);
            best_thr = 0.5 * (v + v_next);
          }
        }
      }
      if (best_f < 0) continue;
      std::vector<std::size_t> li, ri;
      for (auto i : job.idx) (X_(static_cast<Eigen::Index>(i), best_f) <= best_thr ? li : ri).push_back(i);
      const int l = static_cast<int>(t.nodes.size());
      t.nodes.emplace_back();
      t.nodes.emplace_back();
      auto& split = t.nodes[static_cast<std::size_t>(job.node)];
      split.feature = best_f;
      split.threshold = best_thr;
      split.left = l;
      split.right = l + 1;
      stack.push_back({l + 1, std::move(ri), job.depth + 1});
      stack.push_back({l, std::move(li), job.depth + 1});
    }
    return t;
  }

 private:
  const Matrix& X_;
  const std::vector<int>& y_;
  std::size_t k_;
  const ForestOptions& opt_;
  Rng& rng_;
  std::size_t mf_ = 1;
};

}  // namespace detail

/// CART trees (Gini impurity), optional bootstrap resampling and a random
/// feature subset per split. Tree t draws from its own seeded stream.
inline ForestModel train_forest(const Matrix& X, const std::vector<int>& y, const std::vector<std::string>& classes,
                                const ForestOptions& opt = {}) {
  if (opt.n_trees < 1 || opt.max_depth < 0 || opt.min_leaf < 1) throw ArgumentError("train_forest: invalid options");
  if (X.rows() == 0 || static_cast<std::size_t>(X.rows()) != y.size()) throw ArgumentError("train_forest: X and labels differ in length");
  if (classes.size() < 2) throw ArgumentError("train_forest: need at least two classes");
  for (int l : y)
    if (l < 0 || static_cast<std::size_t>(l) >= classes.size()) throw ArgumentError("train_forest: label out of range");
  ForestModel m;
  m.classes = classes;
  m.options = opt;
  m.dim = X.cols();
  const auto n = static_cast<std::size_t>(X.rows());
  for (int t = 0; t < opt.n_trees; ++t) {
    Rng rng(mix_seed(opt.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> idx(n);
    if (opt.bootstrap)
      for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
    else
      std::iota(idx.begin(), idx.end(), std::size_t{0});
    detail::TreeBuilder builder(X, y, classes.size(), opt, rng);
    m.trees.push_back(builder.build(std::move(idx)));
  }
  return m;
}

inline std::vector<double> predict_proba(const ForestModel& m, const Eigen::Ref<const Vector>& x) {
  if (x.size() != m.dim) throw ArgumentError("forest expects " + std::to_string(m.dim) + " features");
  std::vector<double> p(m.classes.size(), 0.0);
  for (const auto& t : m.trees) {
    const auto& d = t.leaf(x).dist;
    for (std::size_t c = 0; c < p.size(); ++c) p[c] += d[c];
  }
  for (double& v : p) v /= static_cast<double>(m.trees.size());
  return p;
}

/// Binary: positive on ties. Multiclass: lowest index among the maxima.
inline int predict_forest(const ForestModel& m, const Eigen::Ref<const Vector>& x) {
  const auto p = predict_proba(m, x);
  if (p.size() == 2) return p[1] >= p[0] ? 1 : 0;
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

struct SpectrogramVote {
  int label = 0;
  int votes_positive = 0;
  int votes_negative = 0;
  bool zero_contours = false;
};

/// Majority over per-contour binary predictions; ties go positive, no contours is negative.
inline SpectrogramVote majority_vote(const std::vector<int>& contour_labels) {
  SpectrogramVote v;
  for (int l : contour_labels) (l ? v.votes_positive : v.votes_negative)++;
  v.zero_contours = contour_labels.empty();
  v.label = !v.zero_contours && v.votes_positive >= v.votes_negative ? 1 : 0;
  return v;
}

inline SpectrogramVote vote_spectrogram(const ForestModel& m, const Matrix& contours) {
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < contours.rows(); ++i) labels.push_back(predict_forest(m, contours.row(i).transpose()));
  return majority_vote(labels);
}

// ---------------------------------------------------------------- JSON

inline nlohmann::json forest_to_json(const ForestModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes)
      nodes.push_back(n.feature < 0 ? nlohmann::json{{"dist", n.dist}}
                                    : nlohmann::json{{"f", n.feature}, {"thr", n.threshold}, {"l", n.left}, {"r", n.right}, {"dist", n.dist}});
    trees.push_back(std::move(nodes));
  }
  return {{"format_version", kModelFormatVersion},
          {"model_type", "forest"},
          {"classes", m.classes},
          {"feature_kind", features::to_string(m.feature_kind)},
          {"dim", m.dim},
          {"n_trees", m.options.n_trees},
          {"max_depth", m.options.max_depth},
          {"min_leaf", m.options.min_leaf},
          {"max_features", m.options.max_features},
          {"bootstrap", m.options.bootstrap},
          {"seed", m.options.seed},
          {"trees", trees}};
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("model_type") != "forest") throw DataError("forest: model_type is not forest");
    ForestModel m;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.feature_kind = features::parse_feature_kind(j.at("feature_kind").get<std::string>());
    m.dim = j.at("dim").get<Eigen::Index>();
    m.options.n_trees = j.at("n_trees");
    m.options.max_depth = j.at("max_depth");
    m.options.min_leaf = j.at("min_leaf");
    m.options.max_features = j.at("max_features");
    m.options.bootstrap = j.at("bootstrap");
    m.options.seed = j.at("seed");
    for (const auto& tj : j.at("trees")) {
      DecisionTree t;
      for (const auto& nj : tj) {
        TreeNode n;
        n.dist = nj.at("dist").get<std::vector<double>>();
        if (nj.contains("f")) {
          n.feature = nj.at("f");
          n.threshold = nj.at("thr");
          n.left = nj.at("l");
          n.right = nj.at("r");
        }
        t.nodes.push_back(std::move(n));
      }
      const auto count = static_cast<int>(t.nodes.size());
      // Children must come after their parent, which also rules out cycles.
      for (int i = 0; i < count; ++i) {
        const auto& n = t.nodes[static_cast<std::size_t>(i)];
        if (n.dist.size() != m.classes.size() || n.feature >= m.dim ||
            (n.feature >= 0 && (n.left <= i || n.left >= count || n.right <= i || n.right >= count)))
          throw DataError("forest: malformed tree");
      }
      m.trees.push_back(std::move(t));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("forest: ") + e.what());
  }
}

}  // namespace pam::learners
