#include "fedspace/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedspace::forest {
namespace {

struct Builder {
  std::span<const double> X;
  std::span<const double> y;
  std::size_t p;
  const ForestParams& params;
  Rng& rng;
  std::vector<RegressionTree::Node> nodes;
  std::vector<std::size_t> features;

  double x(std::size_t row, std::size_t f) const { return X[row * p + f]; }

  int build(std::vector<std::size_t>& rows, std::size_t lo, std::size_t hi, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) sum += y[rows[i]];
    const std::size_t n = hi - lo;
    nodes[static_cast<std::size_t>(id)].value = sum / static_cast<double>(n);

    const auto min_leaf = static_cast<std::size_t>(std::max(params.min_samples_leaf, 1));
    if (depth >= params.max_depth || n < 2 * min_leaf) return id;

    // Candidate features for this split.
    std::size_t mtry = params.max_features > 0 ? static_cast<std::size_t>(params.max_features) : (p + 2) / 3;
    mtry = std::clamp<std::size_t>(mtry, 1, p);
    for (std::size_t j = 0; j < mtry; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, p - 1);
      std::swap(features[j], features[pick(rng)]);
    }

    double best_gain = 1e-12;
    std::size_t best_f = p;
    double best_thr = 0.0;
    const double total_sq = sum * sum / static_cast<double>(n);
    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::size_t j = 0; j < mtry; ++j) {
      const std::size_t f = features[j];
      for (std::size_t i = 0; i < n; ++i) order[i] = {x(rows[lo + i], f), rows[lo + i]};
      std::sort(order.begin(), order.end());
      if (order.front().first == order.back().first) continue;
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left += y[order[i].second];
        const std::size_t nl = i + 1, nr = n - nl;
        if (order[i].first == order[i + 1].first || nl < min_leaf || nr < min_leaf) continue;
        const double right = sum - left;
        const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) - total_sq;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = f;
          best_thr = 0.5 * (order[i].first + order[i + 1].first);
        }
      }
    }
    if (best_f == p) return id;

    const auto mid_it = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(lo), rows.begin() + static_cast<std::ptrdiff_t>(hi),
                                       [&](std::size_t r) { return x(r, best_f) <= best_thr; });
    const auto mid = static_cast<std::size_t>(mid_it - rows.begin());
    const int l = build(rows, lo, mid, depth + 1);
    const int r = build(rows, mid, hi, depth + 1);
    auto& node = nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(best_f);
    node.threshold = best_thr;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace

double RegressionTree::predict(std::span<const double> x) const {
  if (nodes_.empty()) throw std::logic_error("regression tree: not fitted");
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].value;
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes_[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

RegressionTree RegressionTree::fit(std::span<const double> X, std::span<const double> y, std::size_t n_features,
                                   std::span<const std::size_t> rows, const ForestParams& params, Rng& rng) {
  if (rows.empty()) throw std::invalid_argument("regression tree: no rows");
  Builder b{X, y, n_features, params, rng, {}, {}};
  b.features.resize(n_features);
  std::iota(b.features.begin(), b.features.end(), std::size_t{0});
  std::vector<std::size_t> r(rows.begin(), rows.end());
  b.build(r, 0, r.size(), 0);
  RegressionTree t;
  t.nodes_ = std::move(b.nodes);
  return t;
}

RegressionTree RegressionTree::from_nodes(std::vector<Node> nodes) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.feature >= 0 && (n.left <= static_cast<int>(i) || n.right <= static_cast<int>(i) ||
                           n.left >= static_cast<int>(nodes.size()) || n.right >= static_cast<int>(nodes.size())))
      throw std::invalid_argument("regression tree: malformed node links");
  }
  if (nodes.empty()) throw std::invalid_argument("regression tree: no nodes");
  RegressionTree t;
  t.nodes_ = std::move(nodes);
  return t;
}

RegressionForest RegressionForest::fit(std::span<const double> X, std::span<const double> y, std::size_t n_features,
                                       const ForestParams& params, Rng& rng) {
  if (params.trees < 1 || params.max_depth < 0) throw std::invalid_argument("forest: need trees >= 1 and max_depth >= 0");
  if (n_features == 0 || y.empty() || X.size() != y.size() * n_features)
    throw std::invalid_argument("forest: design matrix shape mismatch");
  RegressionForest f;
  f.n_features_ = n_features;
  const std::size_t n = y.size();
  std::vector<std::size_t> rows(n);
  for (int t = 0; t < params.trees; ++t) {
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    f.trees_.push_back(RegressionTree::fit(X, y, n_features, rows, params, rng));
  }
  return f;
}

double RegressionForest::predict(std::span<const double> x) const {
  if (trees_.empty()) throw std::logic_error("forest: not fitted");
  if (x.size() != n_features_) throw std::invalid_argument("forest: feature count mismatch");
  double s = 0.0;
  for (const auto& t : trees_) s += t.predict(x);
  return s / static_cast<double>(trees_.size());
}

nlohmann::json RegressionForest::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(), value = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
  }
  return {{"n_features", n_features_}, {"trees", trees}};
}

RegressionForest RegressionForest::from_json(const nlohmann::json& j) {
  RegressionForest f;
  f.n_features_ = j.at("n_features").get<std::size_t>();
  for (const auto& t : j.at("trees")) {
    const auto& feature = t.at("feature");
    const std::size_t n = feature.size();
    if (t.at("threshold").size() != n || t.at("left").size() != n || t.at("right").size() != n || t.at("value").size() != n)
      throw std::invalid_argument("forest: ragged tree arrays");
    std::vector<RegressionTree::Node> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
      nodes[i].feature = feature[i].get<int>();
      nodes[i].threshold = t["threshold"][i].get<double>();
      nodes[i].left = t["left"][i].get<int>();
      nodes[i].right = t["right"][i].get<int>();
      nodes[i].value = t["value"][i].get<double>();
      if (nodes[i].feature >= static_cast<int>(f.n_features_)) throw std::invalid_argument("forest: feature index out of range");
    }
    f.trees_.push_back(RegressionTree::from_nodes(std::move(nodes)));
  }
  if (f.trees_.empty()) throw std::invalid_argument("forest: no trees");
  return f;
}

}  // namespace fedspace::forest
