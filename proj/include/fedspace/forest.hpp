#pragma once

// Bagged CART regression trees with mean-valued leaves.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fedspace/rng.hpp"

namespace fedspace::forest {

struct ForestParams {
  int trees = 100;
  int max_depth = 8;
  int min_samples_leaf = 3;
  int max_features = 0;  // features tried per split; 0 means ceil(p / 3)
  bool bootstrap = true;
};

class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  double predict(std::span<const double> x) const;
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  int depth() const;

  static RegressionTree fit(std::span<const double> X, std::span<const double> y, std::size_t n_features,
                            std::span<const std::size_t> rows, const ForestParams& params, Rng& rng);
  static RegressionTree from_nodes(std::vector<Node> nodes);

 private:
  std::vector<Node> nodes_;
};

class RegressionForest {
 public:
  RegressionForest() = default;

  // X is row-major, y.size() rows by n_features columns.
  static RegressionForest fit(std::span<const double> X, std::span<const double> y, std::size_t n_features,
                              const ForestParams& params, Rng& rng);

  double predict(std::span<const double> x) const;
  std::size_t n_features() const noexcept { return n_features_; }
  std::size_t size() const noexcept { return trees_.size(); }
  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }

  nlohmann::json to_json() const;
  static RegressionForest from_json(const nlohmann::json& j);

 private:
  std::vector<RegressionTree> trees_;
  std::size_t n_features_ = 0;
};

}  // namespace fedspace::forest
