#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "dropcast/exec.hpp"
#include "dropcast/nn/layers.hpp"
#include "dropcast/task.hpp"

namespace dropcast::forest {

struct ForestConfig {
  int n_trees = 200;
  int max_depth = 10;
  int min_samples_split = 2;
  int features_per_split = 0;  // 0 = floor(sqrt(d))
  bool bootstrap = true;
  nn::ClassWeights class_weights;
  std::uint64_t seed = 1;

  // 200 trees short-term, 100 long-term; long-term tasks weight high risk 1.5.
  static ForestConfig for_task(Task task);
  void validate() const;
};

void to_json(nlohmann::json& j, const ForestConfig& c);
void from_json(const nlohmann::json& j, ForestConfig& c);

// Internal node when feature >= 0 (x[feature] <= threshold goes left),
// leaf otherwise.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double high_fraction = 0.0;  // weighted share of high-risk rows at this node
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(std::span<const double> x) const;
  int depth() const;
};

// Row-major feature matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
  std::span<const double> row(int r) const {
    return {values.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
};

class Forest {
 public:
  Forest() = default;
  Forest(int n_features, std::vector<Tree> trees, ForestConfig config);

  // Throws Error on a single-class or mis-sized input.
  static Forest fit(const Matrix& x, std::span<const int> labels, const ForestConfig& config,
                    Exec exec = Exec::parallel);

  // Mean of the per-tree leaf high-risk fractions.
  double predict_proba(std::span<const double> x) const;
  std::vector<double> predict_proba(const Matrix& x, Exec exec = Exec::parallel) const;

  int n_features() const { return n_features_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const ForestConfig& config() const { return config_; }

  // Accuracy of out-of-bag votes over rows left out by at least one tree;
  // only available right after fit.
  double oob_accuracy() const { return oob_accuracy_; }

 private:
  int n_features_ = 0;
  std::vector<Tree> trees_;
  ForestConfig config_;
  double oob_accuracy_ = 0.0;
};

void to_json(nlohmann::json& j, const Forest& f);
Forest forest_from_json(const nlohmann::json& j);

}  // namespace dropcast::forest
