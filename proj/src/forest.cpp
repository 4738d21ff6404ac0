#include "dropcast/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dropcast/error.hpp"
#include "dropcast/nn/kernels.hpp"
#include "dropcast/rng.hpp"

namespace dropcast::forest {

ForestConfig ForestConfig::for_task(Task task) {
  ForestConfig c;
  c.n_trees = task == Task::short_term ? 200 : 100;
  if (is_long_term(task)) c.class_weights = {1.0, 1.5};
  return c;
}

void ForestConfig::validate() const {
  if (n_trees < 1) throw Error("forest: n_trees must be >= 1");
  if (max_depth < 1) throw Error("forest: max_depth must be >= 1");
  if (min_samples_split < 2) throw Error("forest: min_samples_split must be >= 2");
  if (features_per_split < 0) throw Error("forest: features_per_split must be >= 0");
  if (!(class_weights.low > 0) || !(class_weights.high > 0)) throw Error("forest: class weights must be positive");
}

void to_json(nlohmann::json& j, const ForestConfig& c) {
  j = nlohmann::json{{"n_trees", c.n_trees},
                     {"max_depth", c.max_depth},
                     {"min_samples_split", c.min_samples_split},
                     {"features_per_split", c.features_per_split},
                     {"bootstrap", c.bootstrap},
                     {"class_weights", {{"low", c.class_weights.low}, {"high", c.class_weights.high}}},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ForestConfig& c) {
  c.n_trees = j.value("n_trees", c.n_trees);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.min_samples_split = j.value("min_samples_split", c.min_samples_split);
  c.features_per_split = j.value("features_per_split", c.features_per_split);
  c.bootstrap = j.value("bootstrap", c.bootstrap);
  if (j.contains("class_weights")) {
    c.class_weights.low = j["class_weights"].value("low", 1.0);
    c.class_weights.high = j["class_weights"].value("high", 1.0);
  }
  c.seed = j.value("seed", c.seed);
  c.validate();
}

double Tree::predict(std::span<const double> x) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].high_fraction;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

struct Row {
  int index;
  double weight;  // bootstrap multiplicity times class weight
  int count;      // bootstrap multiplicity
};

struct Builder {
  const Matrix& x;
  std::span<const int> y;
  const ForestConfig& cfg;
  int mtry;
  Rng rng;
  Tree tree;
  std::vector<int> features;

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;  // weighted child impurity sum
  };

  static double child_impurity(double w0, double w1) {
    const double w = w0 + w1;
    return w > 0 ? w - (w0 * w0 + w1 * w1) / w : 0.0;
  }

  Split best_split(std::vector<Row>& rows, double w0, double w1) {
    // Partial Fisher-Yates draw of mtry candidate features, then evaluate
    // in ascending index order so ties resolve to the lowest feature.
    for (int k = 0; k < mtry; ++k) {
      std::uniform_int_distribution<int> pick(k, x.cols - 1);
      std::swap(features[static_cast<std::size_t>(k)], features[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> candidates(features.begin(), features.begin() + mtry);
    std::sort(candidates.begin(), candidates.end());

    Split best;
    best.impurity = child_impurity(w0, w1);
    const double parent = best.impurity;
    for (int f : candidates) {
      std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
        const double va = x.values[static_cast<std::size_t>(a.index) * x.cols + f];
        const double vb = x.values[static_cast<std::size_t>(b.index) * x.cols + f];
        return va < vb || (va == vb && a.index < b.index);
      });
      double l0 = 0.0, l1 = 0.0;
      for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        (y[static_cast<std::size_t>(rows[i].index)] ? l1 : l0) += rows[i].weight;
        const double v = x.values[static_cast<std::size_t>(rows[i].index) * x.cols + f];
        const double next = x.values[static_cast<std::size_t>(rows[i + 1].index) * x.cols + f];
        if (v == next) continue;
        const double imp = child_impurity(l0, l1) + child_impurity(w0 - l0, w1 - l1);
        if (imp < best.impurity - 1e-12 * std::max(1.0, parent)) {
          best = Split{f, v + (next - v) / 2.0, imp};
        }
      }
    }
    return best;
  }

  int grow(std::vector<Row> rows, int depth) {
    double w0 = 0.0, w1 = 0.0;
    int count = 0;
    for (const auto& r : rows) {
      (y[static_cast<std::size_t>(r.index)] ? w1 : w0) += r.weight;
      count += r.count;
    }
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, w1 / (w0 + w1)});
    if (depth >= cfg.max_depth || count < cfg.min_samples_split || w0 == 0.0 || w1 == 0.0) return id;
    Split s = best_split(rows, w0, w1);
    if (s.feature < 0) return id;
    std::vector<Row> left, right;
    for (const auto& r : rows) {
      (x.values[static_cast<std::size_t>(r.index) * x.cols + s.feature] <= s.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace

Forest::Forest(int n_features, std::vector<Tree> trees, ForestConfig config)
    : n_features_(n_features), trees_(std::move(trees)), config_(config) {}

Forest Forest::fit(const Matrix& x, std::span<const int> labels, const ForestConfig& config, Exec exec) {
  config.validate();
  if (x.rows < 2 || static_cast<std::size_t>(x.rows) != labels.size())
    throw Error("forest: need at least two rows with one label each");
  if (x.cols < 1) throw Error("forest: no features");
  int n_high = 0;
  for (int v : labels) n_high += v != 0;
  if (n_high == 0 || n_high == x.rows) throw Error("forest: training labels contain a single class");

  const int mtry = config.features_per_split > 0
                       ? std::min(config.features_per_split, x.cols)
                       : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(x.cols)))));
  std::vector<Tree> trees(static_cast<std::size_t>(config.n_trees));
  std::vector<std::vector<char>> in_bag(static_cast<std::size_t>(config.n_trees));

  nn::kernels::for_each_index(exec, config.n_trees, [&](int t) {
    Builder b{x, labels, config, mtry, make_rng(config.seed, salt::forest, static_cast<std::uint64_t>(t)), {}, {}};
    b.features.resize(static_cast<std::size_t>(x.cols));
    std::iota(b.features.begin(), b.features.end(), 0);
    std::vector<int> counts(static_cast<std::size_t>(x.rows), config.bootstrap ? 0 : 1);
    if (config.bootstrap) {
      std::uniform_int_distribution<int> draw(0, x.rows - 1);
      for (int i = 0; i < x.rows; ++i) ++counts[static_cast<std::size_t>(draw(b.rng))];
    }
    std::vector<Row> rows;
    auto& bag = in_bag[static_cast<std::size_t>(t)];
    bag.assign(static_cast<std::size_t>(x.rows), 0);
    for (int i = 0; i < x.rows; ++i) {
      const int c = counts[static_cast<std::size_t>(i)];
      if (c == 0) continue;
      bag[static_cast<std::size_t>(i)] = 1;
      const double w = labels[static_cast<std::size_t>(i)] ? config.class_weights.high : config.class_weights.low;
      rows.push_back(Row{i, c * w, c});
    }
    b.grow(std::move(rows), 0);
    trees[static_cast<std::size_t>(t)] = std::move(b.tree);
  });

  Forest f(x.cols, std::move(trees), config);
  int oob_rows = 0, oob_correct = 0;
  for (int i = 0; i < x.rows; ++i) {
    double sum = 0.0;
    int n = 0;
    for (int t = 0; t < config.n_trees; ++t) {
      if (in_bag[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]) continue;
      sum += f.trees_[static_cast<std::size_t>(t)].predict(x.row(i));
      ++n;
    }
    if (n == 0) continue;
    ++oob_rows;
    oob_correct += static_cast<int>(sum / n >= 0.5) == (labels[static_cast<std::size_t>(i)] != 0);
  }
  f.oob_accuracy_ = oob_rows ? static_cast<double>(oob_correct) / oob_rows : 0.0;
  return f;
}

double Forest::predict_proba(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != n_features_)
    throw Error("forest: input has " + std::to_string(x.size()) + " features, model expects " +
                std::to_string(n_features_));
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return sum / static_cast<double>(trees_.size());
}

std::vector<double> Forest::predict_proba(const Matrix& x, Exec exec) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows));
  if (x.rows > 0 && x.cols != n_features_) predict_proba(x.row(0));  // raises the layout error
  nn::kernels::for_each_index(exec, x.rows, [&](int r) { out[static_cast<std::size_t>(r)] = predict_proba(x.row(r)); });
  return out;
}

void to_json(nlohmann::json& j, const Forest& f) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : f.trees()) {
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(),
                   value = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.high_fraction);
    }
    trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
                     {"high_fraction", value}});
  }
  j = nlohmann::json{{"n_features", f.n_features()}, {"config", f.config()}, {"trees", trees}};
}

Forest forest_from_json(const nlohmann::json& j) {
  const int n_features = j.at("n_features").get<int>();
  auto config = j.at("config").get<ForestConfig>();
  std::vector<Tree> trees;
  for (const auto& jt : j.at("trees")) {
    auto feature = jt.at("feature").get<std::vector<int>>();
    auto threshold = jt.at("threshold").get<std::vector<double>>();
    auto left = jt.at("left").get<std::vector<int>>();
    auto right = jt.at("right").get<std::vector<int>>();
    auto value = jt.at("high_fraction").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n)
      throw Error("forest: malformed tree arrays");
    Tree t;
    for (std::size_t i = 0; i < n; ++i) {
      TreeNode node{feature[i], threshold[i], left[i], right[i], value[i]};
      if (node.feature >= n_features) throw Error("forest: split feature out of range");
      if (node.feature >= 0 && (node.left <= static_cast<int>(i) || node.right <= static_cast<int>(i) ||
                                node.left >= static_cast<int>(n) || node.right >= static_cast<int>(n)))
        throw Error("forest: malformed child index");
      t.nodes.push_back(node);
    }
    trees.push_back(std::move(t));
  }
  if (trees.empty()) throw Error("forest: no trees");
  return Forest(n_features, std::move(trees), config);
}

}  // namespace dropcast::forest
