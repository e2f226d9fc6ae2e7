#ifndef WISEDB_LEARN_HPP
#define WISEDB_LEARN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "wisedb/features.hpp"
#include "wisedb/graph.hpp"

namespace wisedb {

struct TreeParams {
  std::size_t min_leaf = 1;
  int max_depth = 1 << 20;  // effectively unbounded
  bool gain_ratio = true;   // false selects gini impurity decrease
  bool reduced_error_pruning = false;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  Action action{};

  bool is_leaf() const { return feature < 0; }
};

// Binary decision tree over feature vectors, grown top-down with numeric
// splits (booleans ride along as 0/1). Descend left iff value <= threshold.
class DecisionTree {
 public:
  static DecisionTree fit(const std::vector<TrainingSample>& samples,
                          const TreeParams& params = {}) {
    if (samples.empty()) throw ValidationError("cannot fit a tree on an empty sample set");
    const std::size_t width = samples.front().features.size();
    for (const auto& s : samples)
      if (s.features.size() != width)
        throw ValidationError("inconsistent feature vector lengths in training set");

    DecisionTree tree;
    if (params.reduced_error_pruning && samples.size() >= 10) {
      std::vector<std::size_t> order(samples.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::mt19937_64 rng(params.seed);
      std::shuffle(order.begin(), order.end(), rng);
      std::size_t grow_n = order.size() - order.size() / 3;
      std::vector<const TrainingSample*> grow, prune;
      for (std::size_t i = 0; i < order.size(); ++i)
        (i < grow_n ? grow : prune).push_back(&samples[order[i]]);
      tree.build(grow, params);
      tree.reduced_error_prune(prune);
    } else {
      std::vector<const TrainingSample*> all;
      all.reserve(samples.size());
      for (const auto& s : samples) all.push_back(&s);
      tree.build(all, params);
    }
    tree.height_ = tree.subtree_height(0);
    return tree;
  }

  Action predict(const FeatureVector& fv) const {
    if (fv.size() != width_) throw ValidationError("feature vector length mismatch");
    int n = 0;
    while (!nodes_[n].is_leaf()) n = fv[nodes_[n].feature] <= nodes_[n].threshold
                                          ? nodes_[n].left
                                          : nodes_[n].right;
    return nodes_[n].action;
  }

  int height() const { return height_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t feature_count() const { return width_; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["format"] = 1;
    j["feature_count"] = width_;
    j["height"] = height_;
    auto& out = j["nodes"] = nlohmann::ordered_json::array();
    for (const TreeNode& n : nodes_) {
      nlohmann::ordered_json node;
      if (n.is_leaf()) {
        node["action"] = {{"kind", n.action.kind == Action::Kind::kPlace ? "place" : "provision"},
                          {"id", n.action.id}};
      } else {
        node["feature"] = n.feature;
        node["threshold"] = n.threshold;
        node["left"] = n.left;
        node["right"] = n.right;
      }
      out.push_back(std::move(node));
    }
    return j;
  }

  static DecisionTree from_json(const nlohmann::ordered_json& j) {
    if (!j.contains("format") || j.at("format").get<int>() != 1)
      throw ConfigError("unsupported decision tree format");
    DecisionTree tree;
    tree.width_ = j.at("feature_count").get<std::size_t>();
    for (const auto& node : j.at("nodes")) {
      TreeNode n;
      if (node.contains("action")) {
        const auto& a = node.at("action");
        std::string kind = a.at("kind").get<std::string>();
        if (kind != "place" && kind != "provision") throw ConfigError("bad action kind");
        n.action.kind = kind == "place" ? Action::Kind::kPlace : Action::Kind::kProvision;
        n.action.id = a.at("id").get<int>();
      } else {
        n.feature = node.at("feature").get<int>();
        n.threshold = node.at("threshold").get<double>();
        n.left = node.at("left").get<int>();
        n.right = node.at("right").get<int>();
      }
      tree.nodes_.push_back(n);
    }
    if (tree.nodes_.empty()) throw ConfigError("decision tree has no nodes");
    for (const TreeNode& n : tree.nodes_)
      if (!n.is_leaf() && (n.left < 0 || n.right < 0 || n.left >= int(tree.nodes_.size()) ||
                           n.right >= int(tree.nodes_.size())))
        throw ConfigError("decision tree child index out of range");
    tree.height_ = tree.subtree_height(0);
    return tree;
  }

 private:
  using Samples = std::vector<const TrainingSample*>;

  void build(const Samples& samples, const TreeParams& params) {
    width_ = samples.front()->features.size();
    nodes_.clear();
    grow(samples, params, 1);
  }

  static Action majority_label(const Samples& samples) {
    std::map<Action, std::size_t, bool (*)(const Action&, const Action&)> counts(action_less);
    for (const auto* s : samples) counts[s->label]++;
    Action best{};
    std::size_t best_n = 0;
    for (const auto& [a, n] : counts)
      if (n > best_n) {  // first-seen wins ties: map iterates lowest action first
        best = a;
        best_n = n;
      }
    return best;
  }

  static double entropy(const std::map<Action, std::size_t, bool (*)(const Action&, const Action&)>&
                            counts,
                        double n) {
    double h = 0;
    for (const auto& [a, c] : counts) {
      (void)a;
      if (c == 0) continue;
      double p = double(c) / n;
      h -= p * std::log2(p);
    }
    return h;
  }

  static double gini(const std::map<Action, std::size_t, bool (*)(const Action&, const Action&)>&
                         counts,
                     double n) {
    double g = 1;
    for (const auto& [a, c] : counts) {
      (void)a;
      double p = double(c) / n;
      g -= p * p;
    }
    return g;
  }

  int grow(const Samples& samples, const TreeParams& params, int depth) {
    bool pure = true;
    for (const auto* s : samples)
      if (!(s->label == samples.front()->label)) {
        pure = false;
        break;
      }
    if (pure || depth >= params.max_depth || samples.size() < params.min_leaf) {
      nodes_.push_back(TreeNode{-1, 0, -1, -1, majority_label(samples)});
      return int(nodes_.size()) - 1;
    }

    int best_feature = -1;
    double best_threshold = 0;
    double best_score = 1e-12;

    using Counts = std::map<Action, std::size_t, bool (*)(const Action&, const Action&)>;
    Counts total(action_less);
    for (const auto* s : samples) total[s->label]++;
    const double n = double(samples.size());
    const double parent_impurity =
        params.gain_ratio ? entropy(total, n) : gini(total, n);

    std::vector<std::pair<double, Action>> column(samples.size());
    for (std::size_t f = 0; f < width_; ++f) {
      for (std::size_t i = 0; i < samples.size(); ++i)
        column[i] = {samples[i]->features[f], samples[i]->label};
      std::sort(column.begin(), column.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      Counts left(action_less), right = total;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left[column[i].second]++;
        if (--right[column[i].second] == 0) right.erase(column[i].second);
        if (!(column[i].first < column[i + 1].first)) continue;
        double nl = double(i + 1), nr = n - nl;
        double score;
        if (params.gain_ratio) {
          double gain =
              parent_impurity - (nl / n) * entropy(left, nl) - (nr / n) * entropy(right, nr);
          double pl = nl / n, pr = nr / n;
          double split_info = -(pl * std::log2(pl) + pr * std::log2(pr));
          score = split_info > 1e-12 ? gain / split_info : 0;
          if (gain <= 1e-12) score = 0;
        } else {
          score = parent_impurity - (nl / n) * gini(left, nl) - (nr / n) * gini(right, nr);
        }
        double threshold = column[i].first + (column[i + 1].first - column[i].first) / 2;
        if (score > best_score + 1e-15) {
          best_score = score;
          best_feature = int(f);
          best_threshold = threshold;
        }
      }
    }

    if (best_feature < 0) {
      nodes_.push_back(TreeNode{-1, 0, -1, -1, majority_label(samples)});
      return int(nodes_.size()) - 1;
    }

    Samples left, right;
    for (const auto* s : samples)
      (s->features[best_feature] <= best_threshold ? left : right).push_back(s);
    // Degenerate split cannot happen: the threshold lies strictly between
    // two observed values.
    int idx = int(nodes_.size());
    nodes_.push_back(TreeNode{best_feature, best_threshold, -1, -1, Action{}});
    int l = grow(left, params, depth + 1);
    int r = grow(right, params, depth + 1);
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    return idx;
  }

  int subtree_height(int n) const {
    if (nodes_[n].is_leaf()) return 1;
    return 1 + std::max(subtree_height(nodes_[n].left), subtree_height(nodes_[n].right));
  }

  std::size_t accuracy_count(const Samples& samples) const {
    std::size_t ok = 0;
    for (const auto* s : samples)
      if (predict(s->features) == s->label) ok++;
    return ok;
  }

  void reduced_error_prune(const Samples& prune_set) {
    if (prune_set.empty()) return;
    // Bottom-up: replace a subtree with its majority leaf whenever the
    // pruning-set accuracy does not drop.
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].is_leaf()) continue;
        if (!nodes_[nodes_[i].left].is_leaf() || !nodes_[nodes_[i].right].is_leaf()) continue;
        std::size_t before = accuracy_count(prune_set);
        TreeNode saved = nodes_[i];
        // Majority by reach: count which leaf the pruning samples hit.
        // Fall back to the left leaf's action on an empty reach.
        std::size_t left_hits = 0, right_hits = 0;
        for (const auto* s : prune_set) {
          int n = 0;
          while (!nodes_[n].is_leaf() && n != int(i))
            n = s->features[nodes_[n].feature] <= nodes_[n].threshold ? nodes_[n].left
                                                                      : nodes_[n].right;
          if (n != int(i)) continue;
          (s->features[saved.feature] <= saved.threshold ? left_hits : right_hits)++;
        }
        Action collapsed = left_hits >= right_hits ? nodes_[saved.left].action
                                                   : nodes_[saved.right].action;
        nodes_[i] = TreeNode{-1, 0, -1, -1, collapsed};
        if (accuracy_count(prune_set) < before) nodes_[i] = saved;
        else changed = true;
      }
    }
    height_ = subtree_height(0);
  }

  std::vector<TreeNode> nodes_;
  std::size_t width_ = 0;
  int height_ = 0;
};

}  // namespace wisedb

#endif  // WISEDB_LEARN_HPP
