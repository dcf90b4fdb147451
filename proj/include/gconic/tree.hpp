// SPDX-License-Identifier: MIT
#pragma once

#include <memory>
#include <utility>
#include <vector>

namespace gconic {

/// Values of an F_t-measurable random variable, one per time-t node.
using Level = std::vector<double>;
/// Adapted process: `x[t][i]` is the value at node i of level t, t = 0..T.
using Adapted = std::vector<Level>;
/// Predictable process: `x[t][p]` is the value held over (t-1, t] on the
/// time-(t-1) node p. Entry 0 is unused and left empty.
using Predictable = std::vector<Level>;

inline constexpr double kProbTolerance = 1e-12;

/// Transition probabilities out of every node of one level; entry k lists the
/// child probabilities of node k, so its size is that node's branching.
struct LevelSpec {
  std::vector<std::vector<double>> probabilities;
};

struct TreeSpec {
  std::vector<LevelSpec> levels;
};

class FiltrationTree {
 public:
  static FiltrationTree uniform(int horizon, int branching);
  static FiltrationTree binary(int horizon, double p_up = 0.5);

  int horizon() const { return horizon_; }
  int size(int t) const { return static_cast<int>(parent_[t].size()); }
  int leaves() const { return size(horizon_); }

  int parent(int t, int i) const { return parent_[t][i]; }
  int first_child(int t, int i) const { return first_child_[t][i]; }
  int child_count(int t, int i) const { return child_count_[t][i]; }
  /// One-step probability of moving from the parent into node (t, i).
  double prob(int t, int i) const { return prob_[t][i]; }
  double path_prob(int t, int i) const { return path_prob_[t][i]; }
  const Level& path_probs(int t) const { return path_prob_[t]; }

  /// Index at level s <= t of the ancestor of (t, i).
  int ancestor(int t, int i, int s) const;
  /// Half-open index range at level s >= t of the descendants of (t, i).
  std::pair<int, int> descendants(int t, int i, int s) const;

  /// Views an F_s-measurable variable on level t >= s.
  Level lift(const Level& x, int s, int t) const;
  /// E[X | F_t] for X measurable at level s >= t.
  Level cond_exp(const Level& x, int s, int t) const;

  bool is_binary() const;

  Adapted zeros() const;
  Predictable zeros_predictable() const;
  /// Values of a predictable process at time-t nodes (copied from parents).
  Level at_children(const Predictable& x, int t) const;

 private:
  friend FiltrationTree build_tree(const TreeSpec& spec);
  FiltrationTree() = default;
  void finish();

  int horizon_ = 0;
  std::vector<std::vector<int>> parent_;
  std::vector<std::vector<int>> first_child_;
  std::vector<std::vector<int>> child_count_;
  std::vector<Level> prob_;
  std::vector<Level> path_prob_;
};

/// Validates and builds a tree. Throws EmptyLevel when a level is missing or
/// a node has no children, NonstochasticProbabilities when transition
/// probabilities are not positive or do not sum to one.
FiltrationTree build_tree(const TreeSpec& spec);

using TreePtr = std::shared_ptr<const FiltrationTree>;

/// The driving martingale W on a tree together with Δ⟨W⟩.
class Martingale {
 public:
  /// `increments[t][i]` is ΔW_t at node (t, i); entry 0 is ignored.
  /// Throws NotMartingale if some conditional mean is not zero.
  Martingale(TreePtr tree, Adapted increments);

  const FiltrationTree& tree() const { return *tree_; }
  const TreePtr& tree_ptr() const { return tree_; }
  int horizon() const { return tree_->horizon(); }

  double dw(int t, int i) const { return dw_[t][i]; }
  const Level& increments(int t) const { return dw_[t]; }
  const Adapted& increments() const { return dw_; }
  /// Raw conditional second moment at parent p of level t (may be zero).
  double qv(int t, int p) const { return qv_[t][p]; }
  const Predictable& qv() const { return qv_; }
  /// max |ΔW_t| over the level.
  double sup_abs(int t) const { return sup_[t]; }

  bool independent_increments() const { return independent_; }
  bool predictable_representation() const { return representation_; }
  bool symmetric_walk() const { return symmetric_; }
  bool degenerate() const { return degenerate_; }

 private:
  TreePtr tree_;
  Adapted dw_;
  Predictable qv_;
  std::vector<double> sup_;
  bool independent_ = false;
  bool representation_ = false;
  bool symmetric_ = false;
  bool degenerate_ = false;
};

using MartingalePtr = std::shared_ptr<const Martingale>;

/// ΔW = +1 on the first child and -1 on the second. Requires a binary tree
/// with probability one half on every branch.
Martingale symmetric_random_walk(TreePtr tree);

/// Δ⟨W⟩_t per parent node; throws DegenerateIncrement below 1e-14.
Level quadratic_variation_step(const Martingale& w, int t);

inline constexpr double kMinQuadraticVariation = 1e-14;

}  // namespace gconic
