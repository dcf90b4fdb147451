// SPDX-License-Identifier: MIT
#include "gconic/tree.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gconic/errors.hpp"

namespace gconic {

FiltrationTree build_tree(const TreeSpec& spec) {
  if (spec.levels.empty()) throw EmptyLevel("tree needs at least one period");
  FiltrationTree tree;
  tree.horizon_ = static_cast<int>(spec.levels.size());
  const int T = tree.horizon_;
  tree.parent_.assign(T + 1, {});
  tree.first_child_.assign(T + 1, {});
  tree.child_count_.assign(T + 1, {});
  tree.prob_.assign(T + 1, {});
  tree.parent_[0] = {-1};
  tree.prob_[0] = {1.0};
  for (int t = 0; t < T; ++t) {
    const auto& probs = spec.levels[t].probabilities;
    const int n = tree.size(t);
    if (static_cast<int>(probs.size()) != n) {
      throw EmptyLevel("level " + std::to_string(t) + " describes " +
                       std::to_string(probs.size()) + " nodes, expected " +
                       std::to_string(n));
    }
    for (int i = 0; i < n; ++i) {
      const auto& p = probs[i];
      if (p.empty()) {
        throw EmptyLevel("node (" + std::to_string(t) + "," +
                         std::to_string(i) + ") has no children");
      }
      double sum = 0.0;
      for (double q : p) {
        if (!(q > 0.0) || !std::isfinite(q)) {
          throw NonstochasticProbabilities(
              "non-positive probability at node (" + std::to_string(t) + "," +
              std::to_string(i) + ")");
        }
        sum += q;
      }
      if (std::abs(sum - 1.0) > kProbTolerance) {
        throw NonstochasticProbabilities(
            "probabilities at node (" + std::to_string(t) + "," +
            std::to_string(i) + ") sum to " + std::to_string(sum));
      }
      tree.first_child_[t].push_back(static_cast<int>(tree.parent_[t + 1].size()));
      tree.child_count_[t].push_back(static_cast<int>(p.size()));
      for (double q : p) {
        tree.parent_[t + 1].push_back(i);
        tree.prob_[t + 1].push_back(q);
      }
    }
  }
  tree.finish();
  return tree;
}

void FiltrationTree::finish() {
  const int T = horizon_;
  first_child_[T].assign(size(T), -1);
  child_count_[T].assign(size(T), 0);
  path_prob_.assign(T + 1, {});
  path_prob_[0] = {1.0};
  for (int t = 1; t <= T; ++t) {
    path_prob_[t].resize(size(t));
    for (int i = 0; i < size(t); ++i) {
      path_prob_[t][i] = path_prob_[t - 1][parent_[t][i]] * prob_[t][i];
    }
  }
}

FiltrationTree FiltrationTree::uniform(int horizon, int branching) {
  TreeSpec spec;
  int n = 1;
  for (int t = 0; t < horizon; ++t) {
    LevelSpec level;
    level.probabilities.assign(n, std::vector<double>(branching, 1.0 / branching));
    spec.levels.push_back(std::move(level));
    n *= branching;
  }
  return build_tree(spec);
}

FiltrationTree FiltrationTree::binary(int horizon, double p_up) {
  TreeSpec spec;
  int n = 1;
  for (int t = 0; t < horizon; ++t) {
    LevelSpec level;
    level.probabilities.assign(n, {p_up, 1.0 - p_up});
    spec.levels.push_back(std::move(level));
    n *= 2;
  }
  return build_tree(spec);
}

int FiltrationTree::ancestor(int t, int i, int s) const {
  while (t > s) {
    i = parent_[t][i];
    --t;
  }
  return i;
}

std::pair<int, int> FiltrationTree::descendants(int t, int i, int s) const {
  int lo = i, hi = i + 1;
  for (int u = t; u < s; ++u) {
    const int last = hi - 1;
    lo = first_child_[u][lo];
    hi = first_child_[u][last] + child_count_[u][last];
  }
  return {lo, hi};
}

Level FiltrationTree::lift(const Level& x, int s, int t) const {
  if (s > t || static_cast<int>(x.size()) != size(s)) {
    throw LevelMismatch("cannot lift level " + std::to_string(s) + " to " +
                        std::to_string(t));
  }
  Level cur = x;
  for (int u = s + 1; u <= t; ++u) {
    Level next(size(u));
    for (int i = 0; i < size(u); ++i) next[i] = cur[parent_[u][i]];
    cur.swap(next);
  }
  return cur;
}

Level FiltrationTree::cond_exp(const Level& x, int s, int t) const {
  if (t > s || t < 0 || static_cast<int>(x.size()) != size(s)) {
    throw LevelMismatch("conditional expectation from level " +
                        std::to_string(s) + " onto " + std::to_string(t));
  }
  Level cur = x;
  for (int u = s; u > t; --u) {
    Level prev(size(u - 1), 0.0);
    for (int p = 0; p < size(u - 1); ++p) {
      const int b = first_child_[u - 1][p];
      double acc = 0.0;
      for (int k = 0; k < child_count_[u - 1][p]; ++k) {
        acc += prob_[u][b + k] * cur[b + k];
      }
      prev[p] = acc;
    }
    cur.swap(prev);
  }
  return cur;
}

bool FiltrationTree::is_binary() const {
  for (int t = 0; t < horizon_; ++t) {
    for (int c : child_count_[t]) {
      if (c != 2) return false;
    }
  }
  return true;
}

Adapted FiltrationTree::zeros() const {
  Adapted x(horizon_ + 1);
  for (int t = 0; t <= horizon_; ++t) x[t].assign(size(t), 0.0);
  return x;
}

Predictable FiltrationTree::zeros_predictable() const {
  Predictable x(horizon_ + 1);
  for (int t = 1; t <= horizon_; ++t) x[t].assign(size(t - 1), 0.0);
  return x;
}

Level FiltrationTree::at_children(const Predictable& x, int t) const {
  Level out(size(t));
  for (int i = 0; i < size(t); ++i) out[i] = x[t][parent_[t][i]];
  return out;
}

Martingale::Martingale(TreePtr tree, Adapted increments)
    : tree_(std::move(tree)), dw_(std::move(increments)) {
  const auto& tr = *tree_;
  const int T = tr.horizon();
  if (static_cast<int>(dw_.size()) != T + 1) {
    throw LevelMismatch("martingale needs increments for levels 1.." +
                        std::to_string(T));
  }
  dw_[0].assign(1, 0.0);
  qv_.assign(T + 1, {});
  sup_.assign(T + 1, 0.0);
  independent_ = true;
  symmetric_ = tr.is_binary();
  bool binary = tr.is_binary();
  for (int t = 1; t <= T; ++t) {
    if (static_cast<int>(dw_[t].size()) != tr.size(t)) {
      throw LevelMismatch("increment count mismatch at level " + std::to_string(t));
    }
    qv_[t].assign(tr.size(t - 1), 0.0);
    for (int p = 0; p < tr.size(t - 1); ++p) {
      const int b = tr.first_child(t - 1, p);
      double mean = 0.0, second = 0.0, scale = 0.0;
      for (int k = 0; k < tr.child_count(t - 1, p); ++k) {
        const double d = dw_[t][b + k];
        const double q = tr.prob(t, b + k);
        mean += q * d;
        second += q * d * d;
        scale = std::max(scale, std::abs(d));
        sup_[t] = std::max(sup_[t], std::abs(d));
        if (symmetric_ && (q != 0.5 || std::abs(std::abs(d) - 1.0) > 0.0)) symmetric_ = false;
      }
      if (std::abs(mean) > kProbTolerance * std::max(1.0, scale)) {
        throw NotMartingale("conditional mean of increment at (" +
                            std::to_string(t - 1) + "," + std::to_string(p) +
                            ") is " + std::to_string(mean));
      }
      qv_[t][p] = second;
      if (second < kMinQuadraticVariation) degenerate_ = true;
      if (p > 0 && std::abs(second - qv_[t][0]) > kProbTolerance * std::max(1.0, second)) {
        independent_ = false;
      }
    }
  }
  if (symmetric_) {
    for (int t = 1; t <= T && symmetric_; ++t) {
      for (int p = 0; p < tr.size(t - 1); ++p) {
        const int b = tr.first_child(t - 1, p);
        if (dw_[t][b] != 1.0 || dw_[t][b + 1] != -1.0) {
          symmetric_ = false;
          break;
        }
      }
    }
  }
  representation_ = binary && !degenerate_;
}

Martingale symmetric_random_walk(TreePtr tree) {
  const auto& tr = *tree;
  if (!tr.is_binary()) throw NotBinaryTree("symmetric random walk needs a binary tree");
  Adapted inc(tr.horizon() + 1);
  inc[0] = {0.0};
  for (int t = 1; t <= tr.horizon(); ++t) {
    inc[t].resize(tr.size(t));
    for (int p = 0; p < tr.size(t - 1); ++p) {
      const int b = tr.first_child(t - 1, p);
      if (tr.prob(t, b) != 0.5 || tr.prob(t, b + 1) != 0.5) {
        throw NotSymmetric("branch probabilities at (" + std::to_string(t - 1) +
                           "," + std::to_string(p) + ") are not one half");
      }
      inc[t][b] = 1.0;
      inc[t][b + 1] = -1.0;
    }
  }
  return Martingale(std::move(tree), std::move(inc));
}

Level quadratic_variation_step(const Martingale& w, int t) {
  if (t < 1 || t > w.horizon()) {
    throw LevelMismatch("quadratic variation step needs 1 <= t <= T");
  }
  const Level& q = w.qv()[t];
  for (std::size_t p = 0; p < q.size(); ++p) {
    if (q[p] < kMinQuadraticVariation) {
      throw DegenerateIncrement("Δ⟨W⟩ vanishes at (" + std::to_string(t - 1) +
                                "," + std::to_string(p) + ")");
    }
  }
  return q;
}

}  // namespace gconic
