// SPDX-License-Identifier: MIT
#include <gtest/gtest.h>

#include "gconic/errors.hpp"
#include "gconic/tree.hpp"
#include "support/oracles.hpp"

using namespace gconic;

TEST(FiltrationTree, BinaryShape) {
  const auto tr = FiltrationTree::binary(3);
  EXPECT_EQ(tr.horizon(), 3);
  EXPECT_EQ(tr.leaves(), 8);
  EXPECT_TRUE(tr.is_binary());
  EXPECT_EQ(tr.parent(3, 5), 2);
  EXPECT_EQ(tr.first_child(1, 1), 2);
  EXPECT_DOUBLE_EQ(tr.path_prob(3, 7), 0.125);
  const auto [lo, hi] = tr.descendants(1, 1, 3);
  EXPECT_EQ(lo, 4);
  EXPECT_EQ(hi, 8);
  EXPECT_EQ(tr.ancestor(3, 6, 1), 1);
}

TEST(FiltrationTree, UniformBranching) {
  const auto tr = FiltrationTree::uniform(2, 3);
  EXPECT_EQ(tr.leaves(), 9);
  EXPECT_FALSE(tr.is_binary());
  double total = 0.0;
  for (int j = 0; j < tr.leaves(); ++j) total += tr.path_prob(2, j);
  EXPECT_NEAR(total, 1.0, 1e-15);
}

TEST(FiltrationTree, RejectsBadProbabilities) {
  TreeSpec spec;
  spec.levels.push_back({{{0.5, 0.6}}});
  EXPECT_THROW(build_tree(spec), NonstochasticProbabilities);
  spec.levels[0].probabilities = {{1.0, 0.0}};
  EXPECT_THROW(build_tree(spec), NonstochasticProbabilities);
  spec.levels[0].probabilities = {{}};
  EXPECT_THROW(build_tree(spec), EmptyLevel);
}

TEST(FiltrationTree, ConditionalExpectationAgainstPaths) {
  oracle::Rng rng(7);
  const auto w = oracle::random_martingale(rng, 3);
  const auto& tr = w->tree();
  const Level x = oracle::random_level(rng, tr.leaves());
  const auto paths = oracle::enumerate(tr);
  for (int t = 0; t <= 3; ++t) {
    const Level e = tr.cond_exp(x, 3, t);
    Level num(tr.size(t), 0.0), den(tr.size(t), 0.0);
    for (int j = 0; j < tr.leaves(); ++j) {
      num[paths.node[j][t]] += paths.prob[j] * x[j];
      den[paths.node[j][t]] += paths.prob[j];
    }
    for (int i = 0; i < tr.size(t); ++i) EXPECT_NEAR(e[i], num[i] / den[i], 1e-14);
  }
  EXPECT_THROW(tr.cond_exp(x, 2, 1), LevelMismatch);
}

TEST(Martingale, SymmetricWalkFlags) {
  const auto w = oracle::walk(3);
  EXPECT_TRUE(w->symmetric_walk());
  EXPECT_TRUE(w->independent_increments());
  EXPECT_TRUE(w->predictable_representation());
  EXPECT_DOUBLE_EQ(w->qv(2, 1), 1.0);
  EXPECT_DOUBLE_EQ(w->dw(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(w->dw(1, 1), -1.0);
}

TEST(Martingale, RejectsNonzeroMean) {
  auto tree = oracle::binary_tree(1);
  Adapted dw = tree->zeros();
  dw[1] = {1.0, -0.5};
  EXPECT_THROW(Martingale(tree, dw), NotMartingale);
}

TEST(Martingale, WalkNeedsFairBinaryTree) {
  auto skew = std::make_shared<const FiltrationTree>(FiltrationTree::binary(2, 0.3));
  EXPECT_THROW(symmetric_random_walk(skew), NotSymmetric);
  auto tri = std::make_shared<const FiltrationTree>(FiltrationTree::uniform(2, 3));
  EXPECT_THROW(symmetric_random_walk(tri), NotBinaryTree);
}

TEST(Martingale, DegenerateIncrementDetected) {
  auto tree = oracle::binary_tree(2);
  Adapted dw = tree->zeros();
  dw[1] = {1.0, -1.0};
  dw[2] = {1.0, -1.0, 0.0, 0.0};
  const Martingale w(tree, dw);
  EXPECT_TRUE(w.degenerate());
  EXPECT_THROW(quadratic_variation_step(w, 2), DegenerateIncrement);
  EXPECT_NO_THROW(quadratic_variation_step(w, 1));
}
