// SPDX-License-Identifier: MIT
// Reference computations written without the library's solvers, plus
// random instance generators shared by the unit and acceptance suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "gconic/tree.hpp"

namespace oracle {

using gconic::Adapted;
using gconic::Level;

/// Explicit path enumeration of a tree: for every leaf, its node index at
/// every level, and its unconditional probability.
struct Paths {
  std::vector<std::vector<int>> node;  // node[leaf][t]
  std::vector<double> prob;
};

inline Paths enumerate(const gconic::FiltrationTree& tr) {
  Paths p;
  const int T = tr.horizon();
  for (int j = 0; j < tr.leaves(); ++j) {
    std::vector<int> path(T + 1);
    path[T] = j;
    double q = 1.0;
    for (int t = T; t >= 1; --t) {
      q *= tr.prob(t, path[t]);
      path[t - 1] = tr.parent(t, path[t]);
    }
    p.node.push_back(std::move(path));
    p.prob.push_back(q);
  }
  return p;
}

/// γ ln E[exp(-X/γ) | 𝓕_t] for a terminal X, by summation over leaves.
inline Level entropic(const gconic::FiltrationTree& tr, const Level& x, int t, double gamma) {
  const Paths p = enumerate(tr);
  Level num(tr.size(t), 0.0), den(tr.size(t), 0.0), shift(tr.size(t), -1e300);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const int i = p.node[j][t];
    shift[i] = std::max(shift[i], -x[j] / gamma);
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    const int i = p.node[j][t];
    num[i] += p.prob[j] * std::exp(-x[j] / gamma - shift[i]);
    den[i] += p.prob[j];
  }
  Level out(tr.size(t));
  for (int i = 0; i < tr.size(t); ++i) out[i] = gamma * (std::log(num[i] / den[i]) + shift[i]);
  return out;
}

/// E_Q[X | 𝓕_t] with path weights Π(1 + x_sΔW_s) relative to ℙ.
inline Level linear_measure_expectation(const gconic::FiltrationTree& tr, const Adapted& dw,
                                        const std::vector<Level>& slope, const Level& x, int t) {
  const Paths p = enumerate(tr);
  const int T = tr.horizon();
  Level num(tr.size(t), 0.0), den(tr.size(t), 0.0);
  for (std::size_t j = 0; j < x.size(); ++j) {
    double q = p.prob[j];
    for (int s = t + 1; s <= T; ++s) q *= 1.0 + slope[s][p.node[j][s - 1]] * dw[s][p.node[j][s]];
    num[p.node[j][t]] += q * x[j];
    den[p.node[j][t]] += q;
  }
  Level out(tr.size(t));
  for (int i = 0; i < tr.size(t); ++i) out[i] = num[i] / den[i];
  return out;
}

/// Walk the book in integer cents; ladder prices are given in cents.
inline std::int64_t walk_book_cents(const std::vector<std::pair<std::int64_t, std::int64_t>>& ladder,
                                    std::int64_t shares) {
  std::int64_t cost = 0;
  for (const auto& [cents, size] : ladder) {
    const std::int64_t q = std::min(shares, size);
    cost += q * cents;
    shares -= q;
    if (shares == 0) break;
  }
  return shares == 0 ? cost : -1;
}

// ---------------------------------------------------------------------------
// generators

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline gconic::TreePtr binary_tree(int horizon) {
  return std::make_shared<const gconic::FiltrationTree>(gconic::FiltrationTree::binary(horizon));
}

inline gconic::MartingalePtr walk(int horizon) {
  return std::make_shared<const gconic::Martingale>(gconic::symmetric_random_walk(binary_tree(horizon)));
}

/// A trinomial or mixed-branching tree with random probabilities and a
/// random zero-mean martingale on it.
inline gconic::MartingalePtr random_martingale(Rng& rng, int horizon, int max_branch = 3) {
  gconic::TreeSpec spec;
  int width = 1;
  for (int t = 1; t <= horizon; ++t) {
    gconic::LevelSpec level;
    int next = 0;
    for (int p = 0; p < width; ++p) {
      const int b = uniform_int(rng, 2, max_branch);
      std::vector<double> q(b);
      double sum = 0.0;
      for (double& v : q) sum += v = uniform(rng, 0.2, 1.0);
      for (double& v : q) v /= sum;
      double err = 1.0;
      for (double v : q) err -= v;
      q[0] += err;
      level.probabilities.push_back(q);
      next += b;
    }
    spec.levels.push_back(level);
    width = next;
  }
  auto tree = std::make_shared<const gconic::FiltrationTree>(gconic::build_tree(spec));
  Adapted dw = tree->zeros();
  for (int t = 1; t <= horizon; ++t) {
    for (int p = 0; p < tree->size(t - 1); ++p) {
      const int b = tree->first_child(t - 1, p), n = tree->child_count(t - 1, p);
      double mean = 0.0;
      for (int k = 0; k < n; ++k) {
        dw[t][b + k] = uniform(rng, -1.0, 1.0);
        mean += tree->prob(t, b + k) * dw[t][b + k];
      }
      for (int k = 0; k < n; ++k) dw[t][b + k] -= mean;
    }
  }
  return std::make_shared<const gconic::Martingale>(tree, dw);
}

inline Level random_level(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  Level x(n);
  for (double& v : x) v = uniform(rng, lo, hi);
  return x;
}

/// Dividend stream with D₀ = 0.
inline Adapted random_stream(Rng& rng, const gconic::FiltrationTree& tr, double lo = -1.0,
                             double hi = 1.0) {
  Adapted d = tr.zeros();
  for (int t = 1; t <= tr.horizon(); ++t) d[t] = random_level(rng, tr.size(t), lo, hi);
  return d;
}

}  // namespace oracle
