// SPDX-License-Identifier: MIT
#include "gconic/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gconic/errors.hpp"

namespace gconic {

namespace {

void check_driver(const Driver& g) {
  if (!g.valid()) throw DriverInvalid("driver has no evaluation rule");
}

void step_parent(const Driver& g, const Martingale& w, int u, int p, const Level& y_u,
                 double qv, Level& y_prev, Level* z_out) {
  const auto& tr = w.tree();
  const int b = tr.first_child(u - 1, p);
  const int n = tr.child_count(u - 1, p);
  double e = 0.0, ez = 0.0;
  for (int k = 0; k < n; ++k) {
    const double q = tr.prob(u, b + k);
    e += q * y_u[b + k];
    ez += q * y_u[b + k] * w.dw(u, b + k);
  }
  const double z = ez / qv;
  const Slot s{u, p, qv, w.sup_abs(u)};
  const double gz = g(s, z);
  if (!std::isfinite(gz)) {
    throw DriverInvalid(g.name() + " is not finite at z=" + std::to_string(z));
  }
  y_prev[p] = e + gz * qv;
  if (z_out) (*z_out)[p] = z;
}

}  // namespace

Level bsde_step(const Driver& g, const Martingale& w, int u, const Level& y_u, Level* z_out) {
  check_driver(g);
  const auto& tr = w.tree();
  if (static_cast<int>(y_u.size()) != tr.size(u)) {
    throw LevelMismatch("BSΔE step at level " + std::to_string(u));
  }
  const Level qv = quadratic_variation_step(w, u);
  Level y_prev(tr.size(u - 1));
  if (z_out) z_out->assign(tr.size(u - 1), 0.0);
  for (int p = 0; p < tr.size(u - 1); ++p) step_parent(g, w, u, p, y_u, qv[p], y_prev, z_out);
  return y_prev;
}

BsdeSolution solve_bsde(const Driver& g, const Martingale& w, const Level& terminal,
                        std::uint64_t shuffle_seed) {
  check_driver(g);
  const auto& tr = w.tree();
  const int T = tr.horizon();
  if (static_cast<int>(terminal.size()) != tr.leaves()) {
    throw LevelMismatch("terminal condition has " + std::to_string(terminal.size()) +
                        " values for " + std::to_string(tr.leaves()) + " leaves");
  }
  BsdeSolution sol;
  sol.y.assign(T + 1, {});
  sol.z = tr.zeros_predictable();
  sol.m = tr.zeros();
  sol.y[T] = terminal;
  std::mt19937_64 rng(shuffle_seed);
  for (int u = T; u >= 1; --u) {
    const Level qv = quadratic_variation_step(w, u);
    std::vector<int> order(tr.size(u - 1));
    std::iota(order.begin(), order.end(), 0);
    if (shuffle_seed != 0) std::shuffle(order.begin(), order.end(), rng);
    sol.y[u - 1].assign(tr.size(u - 1), 0.0);
    for (int p : order) step_parent(g, w, u, p, sol.y[u], qv[p], sol.y[u - 1], &sol.z[u]);
  }
  // ΔM_u = -(Y_u - E[Y_u | 𝓕_{u-1}] - Z_uΔW_u)
  for (int u = 1; u <= T; ++u) {
    const Level e = tr.cond_exp(sol.y[u], u, u - 1);
    for (int i = 0; i < tr.size(u); ++i) {
      const int p = tr.parent(u, i);
      const double dm = -(sol.y[u][i] - e[p] - sol.z[u][p] * w.dw(u, i));
      sol.m[u][i] = sol.m[u - 1][p] + dm;
    }
  }
  return sol;
}

Level g_expectation(const Driver& g, const Martingale& w, const Level& x, int level, int t) {
  const auto& tr = w.tree();
  if (t < 0 || t > level || level > tr.horizon() || static_cast<int>(x.size()) != tr.size(level)) {
    throw LevelMismatch("g-expectation of a level-" + std::to_string(level) +
                        " variable onto level " + std::to_string(t));
  }
  Level y = x;
  for (int u = level; u > t; --u) y = bsde_step(g, w, u, y);
  return y;
}

double g_expectation_at(const Driver& g, const Martingale& w, const Level& x, int level, int t,
                        int node) {
  check_driver(g);
  const auto& tr = w.tree();
  if (t < 0 || t > level || level > tr.horizon() || static_cast<int>(x.size()) != tr.size(level) ||
      node < 0 || node >= tr.size(t)) {
    throw LevelMismatch("g-expectation of a level-" + std::to_string(level) +
                        " variable at node (" + std::to_string(t) + "," + std::to_string(node) +
                        ")");
  }
  Level y = x;
  Level prev(y.size());
  for (int u = level; u > t; --u) {
    const auto [lo, hi] = tr.descendants(t, node, u - 1);
    for (int p = lo; p < hi; ++p) {
      const double qv = w.qv(u, p);
      if (!(qv >= kMinQuadraticVariation)) {
        throw DegenerateIncrement("Δ⟨W⟩ = 0 at (" + std::to_string(u) + "," + std::to_string(p) +
                                  ")");
      }
      step_parent(g, w, u, p, y, qv, prev, nullptr);
    }
    std::swap(y, prev);
  }
  return y[node];
}

OneStepResiduals check_solution(const Driver& g, const Martingale& w, const BsdeSolution& sol) {
  const auto& tr = w.tree();
  OneStepResiduals r;
  for (int u = 1; u <= tr.horizon(); ++u) {
    std::vector<double> mean(tr.size(u - 1), 0.0), orth(tr.size(u - 1), 0.0);
    for (int i = 0; i < tr.size(u); ++i) {
      const int p = tr.parent(u, i);
      const double qv = w.qv(u, p);
      const double dm = sol.m[u][i] - sol.m[u - 1][p];
      const Slot s{u, p, qv, w.sup_abs(u)};
      const double rhs = sol.y[u][i] + g(s, sol.z[u][p]) * qv - sol.z[u][p] * w.dw(u, i) + dm;
      r.identity = std::max(r.identity, std::abs(sol.y[u - 1][p] - rhs));
      mean[p] += tr.prob(u, i) * dm;
      orth[p] += tr.prob(u, i) * dm * w.dw(u, i);
      r.max_abs_m = std::max(r.max_abs_m, std::abs(sol.m[u][i]));
    }
    for (std::size_t p = 0; p < mean.size(); ++p) {
      r.martingale = std::max(r.martingale, std::abs(mean[p]));
      r.orthogonal = std::max(r.orthogonal, std::abs(orth[p]));
    }
  }
  return r;
}

ComparisonReport compare_solutions(const Driver& g1, const Driver& g2, const Level& y1_terminal,
                                   const Level& y2_terminal, const Martingale& w,
                                   const std::vector<double>& grid, double tol) {
  const auto& tr = w.tree();
  if (y1_terminal.size() != y2_terminal.size() ||
      static_cast<int>(y1_terminal.size()) != tr.leaves()) {
    throw LevelMismatch("terminal conditions do not match the tree");
  }
  for (int i = 0; i < tr.leaves(); ++i) {
    if (y1_terminal[i] < y2_terminal[i] - tol) {
      throw PreconditionViolated("Y1_T < Y2_T at leaf " + std::to_string(i));
    }
  }
  for (int t = 1; t <= tr.horizon(); ++t) {
    for (int p = 0; p < tr.size(t - 1); ++p) {
      const Slot s = make_slot(w, t, p);
      for (double z : grid) {
        if (g1(s, z) < g2(s, z) - tol) {
          throw PreconditionViolated("g1 < g2 at t=" + std::to_string(t) +
                                     " z=" + std::to_string(z));
        }
      }
    }
  }
  if (!is_regular(g1, w).regular) throw PreconditionViolated("g1 is not regular");

  const BsdeSolution a = solve_bsde(g1, w, y1_terminal);
  const BsdeSolution b = solve_bsde(g2, w, y2_terminal);
  ComparisonReport rep;
  for (int t = 0; t <= tr.horizon(); ++t) {
    for (int i = 0; i < tr.size(t); ++i) {
      const double v = b.y[t][i] - a.y[t][i];
      const double scale = tol * std::max(1.0, std::abs(a.y[t][i]));
      if (v > rep.worst_violation) {
        rep.worst_violation = v;
        rep.worst_t = t;
        rep.worst_node = i;
      }
      if (v > scale) rep.ordered = false;
    }
  }
  for (int t = 0; t <= tr.horizon() && rep.equality_level < 0; ++t) {
    for (int i = 0; i < tr.size(t); ++i) {
      if (std::abs(a.y[t][i] - b.y[t][i]) > tol * std::max(1.0, std::abs(a.y[t][i]))) continue;
      rep.equality_level = t;
      ++rep.equality_nodes;
      for (int s = t; s <= tr.horizon(); ++s) {
        const auto [lo, hi] = tr.descendants(t, i, s);
        for (int j = lo; j < hi; ++j) {
          const double gap = std::abs(a.y[s][j] - b.y[s][j]);
          rep.worst_strict_gap = std::max(rep.worst_strict_gap, gap);
          if (gap > tol * std::max(1.0, std::abs(a.y[s][j]))) rep.strict = false;
        }
      }
    }
  }
  return rep;
}

FiltrationTree extract_linear_measure(const Driver& g, const Martingale& w) {
  check_driver(g);
  if (!g.flags().linear) throw DriverInvalid(g.name() + " is not linear");
  const auto& tr = w.tree();
  TreeSpec spec;
  for (int t = 1; t <= tr.horizon(); ++t) {
    LevelSpec level;
    for (int p = 0; p < tr.size(t - 1); ++p) {
      const Slot s = make_slot(w, t, p);
      const double x = g.slope(s);
      const int b = tr.first_child(t - 1, p);
      std::vector<double> q(tr.child_count(t - 1, p));
      double sum = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) {
        const double weight = 1.0 + x * w.dw(t, b + static_cast<int>(k));
        if (!(weight > 0.0)) {
          throw MeasureNotEquivalent("1 + xΔW = " + std::to_string(weight) + " at (" +
                                     std::to_string(t) + "," + std::to_string(b + k) + ")");
        }
        q[k] = tr.prob(t, b + static_cast<int>(k)) * weight;
        sum += q[k];
      }
      for (double& v : q) v /= sum;
      level.probabilities.push_back(std::move(q));
    }
    spec.levels.push_back(std::move(level));
  }
  return build_tree(spec);
}

std::optional<Predictable> detect_linear_driver(const Driver& g, const Martingale& w,
                                                const std::vector<double>& probes, double tol) {
  const auto& tr = w.tree();
  Predictable x = tr.zeros_predictable();
  for (int t = 1; t <= tr.horizon(); ++t) {
    Level unit = w.increments(t);
    const Level base = g_expectation(g, w, unit, t, t - 1);
    for (double z : probes) {
      Level px = unit;
      for (double& v : px) v *= z;
      const Level val = g_expectation(g, w, px, t, t - 1);
      for (int p = 0; p < tr.size(t - 1); ++p) {
        if (std::abs(val[p] - z * base[p]) > tol * std::max(1.0, std::abs(z * base[p]))) {
          return std::nullopt;
        }
      }
    }
    for (int p = 0; p < tr.size(t - 1); ++p) x[t][p] = base[p] / w.qv(t, p);
  }
  return x;
}

}  // namespace gconic
