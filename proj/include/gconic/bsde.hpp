// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gconic/drivers.hpp"
#include "gconic/tree.hpp"

namespace gconic {

/// (Y, Z, M) with M_0 = 0. Z is predictable, indexed like qv().
struct BsdeSolution {
  Adapted y;
  Predictable z;
  Adapted m;
};

/// Backward recursion from Y_T = terminal. A nonzero `shuffle_seed` visits
/// the parents of each level in a random order.
BsdeSolution solve_bsde(const Driver& g, const Martingale& w, const Level& terminal,
                        std::uint64_t shuffle_seed = 0);

/// 𝓔_g[X | 𝓕_t] for X measurable at `level` >= t.
Level g_expectation(const Driver& g, const Martingale& w, const Level& x, int level, int t);

/// 𝓔_g[X | 𝓕_t] at the single node (t, node). Only the subtree of `x` is read.
double g_expectation_at(const Driver& g, const Martingale& w, const Level& x, int level, int t,
                        int node);

/// Y_{u-1} from Y_u in one step; `z_out`, if given, receives Z_u per parent.
Level bsde_step(const Driver& g, const Martingale& w, int u, const Level& y_u,
                Level* z_out = nullptr);

struct OneStepResiduals {
  double identity = 0.0;     // Y_{t-1} - (Y_t + gΔ⟨W⟩ - ZΔW + ΔM)
  double martingale = 0.0;   // E[ΔM | 𝓕_{t-1}]
  double orthogonal = 0.0;   // E[ΔM ΔW | 𝓕_{t-1}]
  double max_abs_m = 0.0;
};

OneStepResiduals check_solution(const Driver& g, const Martingale& w, const BsdeSolution& sol);

struct ComparisonReport {
  bool ordered = true;
  double worst_violation = 0.0;  // max of Y²-Y¹ over all nodes
  int worst_t = -1;
  int worst_node = -1;
  bool strict = true;
  int equality_nodes = 0;        // nodes of the earliest equality set
  int equality_level = -1;
  double worst_strict_gap = 0.0;
};

/// Checks Y¹ ≥ Y² and strictness propagation. Throws PreconditionViolated
/// if Y¹_T ≥ Y²_T, g1 ≥ g2 on the grid or regularity of g1 fails.
ComparisonReport compare_solutions(const Driver& g1, const Driver& g2, const Level& y1_terminal,
                                   const Level& y2_terminal, const Martingale& w,
                                   const std::vector<double>& grid, double tol = 1e-10);

/// The tree reweighted by 1 + x_tΔW_t. Throws MeasureNotEquivalent if some
/// weight is not positive and DriverInvalid for nonlinear drivers.
FiltrationTree extract_linear_measure(const Driver& g, const Martingale& w);

/// Slope process x_t = g(t, 1) if 𝓔_g acts linearly on probes zΔW_t.
std::optional<Predictable> detect_linear_driver(const Driver& g, const Martingale& w,
                                                const std::vector<double>& probes = {1.0, -1.0,
                                                                                     2.0, -3.0,
                                                                                     0.5},
                                                double tol = 1e-10);

}  // namespace gconic
