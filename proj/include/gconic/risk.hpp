// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gconic/bsde.hpp"
#include "gconic/drivers.hpp"
#include "gconic/tree.hpp"

namespace gconic {

/// D = (D_0, ..., D_T), adapted.
using DividendStream = Adapted;

/// Σ_{s=from}^T D_s on the leaves.
Level cumulative_from(const FiltrationTree& tree, const DividendStream& d, int from);

/// λ ·_t D: entries before t are zeroed, later ones scaled by the lifted λ.
DividendStream scale_from(const FiltrationTree& tree, const Level& lambda, const DividendStream& d,
                          int t);

/// ρ_t(D) = 𝓔_g[-Σ_{s≥t} D_s | 𝓕_t]. Throws DriverInvalid if g is not regular.
Level risk(const Driver& g, const Martingale& w, const DividendStream& d, int t);

/// γ ln E[exp(-X/γ) | 𝓕_t] for X at `level`.
Level entropic_risk_closed_form(const FiltrationTree& tree, const Level& x, int level, int t,
                                double gamma);

struct AxiomResult {
  std::string name;
  bool passed = true;
  int checks = 0;
  double worst = 0.0;
  std::string witness;
};

struct AxiomReport {
  std::vector<AxiomResult> axioms;
  const AxiomResult& at(const std::string& name) const;
  bool passed(const std::vector<std::string>& names) const;
};

struct AxiomConfig {
  std::uint64_t seed = 0;
  double tol = 1e-10;
};

/// R1 to R7 on the battery. R7 is always evaluated; it is expected to fail
/// for drivers that are not positively homogeneous.
AxiomReport check_dcrm_axioms(const Driver& g, const Martingale& w,
                              const std::vector<DividendStream>& battery,
                              const AxiomConfig& cfg = {});

struct IndexConfig {
  double x_min = 1e-6;
  double x_max = 1e6;
  double tol = 1e-8;
};

/// α_t(D) per node by bisection in x; 0 and +∞ mark the bracket ends.
Level acceptability_index(const DriverFamily& f, const Martingale& w, const DividendStream& d,
                          int t, const IndexConfig& cfg = {});

using StreamPair = std::pair<DividendStream, DividendStream>;

struct DaiConfig {
  std::uint64_t seed = 0;
  IndexConfig index;
  /// Pairs for I6. When empty, pairs are built from the battery by forcing
  /// D_t ≥ 0 ≥ D'_t. Nodes violating the sign condition are skipped.
  std::vector<StreamPair> i6_pairs;
};

/// I1 to I6 plus I5′ (scale invariance) for the index generated by `f`.
AxiomReport check_dai_axioms(const DriverFamily& f, const Martingale& w,
                             const std::vector<DividendStream>& battery, const DaiConfig& cfg = {});

/// {α_t(D) ≥ γ} == {𝓔_{g_γ}[-Σ_{s≥t} D_s | 𝓕_t] ≤ 0}, boundary nodes within
/// the bisection tolerance excepted.
bool level_set_duality(const DriverFamily& f, const Martingale& w, const DividendStream& d, int t,
                       double gamma, const IndexConfig& cfg = {});

}  // namespace gconic
