// SPDX-License-Identifier: MIT
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gconic/drivers.hpp"
#include "gconic/risk.hpp"
#include "gconic/tree.hpp"

namespace gconic {

enum class Side { Ask, Bid };

const char* side_name(Side s);

struct PriceQuote {
  Side side = Side::Ask;
  double gamma = 0.0;
  std::string family;
  int t = 0;
  Level phi;
  Level value;
};

/// 𝓔_{g_γ}[φ Σ_{s>t} D_s | 𝓕_t].
PriceQuote ask(const DriverFamily& f, double gamma, const Level& phi, const DividendStream& d,
               const Martingale& w, int t);
/// -𝓔_{g_γ}[-φ Σ_{s>t} D_s | 𝓕_t].
PriceQuote bid(const DriverFamily& f, double gamma, const Level& phi, const DividendStream& d,
               const Martingale& w, int t);
PriceQuote quote(Side side, const DriverFamily& f, double gamma, const Level& phi,
                 const DividendStream& d, const Martingale& w, int t);

/// Σ_{s≤t} D_s + price_t(1, D) for every t.
Adapted cumulative_price(Side side, const DriverFamily& f, double gamma, const DividendStream& d,
                         const Martingale& w);

struct ResidualReport {
  double max_residual = 0.0;
  int worst_t = -1;
  int worst_node = -1;
  bool passed = true;
};

/// price_t(D) against price_t(δ_{t+1}(D_{t+1} + price_{t+1}(D))).
ResidualReport time_consistency_check(Side side, const DriverFamily& f, double gamma,
                                      const DividendStream& d, const Martingale& w,
                                      double tol = 1e-10);

/// Cumulative price against price_t(δ_{t+1}(cumulative_{t+1})).
ResidualReport cumulative_consistency_check(Side side, const DriverFamily& f, double gamma,
                                            const DividendStream& d, const Martingale& w,
                                            double tol = 1e-10);

struct OrderingReport {
  bool passed = true;
  double worst = 0.0;  // largest violation, 0 when none
  std::string witness;
};

/// ask(f1, γ1) ≥ bid(f2, γ2) nodewise.
OrderingReport cross_compare(const DriverFamily& f1, double gamma1, const DriverFamily& f2,
                             double gamma2, const DividendStream& d, const Martingale& w, int t,
                             double tol = 1e-10);

/// Ask nondecreasing and bid nonincreasing along increasing γ.
OrderingReport spread_monotonicity(const DriverFamily& f, const std::vector<double>& gammas,
                                   const DividendStream& d, const Martingale& w, int t,
                                   double tol = 1e-10);

struct ImpactReport {
  bool p4_ask = true;
  bool p4_bid = true;
  bool p3_ask = true;
  bool p3_bid = true;
  double worst = 0.0;
  bool passed() const { return p4_ask && p4_bid && p3_ask && p3_bid; }
};

/// Market impact in the share count, and convexity in the stream when
/// `d2` is supplied (mixed with weight `mix` at level t).
ImpactReport market_impact_check(const DriverFamily& f, double gamma, const Level& phi,
                                 const Level& lambda, const DividendStream& d, const Martingale& w,
                                 int t, const DividendStream* d2 = nullptr,
                                 const Level* mix = nullptr, double tol = 1e-10);

struct Agreement {
  std::vector<int> nodes;  // level-t nodes where ask = bid
  Predictable slope;       // zero outside the subtrees of `nodes`
  bool identities_hold = true;
  double worst = 0.0;
};

std::optional<Agreement> agreement_diagnostic(const DriverFamily& f1, double gamma1,
                                              const DriverFamily& f2, double gamma2,
                                              const Level& phi, const DividendStream& d,
                                              const Martingale& w, int t, double tol = 1e-9);

struct SpanningReport {
  bool all_agree = true;
  bool detected = false;
  double worst_reproduction = 0.0;
  int streams = 0;
};

/// ask = bid on every indicator stream after t; if so the extracted linear
/// slope must reproduce both prices.
SpanningReport spanning_agreement_check(const DriverFamily& f1, double gamma1,
                                        const DriverFamily& f2, double gamma2,
                                        const Martingale& w, int t, double tol = 1e-9);

/// The infimum of acceptable cash amounts is the representation value:
/// a + δ acceptable and a - δ not, for each offset δ.
bool essinf_check(Side side, const DriverFamily& f, double gamma, const Level& phi,
                  const DividendStream& d, const Martingale& w, int t,
                  const std::vector<double>& offsets = {1e-3, 1e-2, 1e-1, 1.0},
                  const IndexConfig& cfg = {});

/// The stream paying x at time s only.
DividendStream single_payment(const FiltrationTree& tree, const Level& x, int s);

}  // namespace gconic
