// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gconic/drivers.hpp"
#include "gconic/pricing.hpp"
#include "gconic/risk.hpp"
#include "gconic/tree.hpp"

namespace gconic {

enum class Flavor { Conic, Tabulated, Direct };
/// Long positions earn D^ask, short positions owe D^bid.
enum class Leg { Long, Short };

const char* flavor_name(Flavor f);

struct BookLevel {
  double price = 0.0;
  double size = 0.0;
};

/// Walk-the-book cost of φ shares against a price ladder.
class OrderBook {
 public:
  /// Ask ladders must ascend in price and bid ladders descend; sizes > 0.
  OrderBook(Side side, std::vector<BookLevel> levels);

  Side side() const { return side_; }
  const std::vector<BookLevel>& levels() const { return levels_; }
  double depth() const { return depth_; }

  /// Throws DepthExceeded beyond the total size.
  double cost(double phi) const;
  /// Exact cost in cents for whole shares; prices are rounded to cents.
  std::int64_t cost_cents(std::int64_t shares) const;

 private:
  Side side_;
  std::vector<BookLevel> levels_;
  double depth_ = 0.0;
};

OrderBook order_book_operator(Side side, std::vector<BookLevel> levels);

/// P(side, leg, t, node, φ) for φ ≥ 0.
using PriceFn = std::function<double(Side, Leg, int, int, double)>;

struct Security {
  std::string id;
  Flavor flavor = Flavor::Direct;
  DividendStream d_ask;
  DividendStream d_bid;
  PriceFn price;

  const DividendStream& dividends(Leg leg) const { return leg == Leg::Long ? d_ask : d_bid; }
};

/// Operators 𝓔_{g_γ} on the subtree, γ_ask for the ask side and γ_bid for
/// the bid side. Prices vanish at T.
Security conic_security(std::string id, MartingalePtr w, const DriverFamily& family,
                        double gamma_ask, double gamma_bid, DividendStream d_ask,
                        DividendStream d_bid);

/// Homogeneous operators φ·table[t][node], shared by both legs.
Security direct_security(std::string id, const FiltrationTree& tree, Adapted ask_table,
                         Adapted bid_table, DividendStream d_ask, DividendStream d_bid);

/// Time-invariant ladders before T, zero at T.
Security tabulated_security(std::string id, const FiltrationTree& tree, OrderBook ask_book,
                            OrderBook bid_book, DividendStream d_ask, DividendStream d_bid);

/// Default payments per leaf: C_t = 1{τ≤t}δ - κΣ_{s=1}^t 1{s<τ} and
/// D_t = ΔC_t. `tau[j]` is the default time on leaf j, or none. Throws
/// ConfigInvalid unless τ is a stopping time with values in 1..T.
DividendStream cds_dividends(const FiltrationTree& tree, const std::vector<std::optional<int>>& tau,
                             double protection, double spread);

class MarketModel {
 public:
  explicit MarketModel(MartingalePtr w);

  /// Throws LevelMismatch on stream shape errors and ParamOutOfRange if D₀ ≠ 0.
  void add(Security s);

  const Martingale& martingale() const { return *w_; }
  const MartingalePtr& martingale_ptr() const { return w_; }
  const FiltrationTree& tree() const { return w_->tree(); }
  int size() const { return static_cast<int>(securities_.size()); }
  const Security& security(int k) const { return securities_[k]; }

  /// Price of φ units of security k's `leg` stream at (t, node).
  double price(int k, Side side, Leg leg, int t, int node, double phi) const;

 private:
  MartingalePtr w_;
  std::vector<Security> securities_;
};

/// Bank and risky legs, all predictable with entry 0 unused.
struct TradingStrategy {
  Predictable bank;
  std::vector<Predictable> longs;
  std::vector<Predictable> shorts;
};

TradingStrategy zero_strategy(const MarketModel& m);

/// Throws StrategyInvalid on shape errors or negative risky holdings.
void check_strategy(const TradingStrategy& s, const MarketModel& m);

/// Ṽ_t, t < T.
Level setup_cost(const TradingStrategy& s, const MarketModel& m, int t);
/// V_t, t ≥ 1.
Level liquidation_value(const TradingStrategy& s, const MarketModel& m, int t);

struct SelfFinancingReport {
  double max_residual = 0.0;
  int worst_t = -1;
  int worst_node = -1;
  bool passed = true;
};

/// Rebalancing residuals for t = 1..T-1; the time-0 purchase is the
/// initial investment.
SelfFinancingReport validate_self_financing(const TradingStrategy& s, const MarketModel& m,
                                            double tol = 1e-10);

/// Bank leg from t_start on so that Ṽ_{t_start} = initial and every later
/// rebalancing is self-financing. Bank entries up to t_start are zeroed.
TradingStrategy complete_bank_leg(const TradingStrategy& partial, const MarketModel& m,
                                  int t_start = 0, double initial = 0.0);

/// θ with risky legs λφ + (1-λ)ψ after t and a completed bank leg.
TradingStrategy convex_combination(const TradingStrategy& phi, const TradingStrategy& psi,
                                   const Level& lambda, const MarketModel& m, int t);

struct MarketAxiomReport {
  bool m5 = true;  // ask convex, bid concave in φ
  bool m6 = true;  // netting inequality
  int checks = 0;
  double worst = 0.0;
  std::string witness;
};

MarketAxiomReport check_market_axioms(const MarketModel& m, std::uint64_t seed = 0,
                                      int samples = 8, double tol = 1e-10);

struct SearchConfig {
  std::uint64_t seed = 0;
  int grid_points = 21;
  int starts = 8;
  /// Upper bound L of every risky leg; 0 picks it from the payoff scale.
  double bound = 0.0;
  int max_dimension = 64;
  int max_sweeps = 40;
  double refine_tol = 1e-10;
  /// false restricts the hedging set to the zero cashflow.
  bool hedge = true;
  /// Additional starting points, indexed by level-t node.
  std::vector<std::vector<std::vector<double>>> extra_starts;
};

struct HedgeResult {
  Level value;
  Level unhedged;
  TradingStrategy strategy;
  Adapted consumption;
  /// Optimal risky legs per level-t node, usable as extra starts.
  std::vector<std::vector<double>> optimum;
  double bound = 0.0;
  long evaluations = 0;
};

/// min over 𝓗(t) of 𝓔_{g_γ}[φΣ_{s>t}D_s - Σ_{s>t}H_s | 𝓕_t].
HedgeResult hedged_ask(const DriverFamily& f, double gamma, const Level& phi,
                       const DividendStream& d, const MarketModel& m, int t,
                       const SearchConfig& cfg = {});
/// max over 𝓗(t) of -𝓔_{g_γ}[-Σ_{s>t}H_s - φΣ_{s>t}D_s | 𝓕_t].
HedgeResult hedged_bid(const DriverFamily& f, double gamma, const Level& phi,
                       const DividendStream& d, const MarketModel& m, int t,
                       const SearchConfig& cfg = {});

struct ArbitrageResult {
  bool found = false;
  int node = -1;
  TradingStrategy certificate;
  Level terminal;  // V_T on the leaves under `node`, zero elsewhere
  double min_terminal = 0.0;
  double max_terminal = 0.0;
  double residual = 0.0;
  long evaluations = 0;
  double bound = 0.0;
};

/// Heuristic search over 𝓢(t); a certificate is exact, absence is not proven.
ArbitrageResult find_arbitrage(const MarketModel& m, int t, const SearchConfig& cfg = {});

struct ExhaustiveReport {
  long combinations = 0;
  bool found = false;
  ArbitrageResult best;
};

/// Every strategy of 𝓢(t) whose risky legs take values in `values`.
ExhaustiveReport exhaustive_arbitrage_search(const MarketModel& m, int t,
                                             const std::vector<double>& values,
                                             int max_dimension = 64);

/// Checks V_T ≥ -1e-12 everywhere, > 1e-9 somewhere and the self-financing
/// residual, from scratch.
bool validate_certificate(const TradingStrategy& s, const MarketModel& m, int t, int node);

enum class NgdVerdict { GoodDealFound, NoneFound };

const char* verdict_name(NgdVerdict v);

struct NgdResult {
  NgdVerdict verdict = NgdVerdict::NoneFound;
  Level rho;  // smallest ρ_t(H) found per node
  TradingStrategy worst;
  bool certificate_valid = false;
  std::optional<ArbitrageResult> arbitrage;
  bool consistent = true;  // NONE_FOUND together with no arbitrage found
  long evaluations = 0;
};

NgdResult check_ngd(const DriverFamily& f, double gamma, const MarketModel& m, int t,
                    const SearchConfig& cfg = {});

struct HedgedMonotonicity {
  bool ask_ordered = true;
  bool bid_ordered = true;
  double worst = 0.0;
  HedgeResult ask_low, ask_high, bid_low, bid_high;
  bool passed() const { return ask_ordered && bid_ordered; }
};

/// â^{γ1} ≤ â^{γ2} and b̂^{γ1} ≥ b̂^{γ2} for γ1 ≤ γ2.
HedgedMonotonicity hedged_level_monotonicity(const DriverFamily& f, double gamma1, double gamma2,
                                             const Level& phi, const DividendStream& d,
                                             const MarketModel& m, int t,
                                             const SearchConfig& cfg = {}, double tol = 1e-9);

struct HedgedConvexity {
  bool ask_convex = true;
  bool bid_concave = true;
  double worst = 0.0;
  bool passed() const { return ask_convex && bid_concave; }
};

HedgedConvexity hedged_convexity_check(const DriverFamily& f, double gamma,
                                       const DividendStream& d1, const DividendStream& d2,
                                       const Level& lambda, const MarketModel& m, int t,
                                       const SearchConfig& cfg = {}, double tol = 1e-9);

struct ProbeReport {
  bool seller_arbitrage = false;
  bool buyer_arbitrage = false;
  double seller_best_min = 0.0;
  double buyer_best_min = 0.0;
  bool passed() const { return !seller_arbitrage && !buyer_arbitrage; }
};

/// Selling φD at â (or buying at b̂) and trading in the market must not
/// lock in a riskless profit.
ProbeReport extended_cashflow_probe(const Level& phi, const DividendStream& d,
                                    const MarketModel& m, int t, const HedgeResult& ask_side,
                                    const HedgeResult& bid_side, const SearchConfig& cfg = {});

/// The leg bound used when cfg.bound is zero.
double default_bound(const Level& phi, const DividendStream& d, const MarketModel& m, int t);

}  // namespace gconic
