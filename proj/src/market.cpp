// SPDX-License-Identifier: MIT
#include "gconic/market.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

#include "gconic/bsde.hpp"
#include "gconic/errors.hpp"

namespace gconic {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCertificateFloor = -1e-12;
constexpr double kCertificateGain = 1e-9;
constexpr double kResidualTol = 1e-10;
constexpr double kGoodDealTol = 1e-9;

std::string at(int t, int i) { return "(" + std::to_string(t) + "," + std::to_string(i) + ")"; }

void check_stream(const FiltrationTree& tr, const DividendStream& d, const std::string& what) {
  if (static_cast<int>(d.size()) != tr.horizon() + 1) {
    throw LevelMismatch(what + " does not span the horizon");
  }
  for (int t = 0; t <= tr.horizon(); ++t) {
    if (static_cast<int>(d[t].size()) != tr.size(t)) {
      throw LevelMismatch(what + " has the wrong size at level " + std::to_string(t));
    }
  }
}

// Prices of one search, keyed on the exact bits of φ.
class PriceCache {
 public:
  explicit PriceCache(const MarketModel& m) : m_(m) {}

  double operator()(int k, Side side, Leg leg, int t, int node, double phi) {
    if (phi == 0.0) return 0.0;
    const Key key{k, side == Side::Ask, leg == Leg::Long, t, node, std::bit_cast<std::uint64_t>(phi)};
    auto it = map_.find(key);
    if (it != map_.end()) return it->second;
    const double v = m_.price(k, side, leg, t, node, phi);
    map_.emplace(key, v);
    return v;
  }

 private:
  struct Key {
    int k;
    bool ask;
    bool long_leg;
    int t;
    int node;
    std::uint64_t bits;
    bool operator==(const Key&) const = default;
  };
  struct Hash {
    std::size_t operator()(const Key& x) const {
      std::uint64_t h = x.bits;
      for (std::uint64_t v : {static_cast<std::uint64_t>(x.k), static_cast<std::uint64_t>(x.ask),
                              static_cast<std::uint64_t>(x.long_leg),
                              static_cast<std::uint64_t>(x.t), static_cast<std::uint64_t>(x.node)}) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      }
      return static_cast<std::size_t>(h);
    }
  };
  const MarketModel& m_;
  std::unordered_map<Key, double, Hash> map_;
};

struct DirectPricer {
  const MarketModel& m;
  double operator()(int k, Side side, Leg leg, int t, int node, double phi) const {
    return phi == 0.0 ? 0.0 : m.price(k, side, leg, t, node, phi);
  }
};

double held(const Predictable& x, int u, int parent) { return u >= 1 ? x[u][parent] : 0.0; }

// Cash spent at (u, j) moving the risky legs from φ_u to φ_{u+1}.
template <class P>
double trade_cost(P& price, const TradingStrategy& s, int u, int j, int parent) {
  double c = 0.0;
  for (std::size_t k = 0; k < s.longs.size(); ++k) {
    const int kk = static_cast<int>(k);
    const double dl = s.longs[k][u + 1][j] - held(s.longs[k], u, parent);
    c += dl >= 0.0 ? price(kk, Side::Ask, Leg::Long, u, j, dl)
                   : -price(kk, Side::Bid, Leg::Long, u, j, -dl);
    const double ds = s.shorts[k][u + 1][j] - held(s.shorts[k], u, parent);
    c += ds >= 0.0 ? -price(kk, Side::Bid, Leg::Short, u, j, ds)
                   : price(kk, Side::Ask, Leg::Short, u, j, -ds);
  }
  return c;
}

double dividends(const MarketModel& m, const TradingStrategy& s, int u, int j, int parent) {
  if (u < 1) return 0.0;
  double c = 0.0;
  for (int k = 0; k < m.size(); ++k) {
    c += s.longs[k][u][parent] * m.security(k).d_ask[u][j] -
         s.shorts[k][u][parent] * m.security(k).d_bid[u][j];
  }
  return c;
}

template <class P>
double risky_setup(P& price, const TradingStrategy& s, int u, int j) {
  double c = 0.0;
  for (std::size_t k = 0; k < s.longs.size(); ++k) {
    const int kk = static_cast<int>(k);
    c += price(kk, Side::Ask, Leg::Long, u, j, s.longs[k][u + 1][j]) -
         price(kk, Side::Bid, Leg::Short, u, j, s.shorts[k][u + 1][j]);
  }
  return c;
}

template <class P>
double liquidation(P& price, const MarketModel& m, const TradingStrategy& s, int u, int j) {
  const int p = m.tree().parent(u, j);
  double v = s.bank[u][p] + dividends(m, s, u, j, p);
  for (int k = 0; k < m.size(); ++k) {
    v += price(k, Side::Bid, Leg::Long, u, j, s.longs[k][u][p]) -
         price(k, Side::Ask, Leg::Short, u, j, s.shorts[k][u][p]);
  }
  return v;
}

std::pair<int, int> span(const FiltrationTree& tr, int t, int node, int u) {
  if (node < 0) return {0, tr.size(u)};
  return tr.descendants(t, node, u);
}

// Bank leg on the subtree of (t, node), or on every level-t node when node < 0.
template <class P>
void fill_bank(P& price, const MarketModel& m, TradingStrategy& s, int t, int node,
               double initial) {
  const auto& tr = m.tree();
  for (int u = t; u < tr.horizon(); ++u) {
    const auto [lo, hi] = span(tr, t, node, u);
    for (int j = lo; j < hi; ++j) {
      if (u == t) {
        s.bank[u + 1][j] = initial - risky_setup(price, s, u, j);
      } else {
        const int p = tr.parent(u, j);
        s.bank[u + 1][j] =
            s.bank[u][p] + dividends(m, s, u, j, p) - trade_cost(price, s, u, j, p);
      }
    }
  }
}

struct LegRef {
  int k;
  Leg leg;
  int u;
  int parent;
};

// Risky legs of 𝓢(t) restricted to one level-t node.
class NodeProblem {
 public:
  NodeProblem(const MarketModel& m, int t, int node, bool hedge)
      : m_(m), t_(t), node_(node), cache_(m), s_(zero_strategy(m)),
        vt_(m.tree().leaves(), 0.0) {
    const auto& tr = m.tree();
    leaves_ = tr.descendants(t, node, tr.horizon());
    if (!hedge) return;
    for (int k = 0; k < m.size(); ++k) {
      for (Leg leg : {Leg::Long, Leg::Short}) {
        std::vector<int> group;
        for (int u = t + 1; u <= tr.horizon(); ++u) {
          const auto [lo, hi] = tr.descendants(t, node, u - 1);
          for (int p = lo; p < hi; ++p) {
            group.push_back(static_cast<int>(legs_.size()));
            legs_.push_back({k, leg, u, p});
          }
        }
        if (!group.empty()) groups_.push_back(std::move(group));
      }
    }
  }

  int dimension() const { return static_cast<int>(legs_.size()); }
  const std::vector<std::vector<int>>& groups() const { return groups_; }
  std::pair<int, int> leaves() const { return leaves_; }
  const Level& terminal() const { return vt_; }
  const TradingStrategy& strategy() const { return s_; }

  /// False when some operator is undefined at the requested size.
  bool realize(const std::vector<double>& x) {
    for (std::size_t n = 0; n < legs_.size(); ++n) {
      const LegRef& r = legs_[n];
      auto& leg = r.leg == Leg::Long ? s_.longs[r.k] : s_.shorts[r.k];
      leg[r.u][r.parent] = x[n];
    }
    try {
      fill_bank(cache_, m_, s_, t_, node_, 0.0);
      if (t_ < m_.tree().horizon()) {
        for (int j = leaves_.first; j < leaves_.second; ++j) {
          vt_[j] = liquidation(cache_, m_, s_, m_.tree().horizon(), j);
        }
      }
    } catch (const DepthExceeded&) {
      return false;
    }
    return true;
  }

  std::vector<double> extract(const TradingStrategy& s) const {
    std::vector<double> x(legs_.size());
    for (std::size_t n = 0; n < legs_.size(); ++n) {
      const LegRef& r = legs_[n];
      x[n] = (r.leg == Leg::Long ? s.longs[r.k] : s.shorts[r.k])[r.u][r.parent];
    }
    return x;
  }

  /// Copies the realized subtree into `out`.
  void export_to(TradingStrategy& out) const {
    const auto& tr = m_.tree();
    for (int u = t_ + 1; u <= tr.horizon(); ++u) {
      const auto [lo, hi] = tr.descendants(t_, node_, u - 1);
      for (int p = lo; p < hi; ++p) {
        out.bank[u][p] = s_.bank[u][p];
        for (int k = 0; k < m_.size(); ++k) {
          out.longs[k][u][p] = s_.longs[k][u][p];
          out.shorts[k][u][p] = s_.shorts[k][u][p];
        }
      }
    }
  }

 private:
  const MarketModel& m_;
  int t_;
  int node_;
  PriceCache cache_;
  TradingStrategy s_;
  Level vt_;
  std::pair<int, int> leaves_;
  std::vector<LegRef> legs_;
  std::vector<std::vector<int>> groups_;
};

struct Optimum {
  std::vector<double> x;
  double value = kInf;
  long evaluations = 0;
};

bool better(double a, double b) {
  if (!std::isfinite(b)) return a < b;
  return a < b - 1e-14 * std::max(1.0, std::abs(b));
}

using Objective = std::function<double(const std::vector<double>&)>;

// Grid coordinate descent with block moves, then pattern refinement.
Optimum local_search(const Objective& f, std::vector<double> x, double bound,
                     const std::vector<std::vector<int>>& groups, const SearchConfig& cfg) {
  Optimum o;
  const int n = static_cast<int>(x.size());
  const int pts = std::max(2, cfg.grid_points);
  std::vector<double> grid(pts);
  for (int j = 0; j < pts; ++j) grid[j] = bound * j / (pts - 1);
  auto eval = [&](const std::vector<double>& y) {
    ++o.evaluations;
    return f(y);
  };
  double fx = eval(x);
  for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    bool improved = false;
    for (int c = 0; c < n; ++c) {
      const double keep = x[c];
      double best = keep;
      for (double v : grid) {
        if (v == keep) continue;
        x[c] = v;
        const double fv = eval(x);
        if (better(fv, fx)) {
          fx = fv;
          best = v;
          improved = true;
        }
      }
      x[c] = best;
    }
    for (const auto& g : groups) {
      for (double v : grid) {
        std::vector<double> y = x;
        for (int c : g) y[c] = v;
        if (y == x) continue;
        const double fy = eval(y);
        if (better(fy, fx)) {
          fx = fy;
          x = std::move(y);
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  double h = bound / (pts - 1) / 2.0;
  const double floor = cfg.refine_tol * std::max(1.0, bound);
  for (int pass = 0; h > floor && pass < 4000; ++pass) {
    bool improved = false;
    for (int c = 0; c < n; ++c) {
      for (double dir : {1.0, -1.0}) {
        const double v = std::clamp(x[c] + dir * h, 0.0, bound);
        if (v == x[c]) continue;
        const double keep = x[c];
        x[c] = v;
        const double fv = eval(x);
        if (better(fv, fx)) {
          fx = fv;
          improved = true;
        } else {
          x[c] = keep;
        }
      }
    }
    for (const auto& g : groups) {
      for (double dir : {1.0, -1.0}) {
        std::vector<double> y = x;
        for (int c : g) y[c] = std::clamp(y[c] + dir * h, 0.0, bound);
        if (y == x) continue;
        const double fy = eval(y);
        if (better(fy, fx)) {
          fx = fy;
          x = std::move(y);
          improved = true;
        }
      }
    }
    if (!improved) h /= 2.0;
  }
  o.x = std::move(x);
  o.value = fx;
  return o;
}

Optimum minimize(const Objective& f, int n, double bound,
                 const std::vector<std::vector<int>>& groups, const SearchConfig& cfg,
                 const std::vector<std::vector<double>>& extra) {
  std::vector<std::vector<double>> starts;
  starts.emplace_back(n, 0.0);
  if (n > 0) {
    const int pts = std::max(2, cfg.grid_points);
    for (int s = 1; s < cfg.starts; ++s) {
      std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(s));
      std::uniform_int_distribution<int> pick(0, pts - 1);
      std::vector<double> x(n);
      for (double& v : x) v = bound * pick(rng) / (pts - 1);
      starts.push_back(std::move(x));
    }
  }
  for (const auto& e : extra) {
    if (static_cast<int>(e.size()) != n) continue;
    std::vector<double> x(n);
    for (int c = 0; c < n; ++c) x[c] = std::clamp(e[c], 0.0, std::max(bound, e[c]));
    starts.push_back(std::move(x));
  }
  Optimum best;
  long evals = 0;
  for (const auto& x0 : starts) {
    // Extra starts may lie beyond the grid; widen the box to keep them feasible.
    double b = bound;
    for (double v : x0) b = std::max(b, v);
    Optimum o = local_search(f, x0, b, groups, cfg);
    evals += o.evaluations;
    if (best.x.empty() || better(o.value, best.value)) best = std::move(o);
  }
  best.evaluations = evals;
  return best;
}

void check_dimension(const NodeProblem& p, const SearchConfig& cfg) {
  if (p.dimension() > cfg.max_dimension) {
    throw InstanceTooLarge("strategy dimension " + std::to_string(p.dimension()) + " exceeds " +
                           std::to_string(cfg.max_dimension));
  }
}

void check_level(const MarketModel& m, int t) {
  if (t < 0 || t > m.tree().horizon()) throw LevelMismatch("level " + std::to_string(t));
}

double subtree_mean(const FiltrationTree& tr, const Level& v, int t, int node) {
  const auto [lo, hi] = tr.descendants(t, node, tr.horizon());
  double e = 0.0;
  for (int j = lo; j < hi; ++j) e += tr.path_prob(tr.horizon(), j) * v[j];
  return e / tr.path_prob(t, node);
}

// Larger is better: E[V_T] when V_T ≥ 0, a heavy penalty on the worst loss otherwise.
double arbitrage_score(const FiltrationTree& tr, const Level& v, int t, int node) {
  const auto [lo, hi] = tr.descendants(t, node, tr.horizon());
  double mn = kInf;
  for (int j = lo; j < hi; ++j) mn = std::min(mn, v[j]);
  if (mn < kCertificateFloor) return 1e3 * mn;
  return subtree_mean(tr, v, t, node);
}

std::vector<std::vector<double>> starts_for(const SearchConfig& cfg, int node) {
  if (node < static_cast<int>(cfg.extra_starts.size())) return cfg.extra_starts[node];
  return {};
}

enum class Goal { Ask, Bid };

HedgeResult hedged(Goal goal, const DriverFamily& f, double gamma, const Level& phi,
                   const DividendStream& d, const MarketModel& m, int t,
                   const SearchConfig& cfg) {
  const auto& tr = m.tree();
  const auto& w = m.martingale();
  const int T = tr.horizon();
  check_level(m, t);
  check_stream(tr, d, "dividend stream");
  const Side side = goal == Goal::Ask ? Side::Ask : Side::Bid;
  HedgeResult r;
  r.unhedged = quote(side, f, gamma, phi, d, w, t).value;
  r.strategy = zero_strategy(m);
  r.consumption = tr.zeros();
  r.value.assign(tr.size(t), 0.0);
  r.optimum.assign(tr.size(t), {});
  r.bound = cfg.bound > 0.0 ? cfg.bound : default_bound(phi, d, m, t);
  const Driver g = f.at(gamma);
  const Level payoff = cumulative_from(tr, d, t + 1);
  const Level phi_leaves = tr.lift(phi, t, T);
  for (int i = 0; i < tr.size(t); ++i) {
    NodeProblem prob(m, t, i, cfg.hedge);
    check_dimension(prob, cfg);
    const auto [lo, hi] = prob.leaves();
    Level x(tr.leaves(), 0.0);
    const Objective obj = [&](const std::vector<double>& legs) {
      if (!prob.realize(legs)) return kInf;
      const Level& vt = prob.terminal();
      for (int j = lo; j < hi; ++j) {
        const double claim = phi_leaves[j] * payoff[j];
        x[j] = goal == Goal::Ask ? claim - vt[j] : -vt[j] - claim;
      }
      return g_expectation_at(g, w, x, T, t, i);
    };
    const Optimum o =
        minimize(obj, prob.dimension(), r.bound, prob.groups(), cfg, starts_for(cfg, i));
    prob.realize(o.x);
    prob.export_to(r.strategy);
    r.optimum[i] = o.x;
    r.value[i] = goal == Goal::Ask ? o.value : -o.value;
    r.evaluations += o.evaluations;
  }
  return r;
}

// Best arbitrage candidate below (t, node) for a terminal shift `offset`
// added to V_T on the subtree leaves.
struct NodeArbitrage {
  Optimum opt;
  TradingStrategy strategy;
  Level terminal;
};

NodeArbitrage search_node(const MarketModel& m, int t, int node, const SearchConfig& cfg,
                          double bound, const Level* offset,
                          const std::vector<std::vector<double>>& extra) {
  const auto& tr = m.tree();
  NodeProblem prob(m, t, node, true);
  check_dimension(prob, cfg);
  const auto [lo, hi] = prob.leaves();
  Level v(tr.leaves(), 0.0);
  const Objective obj = [&](const std::vector<double>& legs) {
    if (!prob.realize(legs)) return kInf;
    for (int j = lo; j < hi; ++j) v[j] = prob.terminal()[j] + (offset ? (*offset)[j] : 0.0);
    return -arbitrage_score(tr, v, t, node);
  };
  NodeArbitrage out;
  out.opt = minimize(obj, prob.dimension(), bound, prob.groups(), cfg, extra);
  prob.realize(out.opt.x);
  out.strategy = zero_strategy(m);
  prob.export_to(out.strategy);
  out.terminal.assign(tr.leaves(), 0.0);
  for (int j = lo; j < hi; ++j) {
    out.terminal[j] = prob.terminal()[j] + (offset ? (*offset)[j] : 0.0);
  }
  return out;
}

bool is_riskless_profit(const FiltrationTree& tr, const Level& v, int t, int node, double* mn,
                        double* mx) {
  const auto [lo, hi] = tr.descendants(t, node, tr.horizon());
  double a = kInf, b = -kInf;
  for (int j = lo; j < hi; ++j) {
    a = std::min(a, v[j]);
    b = std::max(b, v[j]);
  }
  if (mn) *mn = a;
  if (mx) *mx = b;
  return a >= kCertificateFloor && b > kCertificateGain;
}

Level full_terminal(const TradingStrategy& s, const MarketModel& m) {
  return m.tree().horizon() >= 1 ? liquidation_value(s, m, m.tree().horizon())
                                 : Level(m.tree().leaves(), 0.0);
}

}  // namespace

// ---------------------------------------------------------------------------

const char* flavor_name(Flavor f) {
  switch (f) {
    case Flavor::Conic: return "conic";
    case Flavor::Tabulated: return "tabulated";
    case Flavor::Direct: return "direct";
  }
  return "?";
}

const char* verdict_name(NgdVerdict v) {
  return v == NgdVerdict::GoodDealFound ? "GOOD_DEAL_FOUND" : "NONE_FOUND";
}

OrderBook::OrderBook(Side side, std::vector<BookLevel> levels)
    : side_(side), levels_(std::move(levels)) {
  if (levels_.empty()) throw ParamOutOfRange("order book ladder is empty");
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    if (!(levels_[k].size > 0.0)) throw ParamOutOfRange("ladder sizes must be positive");
    if (k > 0) {
      const bool sorted = side_ == Side::Ask ? levels_[k].price > levels_[k - 1].price
                                             : levels_[k].price < levels_[k - 1].price;
      if (!sorted) {
        throw ParamOutOfRange(side_ == Side::Ask ? "ask ladder must ascend"
                                                 : "bid ladder must descend");
      }
    }
    depth_ += levels_[k].size;
  }
}

double OrderBook::cost(double phi) const {
  if (!(phi >= 0.0)) throw ParamOutOfRange("share count must be nonnegative");
  if (phi > depth_ * (1.0 + 1e-12)) {
    throw DepthExceeded("order of " + std::to_string(phi) + " exceeds depth " +
                        std::to_string(depth_));
  }
  double left = phi, c = 0.0;
  for (const auto& l : levels_) {
    if (left <= 0.0) break;
    const double q = std::min(left, l.size);
    c += q * l.price;
    left -= q;
  }
  return c;
}

std::int64_t OrderBook::cost_cents(std::int64_t shares) const {
  if (shares < 0) throw ParamOutOfRange("share count must be nonnegative");
  std::int64_t left = shares, c = 0;
  for (const auto& l : levels_) {
    if (left == 0) break;
    const std::int64_t size = std::llround(l.size);
    const std::int64_t q = std::min(left, size);
    c += q * std::llround(l.price * 100.0);
    left -= q;
  }
  if (left > 0) {
    throw DepthExceeded("order of " + std::to_string(shares) + " exceeds depth " +
                        std::to_string(depth_));
  }
  return c;
}

OrderBook order_book_operator(Side side, std::vector<BookLevel> levels) {
  return OrderBook(side, std::move(levels));
}

Security conic_security(std::string id, MartingalePtr w, const DriverFamily& family,
                        double gamma_ask, double gamma_bid, DividendStream d_ask,
                        DividendStream d_bid) {
  if (!(gamma_ask > 0.0) || !(gamma_bid > 0.0)) {
    throw LevelNonpositive("conic security " + id + " needs positive levels");
  }
  const auto& tr = w->tree();
  check_stream(tr, d_ask, id + " D^ask");
  check_stream(tr, d_bid, id + " D^bid");
  struct State {
    MartingalePtr w;
    Driver ask, bid;
    // Σ_{s>t} D_s on the leaves, per leg and t
    std::vector<Level> sums[2];
  };
  auto st = std::make_shared<State>();
  st->w = w;
  st->ask = family.at(gamma_ask);
  st->bid = family.at(gamma_bid);
  for (int t = 0; t <= tr.horizon(); ++t) {
    st->sums[0].push_back(cumulative_from(tr, d_ask, t + 1));
    st->sums[1].push_back(cumulative_from(tr, d_bid, t + 1));
  }
  Security s;
  s.id = std::move(id);
  s.flavor = Flavor::Conic;
  s.d_ask = std::move(d_ask);
  s.d_bid = std::move(d_bid);
  s.price = [st](Side side, Leg leg, int t, int node, double phi) {
    const auto& tr = st->w->tree();
    if (t >= tr.horizon() || phi == 0.0) return 0.0;
    const Level& sum = st->sums[leg == Leg::Long ? 0 : 1][t];
    const double sign = side == Side::Ask ? 1.0 : -1.0;
    Level x(sum.size(), 0.0);
    const auto [lo, hi] = tr.descendants(t, node, tr.horizon());
    for (int j = lo; j < hi; ++j) x[j] = sign * phi * sum[j];
    const Driver& g = side == Side::Ask ? st->ask : st->bid;
    return sign * g_expectation_at(g, *st->w, x, tr.horizon(), t, node);
  };
  return s;
}

Security direct_security(std::string id, const FiltrationTree& tree, Adapted ask_table,
                         Adapted bid_table, DividendStream d_ask, DividendStream d_bid) {
  check_stream(tree, ask_table, id + " ask table");
  check_stream(tree, bid_table, id + " bid table");
  check_stream(tree, d_ask, id + " D^ask");
  check_stream(tree, d_bid, id + " D^bid");
  auto tables = std::make_shared<std::pair<Adapted, Adapted>>(std::move(ask_table),
                                                              std::move(bid_table));
  Security s;
  s.id = std::move(id);
  s.flavor = Flavor::Direct;
  s.d_ask = std::move(d_ask);
  s.d_bid = std::move(d_bid);
  s.price = [tables](Side side, Leg, int t, int node, double phi) {
    return phi * (side == Side::Ask ? tables->first : tables->second)[t][node];
  };
  return s;
}

Security tabulated_security(std::string id, const FiltrationTree& tree, OrderBook ask_book,
                            OrderBook bid_book, DividendStream d_ask, DividendStream d_bid) {
  if (ask_book.side() != Side::Ask || bid_book.side() != Side::Bid) {
    throw ParamOutOfRange("order books are given as (ask, bid)");
  }
  check_stream(tree, d_ask, id + " D^ask");
  check_stream(tree, d_bid, id + " D^bid");
  auto books = std::make_shared<std::pair<OrderBook, OrderBook>>(std::move(ask_book),
                                                                 std::move(bid_book));
  const int horizon = tree.horizon();
  Security s;
  s.id = std::move(id);
  s.flavor = Flavor::Tabulated;
  s.d_ask = std::move(d_ask);
  s.d_bid = std::move(d_bid);
  s.price = [books, horizon](Side side, Leg, int t, int, double phi) {
    if (t >= horizon) return 0.0;
    return (side == Side::Ask ? books->first : books->second).cost(phi);
  };
  return s;
}

DividendStream cds_dividends(const FiltrationTree& tree, const std::vector<std::optional<int>>& tau,
                             double protection, double spread) {
  const int T = tree.horizon();
  if (static_cast<int>(tau.size()) != tree.leaves()) {
    throw ConfigInvalid("tau", "expected one default time per leaf");
  }
  for (const auto& v : tau) {
    if (v && (*v < 1 || *v > T)) throw ConfigInvalid("tau", "default time outside 1..T");
  }
  // {τ ≤ t} must be decided at every level-t node.
  for (int t = 1; t <= T; ++t) {
    for (int i = 0; i < tree.size(t); ++i) {
      const auto [lo, hi] = tree.descendants(t, i, T);
      auto stopped = [&](int j) { return tau[j] && *tau[j] <= t; };
      for (int j = lo + 1; j < hi; ++j) {
        if (stopped(j) != stopped(lo) || (stopped(lo) && *tau[j] != *tau[lo])) {
          throw ConfigInvalid("tau", "not a stopping time at node " + at(t, i));
        }
      }
    }
  }
  auto cumulative = [&](int t, int i) {
    const int j = tree.descendants(t, i, T).first;
    const int stop = tau[j] ? *tau[j] : T + 1;
    const double paid = stop <= t ? protection : 0.0;
    const int premiums = std::min(t, stop - 1);
    return paid - spread * premiums;
  };
  DividendStream d = tree.zeros();
  for (int t = 1; t <= T; ++t) {
    for (int i = 0; i < tree.size(t); ++i) {
      d[t][i] = cumulative(t, i) - cumulative(t - 1, tree.parent(t, i));
    }
  }
  return d;
}

MarketModel::MarketModel(MartingalePtr w) : w_(std::move(w)) {}

void MarketModel::add(Security s) {
  check_stream(tree(), s.d_ask, s.id + " D^ask");
  check_stream(tree(), s.d_bid, s.id + " D^bid");
  if (s.d_ask[0][0] != 0.0 || s.d_bid[0][0] != 0.0) {
    throw ParamOutOfRange(s.id + " pays a dividend at time 0");
  }
  if (!s.price) throw ParamOutOfRange(s.id + " has no pricing operator");
  securities_.push_back(std::move(s));
}

double MarketModel::price(int k, Side side, Leg leg, int t, int node, double phi) const {
  if (!(phi >= 0.0)) throw ParamOutOfRange("share count must be nonnegative");
  return securities_[k].price(side, leg, t, node, phi);
}

TradingStrategy zero_strategy(const MarketModel& m) {
  TradingStrategy s;
  s.bank = m.tree().zeros_predictable();
  s.longs.assign(m.size(), s.bank);
  s.shorts.assign(m.size(), s.bank);
  return s;
}

void check_strategy(const TradingStrategy& s, const MarketModel& m) {
  const auto& tr = m.tree();
  auto shape = [&](const Predictable& x, bool nonnegative, const std::string& what) {
    if (static_cast<int>(x.size()) != tr.horizon() + 1) {
      throw StrategyInvalid(what + " does not span the horizon");
    }
    for (int u = 1; u <= tr.horizon(); ++u) {
      if (static_cast<int>(x[u].size()) != tr.size(u - 1)) {
        throw StrategyInvalid(what + " is not predictable at " + std::to_string(u));
      }
      for (double v : x[u]) {
        if (!std::isfinite(v) || (nonnegative && v < 0.0)) {
          throw StrategyInvalid(what + " has an invalid holding at " + std::to_string(u));
        }
      }
    }
  };
  if (static_cast<int>(s.longs.size()) != m.size() ||
      static_cast<int>(s.shorts.size()) != m.size()) {
    throw StrategyInvalid("one long and one short leg per security expected");
  }
  shape(s.bank, false, "bank leg");
  for (int k = 0; k < m.size(); ++k) {
    shape(s.longs[k], true, "long leg of " + m.security(k).id);
    shape(s.shorts[k], true, "short leg of " + m.security(k).id);
  }
}

Level setup_cost(const TradingStrategy& s, const MarketModel& m, int t) {
  check_strategy(s, m);
  if (t < 0 || t >= m.tree().horizon()) throw LevelMismatch("set-up cost needs t < T");
  DirectPricer price{m};
  Level v(m.tree().size(t));
  for (int j = 0; j < m.tree().size(t); ++j) v[j] = s.bank[t + 1][j] + risky_setup(price, s, t, j);
  return v;
}

Level liquidation_value(const TradingStrategy& s, const MarketModel& m, int t) {
  check_strategy(s, m);
  if (t < 1 || t > m.tree().horizon()) throw LevelMismatch("liquidation value needs t ≥ 1");
  DirectPricer price{m};
  Level v(m.tree().size(t));
  for (int j = 0; j < m.tree().size(t); ++j) v[j] = liquidation(price, m, s, t, j);
  return v;
}

SelfFinancingReport validate_self_financing(const TradingStrategy& s, const MarketModel& m,
                                            double tol) {
  check_strategy(s, m);
  const auto& tr = m.tree();
  DirectPricer price{m};
  SelfFinancingReport r;
  for (int u = 1; u < tr.horizon(); ++u) {
    for (int j = 0; j < tr.size(u); ++j) {
      const int p = tr.parent(u, j);
      const double lhs = s.bank[u + 1][j] - s.bank[u][p] + trade_cost(price, s, u, j, p);
      const double res = std::abs(lhs - dividends(m, s, u, j, p));
      if (res > r.max_residual) {
        r.max_residual = res;
        r.worst_t = u;
        r.worst_node = j;
      }
    }
  }
  r.passed = r.max_residual < tol;
  return r;
}

TradingStrategy complete_bank_leg(const TradingStrategy& partial, const MarketModel& m,
                                  int t_start, double initial) {
  check_strategy(partial, m);
  if (t_start < 0 || t_start >= std::max(1, m.tree().horizon())) {
    throw LevelMismatch("bank leg completion from level " + std::to_string(t_start));
  }
  TradingStrategy s = partial;
  for (int u = 1; u <= t_start; ++u) std::fill(s.bank[u].begin(), s.bank[u].end(), 0.0);
  DirectPricer price{m};
  fill_bank(price, m, s, t_start, -1, initial);
  return s;
}

TradingStrategy convex_combination(const TradingStrategy& phi, const TradingStrategy& psi,
                                   const Level& lambda, const MarketModel& m, int t) {
  check_strategy(phi, m);
  check_strategy(psi, m);
  const auto& tr = m.tree();
  if (static_cast<int>(lambda.size()) != tr.size(t)) throw LevelMismatch("λ must live on level t");
  TradingStrategy th = zero_strategy(m);
  for (int u = t + 1; u <= tr.horizon(); ++u) {
    for (int p = 0; p < tr.size(u - 1); ++p) {
      const double l = lambda[tr.ancestor(u - 1, p, t)];
      if (l < 0.0 || l > 1.0) throw ParamOutOfRange("λ must lie in [0,1]");
      for (int k = 0; k < m.size(); ++k) {
        th.longs[k][u][p] = l * phi.longs[k][u][p] + (1.0 - l) * psi.longs[k][u][p];
        th.shorts[k][u][p] = l * phi.shorts[k][u][p] + (1.0 - l) * psi.shorts[k][u][p];
      }
    }
  }
  return complete_bank_leg(th, m, t, 0.0);
}

MarketAxiomReport check_market_axioms(const MarketModel& m, std::uint64_t seed, int samples,
                                      double tol) {
  const auto& tr = m.tree();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> share(0.0, 3.0), unit(0.0, 1.0);
  MarketAxiomReport r;
  auto fail = [&](bool& flag, double gap, const std::string& where) {
    if (gap > r.worst) {
      r.worst = gap;
      r.witness = where;
    }
    if (gap > tol) flag = false;
  };
  for (int k = 0; k < m.size(); ++k) {
    for (Leg leg : {Leg::Long, Leg::Short}) {
      for (int t = 0; t < tr.horizon(); ++t) {
        for (int i = 0; i < tr.size(t); ++i) {
          for (int n = 0; n < samples; ++n) {
            const double a = share(rng), b = share(rng), l = unit(rng);
            const double mid = l * a + (1.0 - l) * b;
            auto P = [&](Side side, double x) { return m.price(k, side, leg, t, i, x); };
            const std::string where = m.security(k).id + " at " + at(t, i);
            try {
              const double pa = P(Side::Ask, a), pb = P(Side::Ask, b), pm = P(Side::Ask, mid);
              const double qa = P(Side::Bid, a), qb = P(Side::Bid, b), qm = P(Side::Bid, mid);
              auto rel = [](double gap, double ref) { return gap / std::max(1.0, std::abs(ref)); };
              fail(r.m5, rel(pm - l * pa - (1.0 - l) * pb, pm), "ask convexity " + where);
              fail(r.m5, rel(l * qa + (1.0 - l) * qb - qm, qm), "bid concavity " + where);
              // a long φ¹ = a netted against a short φ² = -b
              const double theta = l * a - (1.0 - l) * b;
              const double lhs = l * pa - (1.0 - l) * qb;
              const double rhs = theta >= 0.0 ? P(Side::Ask, theta) : -P(Side::Bid, -theta);
              fail(r.m6, rel(rhs - lhs, lhs), "netting " + where);
              r.checks += 3;
            } catch (const DepthExceeded&) {
            }
          }
        }
      }
    }
  }
  return r;
}

double default_bound(const Level& phi, const DividendStream& d, const MarketModel& m, int t) {
  const auto& tr = m.tree();
  double claim = 0.0;
  if (t < tr.horizon()) {
    const Level sum = cumulative_from(tr, d, t + 1);
    for (double v : sum) claim = std::max(claim, std::abs(v));
  }
  double phimax = 0.0;
  for (double v : phi) phimax = std::max(phimax, v);
  double scale = 0.0;
  for (int k = 0; k < m.size(); ++k) {
    for (Leg leg : {Leg::Long, Leg::Short}) {
      if (t < tr.horizon()) {
        for (double v : cumulative_from(tr, m.security(k).dividends(leg), t + 1)) {
          scale = std::max(scale, std::abs(v));
        }
      }
      for (int i = 0; i < tr.size(t); ++i) {
        try {
          scale = std::max(scale, std::abs(m.price(k, Side::Ask, leg, t, i, 1.0)));
        } catch (const DepthExceeded&) {
        }
      }
    }
  }
  const double ratio = scale > 0.0 ? phimax * claim / scale : 1.0;
  return 2.0 * std::max(1.0, ratio);
}

HedgeResult hedged_ask(const DriverFamily& f, double gamma, const Level& phi,
                       const DividendStream& d, const MarketModel& m, int t,
                       const SearchConfig& cfg) {
  return hedged(Goal::Ask, f, gamma, phi, d, m, t, cfg);
}

HedgeResult hedged_bid(const DriverFamily& f, double gamma, const Level& phi,
                       const DividendStream& d, const MarketModel& m, int t,
                       const SearchConfig& cfg) {
  return hedged(Goal::Bid, f, gamma, phi, d, m, t, cfg);
}

bool validate_certificate(const TradingStrategy& s, const MarketModel& m, int t, int node) {
  const auto& tr = m.tree();
  check_strategy(s, m);
  if (t >= tr.horizon()) return false;
  for (int u = 1; u <= t; ++u) {
    for (int p = 0; p < tr.size(u - 1); ++p) {
      for (int k = 0; k < m.size(); ++k) {
        if (s.longs[k][u][p] != 0.0 || s.shorts[k][u][p] != 0.0) return false;
      }
      if (s.bank[u][p] != 0.0) return false;
    }
  }
  if (std::abs(setup_cost(s, m, t)[node]) > kResidualTol) return false;
  if (!validate_self_financing(s, m, kResidualTol).passed) return false;
  return is_riskless_profit(tr, full_terminal(s, m), t, node, nullptr, nullptr);
}

ArbitrageResult find_arbitrage(const MarketModel& m, int t, const SearchConfig& cfg) {
  check_level(m, t);
  const auto& tr = m.tree();
  ArbitrageResult r;
  r.bound = cfg.bound > 0.0 ? cfg.bound : 1.0;
  r.certificate = zero_strategy(m);
  r.terminal.assign(tr.leaves(), 0.0);
  if (t >= tr.horizon()) return r;
  for (int i = 0; i < tr.size(t); ++i) {
    NodeArbitrage a = search_node(m, t, i, cfg, r.bound, nullptr, starts_for(cfg, i));
    r.evaluations += a.opt.evaluations;
    if (r.found) continue;
    double mn = 0.0, mx = 0.0;
    if (!is_riskless_profit(tr, a.terminal, t, i, &mn, &mx)) continue;
    if (!validate_certificate(a.strategy, m, t, i)) continue;
    r.found = true;
    r.node = i;
    r.certificate = a.strategy;
    r.terminal = a.terminal;
    r.min_terminal = mn;
    r.max_terminal = mx;
    r.residual = validate_self_financing(a.strategy, m).max_residual;
  }
  return r;
}

ExhaustiveReport exhaustive_arbitrage_search(const MarketModel& m, int t,
                                             const std::vector<double>& values,
                                             int max_dimension) {
  check_level(m, t);
  const auto& tr = m.tree();
  ExhaustiveReport rep;
  rep.best.certificate = zero_strategy(m);
  rep.best.terminal.assign(tr.leaves(), 0.0);
  if (t >= tr.horizon() || values.empty()) return rep;
  for (double v : values) {
    if (!(v >= 0.0)) throw ParamOutOfRange("grid values must be nonnegative");
  }
  const int base = static_cast<int>(values.size());
  for (int i = 0; i < tr.size(t); ++i) {
    NodeProblem prob(m, t, i, true);
    if (prob.dimension() > max_dimension) {
      throw InstanceTooLarge("strategy dimension " + std::to_string(prob.dimension()));
    }
    const int n = prob.dimension();
    std::vector<int> digit(n, 0);
    std::vector<double> x(n, values[0]);
    for (;;) {
      ++rep.combinations;
      double mn = 0.0, mx = 0.0;
      if (prob.realize(x) && is_riskless_profit(tr, prob.terminal(), t, i, &mn, &mx)) {
        TradingStrategy s = zero_strategy(m);
        prob.export_to(s);
        if (!rep.found && validate_certificate(s, m, t, i)) {
          rep.found = true;
          rep.best.found = true;
          rep.best.node = i;
          rep.best.certificate = s;
          rep.best.terminal = prob.terminal();
          rep.best.min_terminal = mn;
          rep.best.max_terminal = mx;
        }
      }
      int c = 0;
      while (c < n && ++digit[c] == base) {
        digit[c] = 0;
        x[c] = values[0];
        ++c;
      }
      if (c == n) break;
      x[c] = values[digit[c]];
    }
  }
  return rep;
}

NgdResult check_ngd(const DriverFamily& f, double gamma, const MarketModel& m, int t,
                    const SearchConfig& cfg) {
  check_level(m, t);
  if (!(gamma > 0.0)) throw LevelNonpositive("γ = " + std::to_string(gamma));
  const auto& tr = m.tree();
  const auto& w = m.martingale();
  const int T = tr.horizon();
  const Driver g = f.at(gamma);
  const double bound = cfg.bound > 0.0 ? cfg.bound : 1.0;
  NgdResult r;
  r.rho.assign(tr.size(t), 0.0);
  r.worst = zero_strategy(m);
  int worst_node = -1;
  for (int i = 0; i < tr.size(t); ++i) {
    NodeProblem prob(m, t, i, true);
    check_dimension(prob, cfg);
    const auto [lo, hi] = prob.leaves();
    Level x(tr.leaves(), 0.0);
    const Objective obj = [&](const std::vector<double>& legs) {
      if (!prob.realize(legs)) return kInf;
      for (int j = lo; j < hi; ++j) x[j] = -prob.terminal()[j];
      return g_expectation_at(g, w, x, T, t, i);
    };
    const Optimum o = minimize(obj, prob.dimension(), bound, prob.groups(), cfg, starts_for(cfg, i));
    prob.realize(o.x);
    prob.export_to(r.worst);
    r.rho[i] = o.value;
    r.evaluations += o.evaluations;
    if (o.value < -kGoodDealTol && (worst_node < 0 || o.value < r.rho[worst_node])) worst_node = i;
  }
  if (worst_node >= 0) {
    r.verdict = NgdVerdict::GoodDealFound;
    Level neg = full_terminal(r.worst, m);
    for (double& v : neg) v = -v;
    const bool zero_cost =
        t >= T || std::abs(setup_cost(r.worst, m, t)[worst_node]) <= kResidualTol;
    r.certificate_valid = zero_cost && validate_self_financing(r.worst, m).passed &&
                          g_expectation_at(g, w, neg, T, t, worst_node) < -kGoodDealTol;
    r.consistent = true;
    return r;
  }
  r.arbitrage = find_arbitrage(m, t, cfg);
  r.consistent = !r.arbitrage->found;
  return r;
}

HedgedMonotonicity hedged_level_monotonicity(const DriverFamily& f, double gamma1, double gamma2,
                                             const Level& phi, const DividendStream& d,
                                             const MarketModel& m, int t,
                                             const SearchConfig& cfg, double tol) {
  if (gamma1 > gamma2) throw PreconditionViolated("γ1 must not exceed γ2");
  HedgedMonotonicity r;
  SearchConfig c = cfg;
  if (c.bound <= 0.0) c.bound = default_bound(phi, d, m, t);
  r.ask_high = hedged_ask(f, gamma2, phi, d, m, t, c);
  r.bid_high = hedged_bid(f, gamma2, phi, d, m, t, c);
  SearchConfig ca = c, cb = c;
  ca.extra_starts.assign(r.ask_high.optimum.size(), {});
  cb.extra_starts.assign(r.bid_high.optimum.size(), {});
  for (std::size_t i = 0; i < r.ask_high.optimum.size(); ++i) {
    ca.extra_starts[i].push_back(r.ask_high.optimum[i]);
    cb.extra_starts[i].push_back(r.bid_high.optimum[i]);
  }
  r.ask_low = hedged_ask(f, gamma1, phi, d, m, t, ca);
  r.bid_low = hedged_bid(f, gamma1, phi, d, m, t, cb);
  for (std::size_t i = 0; i < r.ask_low.value.size(); ++i) {
    const double va = r.ask_low.value[i] - r.ask_high.value[i];
    const double vb = r.bid_high.value[i] - r.bid_low.value[i];
    if (va > 2.0 * tol) r.ask_ordered = false;
    if (vb > 2.0 * tol) r.bid_ordered = false;
    r.worst = std::max({r.worst, va, vb});
  }
  return r;
}

HedgedConvexity hedged_convexity_check(const DriverFamily& f, double gamma,
                                       const DividendStream& d1, const DividendStream& d2,
                                       const Level& lambda, const MarketModel& m, int t,
                                       const SearchConfig& cfg, double tol) {
  const auto& tr = m.tree();
  check_stream(tr, d1, "first stream");
  check_stream(tr, d2, "second stream");
  if (static_cast<int>(lambda.size()) != tr.size(t)) throw LevelMismatch("λ must live on level t");
  const Level ones(tr.size(t), 1.0);
  DividendStream mix = tr.zeros();
  for (int s = t; s <= tr.horizon(); ++s) {
    const Level l = tr.lift(lambda, t, s);
    for (int i = 0; i < tr.size(s); ++i) mix[s][i] = l[i] * d1[s][i] + (1.0 - l[i]) * d2[s][i];
  }
  SearchConfig c = cfg;
  if (c.bound <= 0.0) {
    c.bound = std::max(default_bound(ones, d1, m, t), default_bound(ones, d2, m, t));
  }
  const HedgeResult a1 = hedged_ask(f, gamma, ones, d1, m, t, c);
  const HedgeResult a2 = hedged_ask(f, gamma, ones, d2, m, t, c);
  const HedgeResult b1 = hedged_bid(f, gamma, ones, d1, m, t, c);
  const HedgeResult b2 = hedged_bid(f, gamma, ones, d2, m, t, c);
  const TradingStrategy ta = convex_combination(a1.strategy, a2.strategy, lambda, m, t);
  const TradingStrategy tb = convex_combination(b1.strategy, b2.strategy, lambda, m, t);
  SearchConfig ca = c, cb = c;
  ca.extra_starts.assign(tr.size(t), {});
  cb.extra_starts.assign(tr.size(t), {});
  for (int i = 0; i < tr.size(t); ++i) {
    NodeProblem prob(m, t, i, c.hedge);
    ca.extra_starts[i].push_back(prob.extract(ta));
    cb.extra_starts[i].push_back(prob.extract(tb));
  }
  const HedgeResult am = hedged_ask(f, gamma, ones, mix, m, t, ca);
  const HedgeResult bm = hedged_bid(f, gamma, ones, mix, m, t, cb);
  HedgedConvexity r;
  for (int i = 0; i < tr.size(t); ++i) {
    const double l = lambda[i];
    const double va = am.value[i] - (l * a1.value[i] + (1.0 - l) * a2.value[i]);
    const double vb = (l * b1.value[i] + (1.0 - l) * b2.value[i]) - bm.value[i];
    if (va > 2.0 * tol) r.ask_convex = false;
    if (vb > 2.0 * tol) r.bid_concave = false;
    r.worst = std::max({r.worst, va, vb});
  }
  return r;
}

ProbeReport extended_cashflow_probe(const Level& phi, const DividendStream& d,
                                    const MarketModel& m, int t, const HedgeResult& ask_side,
                                    const HedgeResult& bid_side, const SearchConfig& cfg) {
  const auto& tr = m.tree();
  const int T = tr.horizon();
  ProbeReport r;
  if (t >= T) return r;
  const Level payoff = cumulative_from(tr, d, t + 1);
  const Level phi_leaves = tr.lift(phi, t, T);
  const double bound = cfg.bound > 0.0 ? cfg.bound : ask_side.bound;
  const Level ask_leaves = tr.lift(ask_side.value, t, T);
  const Level bid_leaves = tr.lift(bid_side.value, t, T);
  Level seller(tr.leaves()), buyer(tr.leaves());
  for (int j = 0; j < tr.leaves(); ++j) {
    seller[j] = ask_leaves[j] - phi_leaves[j] * payoff[j];
    buyer[j] = phi_leaves[j] * payoff[j] - bid_leaves[j];
  }
  r.seller_best_min = kInf;
  r.buyer_best_min = kInf;
  for (int i = 0; i < tr.size(t); ++i) {
    auto extra_for = [&](const HedgeResult& h) {
      std::vector<std::vector<double>> e = starts_for(cfg, i);
      if (i < static_cast<int>(h.optimum.size())) e.push_back(h.optimum[i]);
      return e;
    };
    const NodeArbitrage s = search_node(m, t, i, cfg, bound, &seller, extra_for(ask_side));
    const NodeArbitrage b = search_node(m, t, i, cfg, bound, &buyer, extra_for(bid_side));
    double mn = 0.0;
    if (is_riskless_profit(tr, s.terminal, t, i, &mn, nullptr)) r.seller_arbitrage = true;
    r.seller_best_min = std::min(r.seller_best_min, mn);
    if (is_riskless_profit(tr, b.terminal, t, i, &mn, nullptr)) r.buyer_arbitrage = true;
    r.buyer_best_min = std::min(r.buyer_best_min, mn);
  }
  return r;
}

}  // namespace gconic
