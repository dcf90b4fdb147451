// SPDX-License-Identifier: MIT
#include "gconic/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gconic/errors.hpp"

namespace gconic {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double scaled(double tol, double a, double b = 0.0) {
  return tol * std::max({1.0, std::abs(a), std::abs(b)});
}

struct Recorder {
  AxiomResult r;
  explicit Recorder(std::string name) { r.name = std::move(name); }
  // records `excess` > 0 as a violation
  void check(double excess, const std::string& where) {
    ++r.checks;
    if (excess > r.worst) r.worst = excess;
    if (excess > 0.0 && r.passed) {
      r.passed = false;
      r.witness = where;
    }
  }
};

std::string where(int d, int t, int i) {
  return "stream " + std::to_string(d) + " t=" + std::to_string(t) + " node=" +
         std::to_string(i);
}

DividendStream add_streams(const DividendStream& a, const DividendStream& b, const Level& la,
                           const FiltrationTree& tr, int t) {
  // λ·a + (1-λ)·b with λ at level t, from t onwards
  DividendStream out = tr.zeros();
  for (int s = t; s <= tr.horizon(); ++s) {
    const Level l = tr.lift(la, t, s);
    for (int i = 0; i < tr.size(s); ++i) out[s][i] = l[i] * a[s][i] + (1.0 - l[i]) * b[s][i];
  }
  return out;
}

Level random_level(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Level v(n);
  for (double& x : v) x = u(rng);
  return v;
}

Level random_quarters(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> u(0, 4);
  Level v(n);
  for (double& x : v) x = 0.25 * u(rng);
  return v;
}

Level random_indicator(std::mt19937_64& rng, int n) {
  std::bernoulli_distribution b(0.5);
  Level v(n);
  for (double& x : v) x = b(rng) ? 1.0 : 0.0;
  return v;
}

/// A stream D' with D ⪰_t D': cash moved forward in time, then a
/// nonnegative amount removed at T.
DividendStream dominated(const DividendStream& d, const FiltrationTree& tr, int t,
                         std::mt19937_64& rng) {
  DividendStream out = d;
  const int T = tr.horizon();
  std::uniform_int_distribution<int> pick(t, T);
  const int s1 = pick(rng);
  const int s2 = std::uniform_int_distribution<int>(s1, T)(rng);
  const Level c = random_level(rng, tr.size(s1), -2.0, 2.0);
  const Level cl = tr.lift(c, s1, s2);
  for (int i = 0; i < tr.size(s1); ++i) out[s1][i] += c[i];
  for (int i = 0; i < tr.size(s2); ++i) out[s2][i] -= cl[i];
  const Level e = random_level(rng, tr.leaves(), 0.0, 1.0);
  for (int i = 0; i < tr.leaves(); ++i) out[T][i] -= e[i];
  return out;
}

bool index_ge(double a, double b, double tol, double x_max) {
  if (std::isinf(b)) return std::isinf(a) || a >= x_max * (1.0 - 1e-6);
  if (std::isinf(a)) return true;
  return a >= b - (10.0 * tol + 1e-12 * (1.0 + b) * (1.0 + b));
}

double index_gap(double a, double b) {
  if (std::isinf(a) && std::isinf(b)) return 0.0;
  if (std::isinf(a) || std::isinf(b)) return kInf;
  return std::abs(a - b);
}

}  // namespace

Level cumulative_from(const FiltrationTree& tree, const DividendStream& d, int from) {
  const int T = tree.horizon();
  Level sum(tree.leaves(), 0.0);
  for (int s = std::max(from, 0); s <= T; ++s) {
    if (static_cast<int>(d[s].size()) != tree.size(s)) {
      throw LevelMismatch("dividend stream has wrong size at level " + std::to_string(s));
    }
    const Level l = tree.lift(d[s], s, T);
    for (int i = 0; i < tree.leaves(); ++i) sum[i] += l[i];
  }
  return sum;
}

DividendStream scale_from(const FiltrationTree& tree, const Level& lambda, const DividendStream& d,
                          int t) {
  DividendStream out = tree.zeros();
  for (int s = t; s <= tree.horizon(); ++s) {
    const Level l = tree.lift(lambda, t, s);
    for (int i = 0; i < tree.size(s); ++i) out[s][i] = l[i] * d[s][i];
  }
  return out;
}

Level risk(const Driver& g, const Martingale& w, const DividendStream& d, int t) {
  if (static_cast<int>(d.size()) != w.horizon() + 1) {
    throw LevelMismatch("dividend stream does not span the horizon");
  }
  if (!is_regular(g, w).regular) throw DriverInvalid(g.name() + " is not regular");
  Level x = cumulative_from(w.tree(), d, t);
  for (double& v : x) v = -v;
  return g_expectation(g, w, x, w.horizon(), t);
}

Level entropic_risk_closed_form(const FiltrationTree& tree, const Level& x, int level, int t,
                                double gamma) {
  Level out(tree.size(t));
  for (int i = 0; i < tree.size(t); ++i) {
    const auto [lo, hi] = tree.descendants(t, i, level);
    double top = -kInf;
    for (int j = lo; j < hi; ++j) top = std::max(top, -x[j] / gamma);
    double acc = 0.0;
    for (int j = lo; j < hi; ++j) {
      acc += tree.path_prob(level, j) / tree.path_prob(t, i) * std::exp(-x[j] / gamma - top);
    }
    out[i] = gamma * (top + std::log(acc));
  }
  return out;
}

const AxiomResult& AxiomReport::at(const std::string& name) const {
  for (const auto& a : axioms) {
    if (a.name == name) return a;
  }
  throw std::out_of_range("no axiom " + name);
}

bool AxiomReport::passed(const std::vector<std::string>& names) const {
  for (const auto& n : names) {
    if (!at(n).passed) return false;
  }
  return true;
}

AxiomReport check_dcrm_axioms(const Driver& g, const Martingale& w,
                              const std::vector<DividendStream>& battery,
                              const AxiomConfig& cfg) {
  const auto& tr = w.tree();
  const int T = tr.horizon();
  std::mt19937_64 rng(cfg.seed);
  Recorder r1("R1"), r2("R2"), r3("R3"), r4("R4"), r5("R5"), r6("R6"), r7("R7");
  const double tol = cfg.tol;
  const int n = static_cast<int>(battery.size());
  for (int k = 0; k < n; ++k) {
    const DividendStream& d = battery[k];
    const DividendStream& d2 = battery[(k + 1) % n];
    std::vector<Level> rho(T + 1);
    for (int t = 0; t <= T; ++t) rho[t] = risk(g, w, d, t);
    for (int t = 0; t <= T; ++t) {
      const int m = tr.size(t);
      const Level& base = rho[t];
      // R1
      bool finite = static_cast<int>(base.size()) == m;
      for (double v : base) finite = finite && std::isfinite(v);
      r1.check(finite ? 0.0 : 1.0, where(k, t, 0));
      // R2
      const Level a = random_indicator(rng, m);
      const Level loc = risk(g, w, scale_from(tr, a, d, t), t);
      for (int i = 0; i < m; ++i) {
        if (a[i] == 1.0) r2.check(std::abs(loc[i] - base[i]) - scaled(tol, base[i]), where(k, t, i));
      }
      // R3
      const Level lam = random_quarters(rng, m);
      const Level mix = risk(g, w, add_streams(d, d2, lam, tr, t), t);
      const Level other = risk(g, w, d2, t);
      for (int i = 0; i < m; ++i) {
        const double rhs = lam[i] * base[i] + (1.0 - lam[i]) * other[i];
        r3.check(mix[i] - rhs - scaled(tol, rhs), where(k, t, i));
      }
      // R4
      const Level worse = risk(g, w, dominated(d, tr, t, rng), t);
      for (int i = 0; i < m; ++i) {
        r4.check(base[i] - worse[i] - scaled(tol, base[i]), where(k, t, i));
      }
      // R5
      const int s = std::uniform_int_distribution<int>(t, T)(rng);
      const Level cash = random_level(rng, m, -5.0, 5.0);
      DividendStream shifted = d;
      const Level cl = tr.lift(cash, t, s);
      for (int i = 0; i < tr.size(s); ++i) shifted[s][i] += cl[i];
      const Level rs = risk(g, w, shifted, t);
      for (int i = 0; i < m; ++i) {
        r5.check(std::abs(rs[i] - (base[i] - cash[i])) - scaled(tol, base[i]), where(k, t, i));
      }
      // R6
      if (t < T) {
        DividendStream next = tr.zeros();
        for (int i = 0; i < tr.size(t + 1); ++i) next[t + 1][i] = -rho[t + 1][i];
        const Level rr = risk(g, w, next, t);
        for (int i = 0; i < m; ++i) {
          const double rhs = rr[i] - d[t][i];
          r6.check(std::abs(base[i] - rhs) - scaled(tol, base[i]), where(k, t, i));
        }
      }
      // R7: λ = 2 everywhere, then a random nonnegative λ
      for (int pass = 0; pass < 2; ++pass) {
        const Level l = pass == 0 ? Level(m, 2.0) : random_level(rng, m, 0.0, 3.0);
        const Level rl = risk(g, w, scale_from(tr, l, d, t), t);
        for (int i = 0; i < m; ++i) {
          r7.check(std::abs(rl[i] - l[i] * base[i]) - scaled(tol, rl[i], l[i] * base[i]),
                   where(k, t, i));
        }
      }
    }
  }
  AxiomReport rep;
  rep.axioms = {r1.r, r2.r, r3.r, r4.r, r5.r, r6.r, r7.r};
  return rep;
}

Level acceptability_index(const DriverFamily& f, const Martingale& w, const DividendStream& d,
                          int t, const IndexConfig& cfg) {
  if (!(cfg.x_min > 0.0) || !(cfg.x_max > cfg.x_min) || !(cfg.tol > 0.0)) {
    throw BracketInvalid("need 0 < x_min < x_max and tol > 0");
  }
  const auto& tr = w.tree();
  const int T = tr.horizon();
  const int m = tr.size(t);
  Level x = cumulative_from(tr, d, t);
  for (double& v : x) v = -v;
  auto eval = [&](const Level& xs) {
    return g_expectation(f.at_nodes(tr, t, xs), w, x, T, t);
  };
  Level out(m, 0.0);
  const Level at_max = eval(Level(m, cfg.x_max));
  const Level at_min = eval(Level(m, cfg.x_min));
  Level lo(m, cfg.x_min), hi(m, cfg.x_max);
  std::vector<char> active(m, 0);
  for (int i = 0; i < m; ++i) {
    if (at_max[i] <= 0.0) {
      out[i] = kInf;
    } else if (at_min[i] > 0.0) {
      out[i] = 0.0;
    } else {
      active[i] = 1;
    }
  }
  for (;;) {
    bool any = false;
    Level mid(m, cfg.x_min);
    for (int i = 0; i < m; ++i) {
      if (active[i] && hi[i] - lo[i] > cfg.tol) {
        mid[i] = 0.5 * (lo[i] + hi[i]);
        any = true;
      }
    }
    if (!any) break;
    const Level v = eval(mid);
    for (int i = 0; i < m; ++i) {
      if (!active[i] || hi[i] - lo[i] <= cfg.tol) continue;
      if (v[i] <= 0.0) lo[i] = mid[i];
      else hi[i] = mid[i];
    }
  }
  for (int i = 0; i < m; ++i) {
    if (active[i]) out[i] = lo[i];
  }
  return out;
}

AxiomReport check_dai_axioms(const DriverFamily& f, const Martingale& w,
                             const std::vector<DividendStream>& battery, const DaiConfig& cfg) {
  const auto& tr = w.tree();
  const int T = tr.horizon();
  const IndexConfig& ic = cfg.index;
  std::mt19937_64 rng(cfg.seed);
  Recorder i1("I1"), i2("I2"), i3("I3"), i4("I4"), i5("I5"), i6("I6"), i5p("I5'");
  auto alpha = [&](const DividendStream& d, int t) { return acceptability_index(f, w, d, t, ic); };
  auto ge = [&](double a, double b, const std::string& at, Recorder& rec) {
    rec.check(index_ge(a, b, ic.tol, ic.x_max) ? 0.0 : index_gap(a, b), at);
  };
  const int n = static_cast<int>(battery.size());
  const double lambdas[] = {0.1, 0.25, 0.5, 0.75, 0.9};
  for (int k = 0; k < n; ++k) {
    const DividendStream& d = battery[k];
    const DividendStream& d2 = battery[(k + 1) % n];
    for (int t = 0; t <= T; ++t) {
      const int m = tr.size(t);
      const Level base = alpha(d, t);
      const Level other = alpha(d2, t);
      // I1
      bool ok = static_cast<int>(base.size()) == m;
      for (double v : base) ok = ok && !std::isnan(v) && v >= 0.0;
      i1.check(ok ? 0.0 : 1.0, where(k, t, 0));
      // I2
      const Level a = random_indicator(rng, m);
      const Level loc = alpha(scale_from(tr, a, d, t), t);
      for (int i = 0; i < m; ++i) {
        if (a[i] == 1.0) i2.check(index_gap(loc[i], base[i]), where(k, t, i));
      }
      // I3
      const Level lam = random_quarters(rng, m);
      const Level mix = alpha(add_streams(d, d2, lam, tr, t), t);
      for (int i = 0; i < m; ++i) {
        const double floor = std::min(base[i], other[i]);
        if (floor > 0.0) ge(mix[i], floor, where(k, t, i), i3);
      }
      // I4
      const Level worse = alpha(dominated(d, tr, t, rng), t);
      for (int i = 0; i < m; ++i) ge(base[i], worse[i], where(k, t, i), i4);
      // I5
      const Level shrink = random_level(rng, m, 0.0, 1.0);
      const Level sub = alpha(scale_from(tr, shrink, d, t), t);
      for (int i = 0; i < m; ++i) ge(sub[i], base[i], where(k, t, i), i5);
      // I5': witness search over λ ∈ (0,1)
      for (double l : lambdas) {
        const Level sc = alpha(scale_from(tr, Level(m, l), d, t), t);
        for (int i = 0; i < m; ++i) {
          const bool same = index_ge(sc[i], base[i], ic.tol, ic.x_max) &&
                            index_ge(base[i], sc[i], ic.tol, ic.x_max);
          i5p.check(same ? 0.0 : index_gap(sc[i], base[i]),
                    where(k, t, i) + " lambda=" + std::to_string(l));
        }
      }
    }
  }
  // I6
  std::vector<StreamPair> pairs = cfg.i6_pairs;
  if (pairs.empty()) {
    for (int k = 0; k < n; ++k) {
      DividendStream d = battery[k];
      DividendStream d2 = battery[(k + 1) % n];
      for (int s = 0; s <= T; ++s) {
        for (double& v : d[s]) v = std::abs(v);
        for (double& v : d2[s]) v = -std::abs(v);
      }
      pairs.emplace_back(std::move(d), std::move(d2));
    }
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [d, d2] = pairs[k];
    for (int t = 0; t < T; ++t) {
      const Level next = alpha(d, t + 1);
      const Level next2 = alpha(d2, t + 1);
      const Level now = alpha(d, t);
      const Level now2 = alpha(d2, t);
      for (int i = 0; i < tr.size(t); ++i) {
        if (!(d[t][i] >= 0.0 && d2[t][i] <= 0.0)) continue;
        double lo = kInf, hi = 0.0;
        const int b = tr.first_child(t, i);
        for (int c = 0; c < tr.child_count(t, i); ++c) {
          lo = std::min(lo, next[b + c]);
          hi = std::max(hi, next2[b + c]);
        }
        if (!index_ge(lo, hi, ic.tol, ic.x_max)) continue;
        const double candidates[] = {lo, hi,
                                     std::isinf(lo) ? hi : 0.5 * (lo + hi)};
        for (double mval : candidates) {
          const std::string at = "pair " + std::to_string(k) + " t=" + std::to_string(t) +
                                 " node=" + std::to_string(i);
          ge(now[i], mval, at, i6);
          ge(mval, now2[i], at, i6);
        }
      }
    }
  }
  AxiomReport rep;
  rep.axioms = {i1.r, i2.r, i3.r, i4.r, i5.r, i6.r, i5p.r};
  return rep;
}

bool level_set_duality(const DriverFamily& f, const Martingale& w, const DividendStream& d, int t,
                       double gamma, const IndexConfig& cfg) {
  const Level a = acceptability_index(f, w, d, t, cfg);
  Level x = cumulative_from(w.tree(), d, t);
  for (double& v : x) v = -v;
  const Level e = g_expectation(f.at(gamma), w, x, w.horizon(), t);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = a[i] >= gamma;
    const bool in_b = e[i] <= 0.0;
    if (in_a == in_b) continue;
    if (std::isfinite(a[i]) && std::abs(a[i] - gamma) <= 10.0 * cfg.tol) continue;
    return false;
  }
  return true;
}

}  // namespace gconic
