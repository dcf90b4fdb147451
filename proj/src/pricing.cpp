// SPDX-License-Identifier: MIT
#include "gconic/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gconic/bsde.hpp"
#include "gconic/errors.hpp"

namespace gconic {

namespace {

void check_inputs(double gamma, const Level& phi, const DividendStream& d, const Martingale& w,
                  int t) {
  const auto& tr = w.tree();
  if (!(gamma > 0.0)) throw LevelNonpositive("γ = " + std::to_string(gamma));
  if (t < 0 || t > tr.horizon()) throw LevelMismatch("price at level " + std::to_string(t));
  if (static_cast<int>(phi.size()) != tr.size(t)) {
    throw LevelMismatch("share count must have one value per level-" + std::to_string(t) +
                        " node");
  }
  for (double v : phi) {
    if (!(v >= 0.0)) throw ParamOutOfRange("share count must be nonnegative");
  }
  if (static_cast<int>(d.size()) != tr.horizon() + 1) {
    throw LevelMismatch("dividend stream does not span the horizon");
  }
}

// 𝓔_{g_γ}[sign · φ Σ_{s>t} D_s | 𝓕_t]
Level signed_value(const DriverFamily& f, double gamma, const Level& phi, const DividendStream& d,
                   const Martingale& w, int t, double sign) {
  const auto& tr = w.tree();
  Level x = cumulative_from(tr, scale_from(tr, phi, d, t), t + 1);
  for (double& v : x) v *= sign;
  return g_expectation(f.at(gamma), w, x, tr.horizon(), t);
}

Level ones(const FiltrationTree& tr, int t) { return Level(tr.size(t), 1.0); }

Level price_level(Side side, const DriverFamily& f, double gamma, const Level& phi,
                  const DividendStream& d, const Martingale& w, int t) {
  return quote(side, f, gamma, phi, d, w, t).value;
}

// Σ_{s≤t} D_s along paths.
Adapted paid_so_far(const FiltrationTree& tr, const DividendStream& d) {
  Adapted c = tr.zeros();
  for (int t = 0; t <= tr.horizon(); ++t) {
    for (int i = 0; i < tr.size(t); ++i) {
      c[t][i] = d[t][i] + (t > 0 ? c[t - 1][tr.parent(t, i)] : 0.0);
    }
  }
  return c;
}

// price_t(δ_{t+1}(X)) for X at level t+1.
Level one_step(Side side, const DriverFamily& f, double gamma, const Martingale& w, const Level& x,
               int t) {
  const auto& tr = w.tree();
  Level y = tr.lift(x, t + 1, tr.horizon());
  const double sign = side == Side::Ask ? 1.0 : -1.0;
  for (double& v : y) v *= sign;
  Level e = g_expectation(f.at(gamma), w, y, tr.horizon(), t);
  for (double& v : e) v *= sign;
  return e;
}

void record(ResidualReport& r, double gap, int t, int i) {
  if (gap > r.max_residual) {
    r.max_residual = gap;
    r.worst_t = t;
    r.worst_node = i;
  }
}

void record(OrderingReport& r, double violation, const std::string& where) {
  if (violation > r.worst) {
    r.worst = violation;
    r.witness = where;
  }
}

std::string at(int t, int i) { return "(" + std::to_string(t) + "," + std::to_string(i) + ")"; }

DividendStream mix_streams(const FiltrationTree& tr, const DividendStream& d1,
                           const DividendStream& d2, const Level& lambda, int t) {
  DividendStream out = tr.zeros();
  for (int s = t; s <= tr.horizon(); ++s) {
    const Level l = tr.lift(lambda, t, s);
    for (int i = 0; i < tr.size(s); ++i) out[s][i] = l[i] * d1[s][i] + (1.0 - l[i]) * d2[s][i];
  }
  return out;
}

}  // namespace

const char* side_name(Side s) { return s == Side::Ask ? "ask" : "bid"; }

PriceQuote quote(Side side, const DriverFamily& f, double gamma, const Level& phi,
                 const DividendStream& d, const Martingale& w, int t) {
  check_inputs(gamma, phi, d, w, t);
  PriceQuote q;
  q.side = side;
  q.gamma = gamma;
  q.family = f.name();
  q.t = t;
  q.phi = phi;
  if (side == Side::Ask) {
    q.value = signed_value(f, gamma, phi, d, w, t, 1.0);
  } else {
    q.value = signed_value(f, gamma, phi, d, w, t, -1.0);
    for (double& v : q.value) v = -v;
  }
  return q;
}

PriceQuote ask(const DriverFamily& f, double gamma, const Level& phi, const DividendStream& d,
               const Martingale& w, int t) {
  return quote(Side::Ask, f, gamma, phi, d, w, t);
}

PriceQuote bid(const DriverFamily& f, double gamma, const Level& phi, const DividendStream& d,
               const Martingale& w, int t) {
  return quote(Side::Bid, f, gamma, phi, d, w, t);
}

Adapted cumulative_price(Side side, const DriverFamily& f, double gamma, const DividendStream& d,
                         const Martingale& w) {
  const auto& tr = w.tree();
  Adapted c = paid_so_far(tr, d);
  for (int t = 0; t < tr.horizon(); ++t) {
    const Level p = price_level(side, f, gamma, ones(tr, t), d, w, t);
    for (int i = 0; i < tr.size(t); ++i) c[t][i] += p[i];
  }
  return c;
}

ResidualReport time_consistency_check(Side side, const DriverFamily& f, double gamma,
                                      const DividendStream& d, const Martingale& w, double tol) {
  const auto& tr = w.tree();
  const int T = tr.horizon();
  Adapted p(T + 1);
  for (int t = 0; t <= T; ++t) p[t] = price_level(side, f, gamma, ones(tr, t), d, w, t);
  ResidualReport r;
  for (int t = 0; t < T; ++t) {
    Level next = p[t + 1];
    for (int i = 0; i < tr.size(t + 1); ++i) next[i] += d[t + 1][i];
    const Level rhs = one_step(side, f, gamma, w, next, t);
    for (int i = 0; i < tr.size(t); ++i) record(r, std::abs(p[t][i] - rhs[i]), t, i);
  }
  r.passed = r.max_residual < tol;
  return r;
}

ResidualReport cumulative_consistency_check(Side side, const DriverFamily& f, double gamma,
                                            const DividendStream& d, const Martingale& w,
                                            double tol) {
  const auto& tr = w.tree();
  const Adapted c = cumulative_price(side, f, gamma, d, w);
  ResidualReport r;
  for (int t = 0; t < tr.horizon(); ++t) {
    const Level rhs = one_step(side, f, gamma, w, c[t + 1], t);
    for (int i = 0; i < tr.size(t); ++i) {
      record(r, std::abs(c[t][i] - rhs[i]) / std::max(1.0, std::abs(c[t][i])), t, i);
    }
  }
  r.passed = r.max_residual < tol;
  return r;
}

OrderingReport cross_compare(const DriverFamily& f1, double gamma1, const DriverFamily& f2,
                             double gamma2, const DividendStream& d, const Martingale& w, int t,
                             double tol) {
  const auto& tr = w.tree();
  const Level a = ask(f1, gamma1, ones(tr, t), d, w, t).value;
  const Level b = bid(f2, gamma2, ones(tr, t), d, w, t).value;
  OrderingReport r;
  for (int i = 0; i < tr.size(t); ++i) record(r, b[i] - a[i], "ask<bid at " + at(t, i));
  r.passed = r.worst <= tol;
  return r;
}

OrderingReport spread_monotonicity(const DriverFamily& f, const std::vector<double>& gammas,
                                   const DividendStream& d, const Martingale& w, int t,
                                   double tol) {
  const auto& tr = w.tree();
  std::vector<double> g = gammas;
  std::sort(g.begin(), g.end());
  OrderingReport r;
  Level prev_a, prev_b;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Level a = ask(f, g[k], ones(tr, t), d, w, t).value;
    const Level b = bid(f, g[k], ones(tr, t), d, w, t).value;
    for (int i = 0; i < tr.size(t); ++i) {
      record(r, b[i] - a[i], "bid>ask at " + at(t, i));
      if (k == 0) continue;
      record(r, prev_a[i] - a[i], "ask fell with γ at " + at(t, i));
      record(r, b[i] - prev_b[i], "bid rose with γ at " + at(t, i));
    }
    prev_a = a;
    prev_b = b;
  }
  r.passed = r.worst <= tol;
  return r;
}

ImpactReport market_impact_check(const DriverFamily& f, double gamma, const Level& phi,
                                 const Level& lambda, const DividendStream& d, const Martingale& w,
                                 int t, const DividendStream* d2, const Level* mix, double tol) {
  const auto& tr = w.tree();
  const int m = tr.size(t);
  if (static_cast<int>(lambda.size()) != m) throw LevelMismatch("λ must live on level t");
  Level scaled(m);
  for (int i = 0; i < m; ++i) {
    if (!(lambda[i] >= 0.0)) throw ParamOutOfRange("λ must be nonnegative");
    scaled[i] = lambda[i] * phi[i];
  }
  ImpactReport r;
  const Level a = ask(f, gamma, phi, d, w, t).value;
  const Level b = bid(f, gamma, phi, d, w, t).value;
  const Level la = ask(f, gamma, scaled, d, w, t).value;
  const Level lb = bid(f, gamma, scaled, d, w, t).value;
  for (int i = 0; i < m; ++i) {
    const double sa = lambda[i] * a[i], sb = lambda[i] * b[i];
    const double scale = tol * std::max(1.0, std::abs(sa) + std::abs(sb));
    // λ ≤ 1: a(λφ) ≤ λa(φ), b(λφ) ≥ λb(φ); reversed for λ ≥ 1.
    const double va = lambda[i] <= 1.0 ? la[i] - sa : sa - la[i];
    const double vb = lambda[i] <= 1.0 ? sb - lb[i] : lb[i] - sb;
    if (va > scale) r.p4_ask = false;
    if (vb > scale) r.p4_bid = false;
    r.worst = std::max({r.worst, va, vb});
  }
  if (d2 && mix) {
    const DividendStream dm = mix_streams(tr, d, *d2, *mix, t);
    const Level a2 = ask(f, gamma, phi, *d2, w, t).value;
    const Level b2 = bid(f, gamma, phi, *d2, w, t).value;
    const Level am = ask(f, gamma, phi, dm, w, t).value;
    const Level bm = bid(f, gamma, phi, dm, w, t).value;
    for (int i = 0; i < m; ++i) {
      const double l = (*mix)[i];
      if (l < 0.0 || l > 1.0) throw ParamOutOfRange("mixing weight must lie in [0,1]");
      const double ca = l * a[i] + (1.0 - l) * a2[i];
      const double cb = l * b[i] + (1.0 - l) * b2[i];
      const double va = am[i] - ca, vb = cb - bm[i];
      if (va > tol * std::max(1.0, std::abs(ca))) r.p3_ask = false;
      if (vb > tol * std::max(1.0, std::abs(cb))) r.p3_bid = false;
      r.worst = std::max({r.worst, va, vb});
    }
  }
  return r;
}

std::optional<Agreement> agreement_diagnostic(const DriverFamily& f1, double gamma1,
                                              const DriverFamily& f2, double gamma2,
                                              const Level& phi, const DividendStream& d,
                                              const Martingale& w, int t, double tol) {
  const auto& tr = w.tree();
  const int T = tr.horizon();
  const Level a = ask(f1, gamma1, phi, d, w, t).value;
  const Level b = bid(f2, gamma2, phi, d, w, t).value;
  Agreement out;
  Level indicator(tr.size(t), 0.0);
  for (int i = 0; i < tr.size(t); ++i) {
    if (std::abs(a[i] - b[i]) <= tol) {
      out.nodes.push_back(i);
      indicator[i] = 1.0;
    }
  }
  if (out.nodes.empty()) return std::nullopt;

  const Driver g1 = f1.at(gamma1);
  const Driver g2 = f2.at(gamma2);
  Level phi_a(tr.size(t));
  for (int i = 0; i < tr.size(t); ++i) phi_a[i] = indicator[i] * phi[i];
  const Level terminal = cumulative_from(tr, scale_from(tr, phi_a, d, t), t + 1);
  const BsdeSolution sol = solve_bsde(g1, w, terminal);
  out.slope = tr.zeros_predictable();
  for (int s = t + 1; s <= T; ++s) {
    for (int p = 0; p < tr.size(s - 1); ++p) {
      if (indicator[tr.ancestor(s - 1, p, t)] == 0.0) continue;
      const double z = sol.z[s][p];
      if (std::abs(z) < 1e-300) continue;
      out.slope[s][p] = g1(make_slot(w, s, p), z) / z;
    }
  }
  const Driver lin = linear_driver(out.slope);
  for (double frac : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    Level lam(tr.size(t));
    for (int i = 0; i < tr.size(t); ++i) lam[i] = frac * phi[i];
    Level x = cumulative_from(tr, scale_from(tr, lam, d, t), t + 1);
    const Level e1 = g_expectation(g1, w, x, T, t);
    const Level l1 = g_expectation(lin, w, x, T, t);
    for (double& v : x) v = -v;
    const Level e2 = g_expectation(g2, w, x, T, t);
    const Level l2 = g_expectation(lin, w, x, T, t);
    for (int i : out.nodes) {
      out.worst = std::max({out.worst, std::abs(e1[i] - l1[i]), std::abs(e2[i] - l2[i])});
    }
  }
  out.identities_hold = out.worst <= tol;
  return out;
}

DividendStream single_payment(const FiltrationTree& tree, const Level& x, int s) {
  if (s < 0 || s > tree.horizon() || static_cast<int>(x.size()) != tree.size(s)) {
    throw LevelMismatch("payment at level " + std::to_string(s));
  }
  DividendStream d = tree.zeros();
  d[s] = x;
  return d;
}

SpanningReport spanning_agreement_check(const DriverFamily& f1, double gamma1,
                                        const DriverFamily& f2, double gamma2,
                                        const Martingale& w, int t, double tol) {
  const auto& tr = w.tree();
  std::vector<DividendStream> battery;
  for (int s = t + 1; s <= tr.horizon(); ++s) {
    for (int j = 0; j < tr.size(s); ++j) {
      Level x(tr.size(s), 0.0);
      x[j] = 1.0;
      battery.push_back(single_payment(tr, x, s));
    }
  }
  SpanningReport r;
  r.streams = static_cast<int>(battery.size());
  std::vector<Level> asks;
  for (const auto& d : battery) {
    const Level a = ask(f1, gamma1, ones(tr, t), d, w, t).value;
    const Level b = bid(f2, gamma2, ones(tr, t), d, w, t).value;
    for (int i = 0; i < tr.size(t); ++i) {
      if (std::abs(a[i] - b[i]) > tol) r.all_agree = false;
    }
    asks.push_back(a);
  }
  if (!r.all_agree) return r;
  const auto slope = detect_linear_driver(f1.at(gamma1), w);
  if (!slope) return r;
  r.detected = true;
  const Driver lin = linear_driver(*slope);
  for (std::size_t k = 0; k < battery.size(); ++k) {
    const Level x = cumulative_from(tr, battery[k], t + 1);
    const Level e = g_expectation(lin, w, x, tr.horizon(), t);
    const Level b = bid(f2, gamma2, ones(tr, t), battery[k], w, t).value;
    for (int i = 0; i < tr.size(t); ++i) {
      r.worst_reproduction =
          std::max({r.worst_reproduction, std::abs(e[i] - asks[k][i]), std::abs(e[i] - b[i])});
    }
  }
  return r;
}

bool essinf_check(Side side, const DriverFamily& f, double gamma, const Level& phi,
                  const DividendStream& d, const Martingale& w, int t,
                  const std::vector<double>& offsets, const IndexConfig& cfg) {
  const auto& tr = w.tree();
  const Level price = quote(side, f, gamma, phi, d, w, t).value;
  const DividendStream held = scale_from(tr, phi, d, t);
  const double slack = 10.0 * cfg.tol + 1e-12 * (1.0 + gamma) * (1.0 + gamma);
  for (double delta : offsets) {
    for (double dir : {1.0, -1.0}) {
      // ask: receive a at t and deliver φD later; bid: pay b and receive φD.
      DividendStream s = tr.zeros();
      for (int u = t + 1; u <= tr.horizon(); ++u) {
        for (int i = 0; i < tr.size(u); ++i) {
          s[u][i] = side == Side::Ask ? -held[u][i] : held[u][i];
        }
      }
      for (int i = 0; i < tr.size(t); ++i) {
        s[t][i] = side == Side::Ask ? price[i] + dir * delta : -(price[i] - dir * delta);
      }
      const Level alpha = acceptability_index(f, w, s, t, cfg);
      for (int i = 0; i < tr.size(t); ++i) {
        const bool acceptable = alpha[i] >= gamma - slack;
        const bool strictly_below = alpha[i] < gamma;
        if (dir > 0.0 && !acceptable) return false;
        if (dir < 0.0 && !strictly_below) return false;
      }
    }
  }
  return true;
}

}  // namespace gconic
