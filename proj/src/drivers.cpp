// SPDX-License-Identifier: MIT
#include "gconic/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "gconic/errors.hpp"

namespace gconic {

Slot make_slot(const Martingale& w, int t, int parent) {
  return Slot{t, parent, w.qv(t, parent), w.sup_abs(t)};
}

Driver::Driver(std::string name, Eval eval, SlotFn lipschitz, DriverFlags flags, SlotFn slope)
    : name_(std::move(name)),
      eval_(std::move(eval)),
      lip_(std::move(lipschitz)),
      slope_(std::move(slope)),
      flags_(flags) {}

DriverFamily::DriverFamily(std::string name, Eval eval, SlotFn lipschitz, DriverFlags flags,
                           SlotFn slope)
    : name_(std::move(name)),
      eval_(std::move(eval)),
      lip_(std::move(lipschitz)),
      slope_(std::move(slope)),
      flags_(flags) {}

Driver DriverFamily::at(double x) const {
  if (!(x > 0.0)) throw ParamOutOfRange(name_ + " is indexed by x > 0");
  auto ev = eval_;
  auto lp = lip_;
  Driver::SlotFn sl;
  if (slope_) {
    auto s = slope_;
    sl = [s, x](const Slot& slot) { return s(x, slot); };
  }
  return Driver(
      name_ + "@" + std::to_string(x),
      [ev, x](const Slot& s, double z) { return ev(x, s, z); },
      [lp, x](const Slot& s) { return lp(x, s); }, flags_, sl);
}

Driver DriverFamily::at_nodes(const FiltrationTree& tree, int t, Level level_x) const {
  // anc[u][p]: level-t ancestor of node p at level u >= t
  auto anc = std::make_shared<std::vector<std::vector<int>>>(tree.horizon() + 1);
  for (int u = t; u <= tree.horizon(); ++u) {
    (*anc)[u].resize(tree.size(u));
    for (int p = 0; p < tree.size(u); ++p) (*anc)[u][p] = tree.ancestor(u, p, t);
  }
  auto xs = std::make_shared<const Level>(std::move(level_x));
  auto pick = [anc, xs, t](const Slot& s) {
    const int u = s.t - 1;
    if (u < t) return (*xs)[0];
    return (*xs)[(*anc)[u][s.parent]];
  };
  auto ev = eval_;
  auto lp = lip_;
  Driver::SlotFn sl;
  if (slope_) {
    auto sf = slope_;
    sl = [sf, pick](const Slot& s) { return sf(pick(s), s); };
  }
  return Driver(
      name_ + "@nodes", [ev, pick](const Slot& s, double z) { return ev(pick(s), s, z); },
      [lp, pick](const Slot& s) { return lp(pick(s), s); }, flags_, sl);
}

double lncosh(double z) {
  if (z == 0.0) return 0.0;
  const double a = std::abs(z);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

double log_mean_exp3(double z) {
  if (z == 0.0) return 0.0;
  const double a = std::abs(z);
  const double e = std::exp(-a);
  return a + std::log((1.0 + e + e * e) / 3.0);
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ParamOutOfRange(what);
}

}  // namespace

Driver builtin_driver(const std::string& kind, double param) {
  if (kind == "zero") {
    return Driver(
        "zero", [](const Slot&, double) { return 0.0; }, [](const Slot&) { return 0.0; },
        DriverFlags{true, true, true, true}, [](const Slot&) { return 0.0; });
  }
  if (kind == "linear") {
    require(std::isfinite(param), "linear slope must be finite");
    const double x = param;
    return Driver(
        "linear", [x](const Slot&, double z) { return x * z; },
        [x](const Slot&) { return std::abs(x); }, DriverFlags{true, true, true, true},
        [x](const Slot&) { return x; });
  }
  if (kind == "coherent_abs") {
    require(param >= 0.0 && param < 1.0, "coherent_abs needs c in [0,1)");
    const double c = param;
    return Driver(
        "coherent_abs", [c](const Slot&, double z) { return c * std::abs(z); },
        [c](const Slot&) { return c; }, DriverFlags{true, true, c == 0.0, true},
        c == 0.0 ? Driver::SlotFn([](const Slot&) { return 0.0; }) : nullptr);
  }
  if (kind == "logsumexp") {
    require(param > 0.0 && std::isfinite(param), "logsumexp needs K > 0");
    const double k = param / (param + 1.0);
    return Driver(
        "logsumexp",
        [k](const Slot& s, double z) { return k / s.sup_dw * log_mean_exp3(z); },
        [k](const Slot& s) { return k / s.sup_dw; }, DriverFlags{true, false, false, false});
  }
  if (kind == "entropic") {
    require(param > 0.0 && std::isfinite(param), "entropic needs gamma > 0");
    const double g = param;
    return Driver(
        "entropic", [g](const Slot& s, double z) { return g / s.qv * lncosh(z / g); },
        [](const Slot& s) { return 1.0 / s.qv; }, DriverFlags{true, false, false, false});
  }
  throw ParamOutOfRange("unknown driver kind '" + kind + "'");
}

Driver linear_driver(Predictable slope) {
  auto x = std::make_shared<const Predictable>(std::move(slope));
  return Driver(
      "linear", [x](const Slot& s, double z) { return (*x)[s.t][s.parent] * z; },
      [x](const Slot& s) { return std::abs((*x)[s.t][s.parent]); },
      DriverFlags{true, true, true, true}, [x](const Slot& s) { return (*x)[s.t][s.parent]; });
}

DriverFamily builtin_family(const std::string& kind, double param) {
  auto check_x = [](double x) {
    if (!(x > 0.0)) throw ParamOutOfRange("family index must be positive");
  };
  if (kind == "coherent") {
    return DriverFamily(
        "coherent",
        [check_x](double x, const Slot&, double z) {
          check_x(x);
          return x / (x + 1.0) * std::abs(z);
        },
        [](double x, const Slot&) { return x / (x + 1.0); }, DriverFlags{true, true, false, true});
  }
  if (kind == "quasiconcave_lse") {
    return DriverFamily(
        "quasiconcave_lse",
        [check_x](double x, const Slot&, double z) {
          check_x(x);
          return x / (x + 1.0) * log_mean_exp3(z);
        },
        [](double x, const Slot&) { return x / (x + 1.0); },
        DriverFlags{true, false, false, false});
  }
  if (kind == "entropic") {
    return DriverFamily(
        "entropic",
        [check_x](double x, const Slot& s, double z) {
          check_x(x);
          return lncosh(x * z) / (x * s.qv);
        },
        [](double, const Slot& s) { return 1.0 / s.qv; }, DriverFlags{true, false, false, false});
  }
  if (kind == "linear") {
    require(std::isfinite(param), "linear family slope must be finite");
    const double a = param;
    return DriverFamily(
        "linear", [a](double, const Slot&, double z) { return a * z; },
        [a](double, const Slot&) { return std::abs(a); }, DriverFlags{true, true, true, true},
        [a](double, const Slot&) { return a; });
  }
  throw ParamOutOfRange("unknown family kind '" + kind + "'");
}

std::vector<double> symmetric_grid(double half_width, double step) {
  const int n = static_cast<int>(std::llround(half_width / step));
  std::vector<double> g;
  g.reserve(2 * n + 1);
  for (int k = -n; k <= n; ++k) g.push_back(k * step);
  return g;
}

double lipschitz_estimate(const Driver& g, const Slot& s, const std::vector<double>& sorted_grid) {
  double best = 0.0;
  for (std::size_t k = 1; k < sorted_grid.size(); ++k) {
    const double h = sorted_grid[k] - sorted_grid[k - 1];
    if (h <= 0.0) continue;
    best = std::max(best, std::abs(g(s, sorted_grid[k]) - g(s, sorted_grid[k - 1])) / h);
  }
  return best;
}

AssumptionAReport validate_assumption_A(const Driver& g, const Martingale& w,
                                        const std::vector<double>& grid) {
  AssumptionAReport rep;
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> wide = sorted;
  for (double& z : wide) z *= 10.0;
  const auto& tr = w.tree();
  for (int t = 1; t <= tr.horizon(); ++t) {
    for (int p = 0; p < tr.size(t - 1); ++p) {
      const Slot s = make_slot(w, t, p);
      SlotEstimate e{t, p, lipschitz_estimate(g, s, sorted), g.lipschitz(s), g(s, 0.0)};
      const double e10 = lipschitz_estimate(g, s, wide);
      if (e.estimate > 0.0) rep.growth = std::max(rep.growth, e10 / e.estimate);
      else if (e10 > 0.0) rep.growth = std::max(rep.growth, 1e300);
      rep.max_estimate = std::max(rep.max_estimate, e.estimate);
      if (e.at_zero != 0.0) rep.zero_at_zero = false;
      if (e.estimate > e.declared + 1e-9 * std::max(1.0, e.declared)) rep.within_declared = false;
      rep.slots.push_back(e);
    }
  }
  rep.lipschitz = rep.growth <= 1.01;
  return rep;
}

RegularityReport is_regular(const Driver& g, const Martingale& w) {
  const auto& tr = w.tree();
  RegularityReport r;
  if (g.flags().linear) {
    double lo = INFINITY;
    for (int t = 1; t <= tr.horizon(); ++t) {
      for (int i = 0; i < tr.size(t); ++i) {
        const Slot s = make_slot(w, t, tr.parent(t, i));
        lo = std::min(lo, 1.0 + g.slope(s) * w.dw(t, i));
      }
    }
    r.margin = lo;
    r.regular = lo > 0.0;
    r.criterion = "linear";
    return r;
  }
  double worst = 0.0;
  for (int t = 1; t <= tr.horizon(); ++t) {
    for (int i = 0; i < tr.size(t); ++i) {
      const Slot s = make_slot(w, t, tr.parent(t, i));
      worst = std::max(worst, g.lipschitz(s) * std::abs(w.dw(t, i)));
    }
  }
  r.margin = 1.0 - worst;
  if (r.margin > 1e-12) {
    r.regular = true;
    r.criterion = "lipschitz";
  } else if (r.margin >= -1e-12 && !g.flags().lipschitz_attained) {
    r.regular = true;
    r.criterion = "strict-lipschitz";
  } else {
    r.criterion = "lipschitz";
  }
  return r;
}

namespace {

std::vector<double> thin(const std::vector<double>& grid, std::size_t cap) {
  if (grid.size() <= cap) return grid;
  std::vector<double> out;
  const double stride = static_cast<double>(grid.size() - 1) / static_cast<double>(cap - 1);
  for (std::size_t k = 0; k < cap; ++k) {
    out.push_back(grid[static_cast<std::size_t>(std::llround(k * stride))]);
  }
  return out;
}

}  // namespace

bool check_convexity(const Driver& g, const Martingale& w, const std::vector<double>& grid,
                     double tol) {
  const auto pts = thin(grid, 201);
  const auto& tr = w.tree();
  for (int t = 1; t <= tr.horizon(); ++t) {
    for (int p = 0; p < tr.size(t - 1); ++p) {
      const Slot s = make_slot(w, t, p);
      std::vector<double> v(pts.size());
      for (std::size_t i = 0; i < pts.size(); ++i) v[i] = g(s, pts[i]);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
          const double mid = g(s, 0.5 * (pts[i] + pts[j]));
          const double chord = 0.5 * (v[i] + v[j]);
          if (mid > chord + tol * std::max(1.0, std::abs(chord))) return false;
        }
      }
    }
  }
  return true;
}

bool lipschitz_dominance_check(const Driver& g1, const Driver& g2, const Martingale& w,
                               const std::vector<double>& grid, double tol) {
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  const auto& tr = w.tree();
  for (int t = 1; t <= tr.horizon(); ++t) {
    for (int p = 0; p < tr.size(t - 1); ++p) {
      const Slot s = make_slot(w, t, p);
      if (lipschitz_estimate(g1, s, sorted) > lipschitz_estimate(g2, s, sorted) + tol) {
        return false;
      }
    }
  }
  return true;
}

AssumptionGReport validate_assumption_G(const DriverFamily& f, const Martingale& w,
                                        const std::vector<double>& x_grid,
                                        const std::vector<double>& z_grid) {
  AssumptionGReport rep;
  std::vector<double> xs = x_grid;
  std::sort(xs.begin(), xs.end());
  const auto zs = thin(z_grid, 401);
  const auto& tr = w.tree();
  auto note = [&rep](const std::string& s) {
    if (rep.witness.empty()) rep.witness = s;
  };
  for (int t = 1; t <= tr.horizon(); ++t) {
    for (int p = 0; p < tr.size(t - 1); ++p) {
      const Slot s = make_slot(w, t, p);
      for (std::size_t a = 0; a + 1 < xs.size(); ++a) {
        for (double z : zs) {
          const double d = f(xs[a + 1], s, z) - f(xs[a], s, z);
          rep.worst_g1 = std::min(rep.worst_g1, d);
          if (d < -1e-12) {
            rep.g1_monotone = false;
            note("G1 at x=" + std::to_string(xs[a]) + " z=" + std::to_string(z));
          }
        }
      }
      for (double x : xs) {
        for (double z : zs) {
          const double base = f(x, s, z);
          double prev = INFINITY;
          for (int k = 4; k <= 8; ++k) {
            const double y = x - std::pow(10.0, -k);
            if (y <= 0.0) continue;
            const double d = std::abs(f(y, s, z) - base);
            if (d > prev + 1e-12) {
              rep.g3_left_continuous = false;
              note("G3 not converging at x=" + std::to_string(x));
            }
            prev = d;
          }
          if (std::isfinite(prev)) {
            rep.worst_g3 = std::max(rep.worst_g3, prev);
            if (prev > 1e-6 * std::max(1.0, std::abs(base))) {
              rep.g3_left_continuous = false;
              note("G3 gap at x=" + std::to_string(x));
            }
          }
        }
      }
    }
  }
  for (std::size_t a = 0; a < xs.size(); ++a) {
    const Driver g = f.at(xs[a]);
    if (!g.flags().convex || !check_convexity(g, w, z_grid) || !is_regular(g, w).regular) {
      rep.g2_convex_regular = false;
      note("G2 at x=" + std::to_string(xs[a]));
    }
    if (a + 1 < xs.size() && !lipschitz_dominance_check(g, f.at(xs[a + 1]), w, z_grid)) {
      rep.dominance = false;
      note("Lipschitz dominance at x=" + std::to_string(xs[a]));
    }
  }
  return rep;
}

Driver driver_from_risk_measure(RiskFunctional rho, MartingalePtr w) {
  if (!w->symmetric_walk() || !w->predictable_representation()) {
    throw NotRandomWalk("driver recovery needs a symmetric random walk");
  }
  auto r = std::make_shared<RiskFunctional>(std::move(rho));
  auto eval = [r, w](const Slot& s, double z) {
    const Level& dw = w->increments(s.t);
    Level x(dw.size());
    for (std::size_t i = 0; i < dw.size(); ++i) x[i] = z * dw[i];
    return (*r)(x, s.t, s.t - 1)[s.parent] / w->qv(s.t, s.parent);
  };
  auto grid = std::make_shared<const std::vector<double>>(symmetric_grid(10.0, 0.01));
  Driver::Eval ev = eval;
  auto lip = [ev, grid](const Slot& s) {
    Driver probe("probe", ev, [](const Slot&) { return 0.0; }, DriverFlags{});
    return lipschitz_estimate(probe, s, *grid);
  };
  return Driver("from_risk_measure", ev, lip, DriverFlags{true, false, false, false});
}

}  // namespace gconic
