// SPDX-License-Identifier: MIT
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gconic/tree.hpp"

namespace gconic {

/// A predictable evaluation slot: the driver at time t on the time-(t-1)
/// node `parent`. Only parent-level data is visible here.
struct Slot {
  int t = 1;
  int parent = 0;
  double qv = 1.0;      // Δ⟨W⟩_t at the parent
  double sup_dw = 1.0;  // max |ΔW_t| over the level
};

Slot make_slot(const Martingale& w, int t, int parent);

struct DriverFlags {
  bool convex = false;
  bool positive_homogeneous = false;
  bool linear = false;
  /// Whether sup |∂g/∂z| = c_t is reached at finite z. When it is not, the
  /// comparison principle still holds on the boundary c_t|ΔW_t| = 1.
  bool lipschitz_attained = true;
};

class Driver {
 public:
  using Eval = std::function<double(const Slot&, double)>;
  using SlotFn = std::function<double(const Slot&)>;

  Driver() = default;
  Driver(std::string name, Eval eval, SlotFn lipschitz, DriverFlags flags,
         SlotFn slope = nullptr);

  double operator()(const Slot& s, double z) const { return eval_(s, z); }
  /// Analytic Lipschitz constant c_t on the slot.
  double lipschitz(const Slot& s) const { return lip_(s); }
  /// x_t for linear drivers, zero otherwise.
  double slope(const Slot& s) const { return slope_ ? slope_(s) : 0.0; }

  const std::string& name() const { return name_; }
  const DriverFlags& flags() const { return flags_; }
  bool valid() const { return static_cast<bool>(eval_); }

 private:
  std::string name_;
  Eval eval_;
  SlotFn lip_;
  SlotFn slope_;
  DriverFlags flags_;
};

/// An indexed family x ↦ g_x, closed form in x.
class DriverFamily {
 public:
  using Eval = std::function<double(double, const Slot&, double)>;
  using SlotFn = std::function<double(double, const Slot&)>;

  DriverFamily() = default;
  DriverFamily(std::string name, Eval eval, SlotFn lipschitz, DriverFlags flags,
               SlotFn slope = nullptr);

  double operator()(double x, const Slot& s, double z) const { return eval_(x, s, z); }
  double lipschitz(double x, const Slot& s) const { return lip_(x, s); }
  double slope(double x, const Slot& s) const { return slope_ ? slope_(x, s) : 0.0; }
  Driver at(double x) const;
  /// g_x with x read per slot from `level_x`, indexed by the level-t
  /// ancestor of the slot parent. Slots at or before t are not expected.
  Driver at_nodes(const FiltrationTree& tree, int t, Level level_x) const;

  const std::string& name() const { return name_; }
  const DriverFlags& flags() const { return flags_; }

 private:
  std::string name_;
  Eval eval_;
  SlotFn lip_;
  SlotFn slope_;
  DriverFlags flags_;
};

double lncosh(double z);
/// ln((1 + e^{-z} + e^{z}) / 3), overflow-free.
double log_mean_exp3(double z);

/// kind ∈ {zero, linear, coherent_abs, logsumexp, entropic}; `param` is the
/// slope, c, K or γ respectively.
Driver builtin_driver(const std::string& kind, double param = 0.0);
/// g(t, z) = x_t z with a predictable slope.
Driver linear_driver(Predictable slope);
/// kind ∈ {coherent, quasiconcave_lse, entropic, linear}; `param` is the
/// slope of the linear family and ignored otherwise.
DriverFamily builtin_family(const std::string& kind, double param = 0.0);

/// Symmetric grid {-half_width, ..., half_width} with the given step.
std::vector<double> symmetric_grid(double half_width, double step);

struct SlotEstimate {
  int t = 0;
  int parent = 0;
  double estimate = 0.0;
  double declared = 0.0;
  double at_zero = 0.0;
};

struct AssumptionAReport {
  std::vector<SlotEstimate> slots;
  double max_estimate = 0.0;
  /// Ratio of Lipschitz estimates over 10·grid and grid.
  double growth = 1.0;
  bool zero_at_zero = true;
  bool lipschitz = true;
  bool within_declared = true;
  bool predictable = true;
  bool passed() const { return zero_at_zero && lipschitz && within_declared && predictable; }
};

AssumptionAReport validate_assumption_A(const Driver& g, const Martingale& w,
                                        const std::vector<double>& grid);

struct RegularityReport {
  bool regular = false;
  double margin = 0.0;
  std::string criterion;
};

RegularityReport is_regular(const Driver& g, const Martingale& w);

/// Midpoint convexity over all grid pairs on every slot.
bool check_convexity(const Driver& g, const Martingale& w, const std::vector<double>& grid,
                     double tol = 1e-12);

/// Per-slot grid Lipschitz estimate.
double lipschitz_estimate(const Driver& g, const Slot& s, const std::vector<double>& sorted_grid);

bool lipschitz_dominance_check(const Driver& g1, const Driver& g2, const Martingale& w,
                               const std::vector<double>& grid, double tol = 1e-9);

struct AssumptionGReport {
  bool g1_monotone = true;
  bool g2_convex_regular = true;
  bool g3_left_continuous = true;
  bool dominance = true;
  double worst_g1 = 0.0;
  double worst_g3 = 0.0;
  std::string witness;
  bool passed() const { return g1_monotone && g2_convex_regular && g3_left_continuous && dominance; }
};

AssumptionGReport validate_assumption_G(const DriverFamily& f, const Martingale& w,
                                        const std::vector<double>& x_grid,
                                        const std::vector<double>& z_grid);

/// ρ_t(X) for X measurable at `level` (level ≥ t), one value per time-t node.
using RiskFunctional = std::function<Level(const Level& x, int level, int t)>;

/// g(t, z) = ρ_{t-1}(zΔW_t) / Δ⟨W⟩_t. Requires a symmetric random walk.
Driver driver_from_risk_measure(RiskFunctional rho, MartingalePtr w);

}  // namespace gconic
