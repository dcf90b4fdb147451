// SPDX-License-Identifier: MIT
// Prints one PASS/FAIL line per acceptance criterion; exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "gconic/bsde.hpp"
#include "gconic/market.hpp"
#include "gconic/pricing.hpp"
#include "gconic/risk.hpp"
#include "support/batteries.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace gconic;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Verdict entropic_oracle() {
  oracle::Rng rng(1001);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int n = 0; n < 50; ++n) {
    const int T = oracle::uniform_int(rng, 1, 5);
    const auto w = oracle::walk(T);
    const auto& tr = w->tree();
    const Level x = oracle::random_level(rng, tr.leaves(), -3.0, 3.0);
    Level neg = x;
    for (double& v : neg) v = -v;
    for (double gamma : {0.5, 1.0, 2.0}) {
      const BsdeSolution sol = solve_bsde(builtin_driver("entropic", gamma), *w, neg);
      for (int t = 0; t <= T; ++t) {
        const Level ref = oracle::entropic(tr, x, t, gamma);
        for (int i = 0; i < tr.size(t); ++i) worst = std::max(worst, std::abs(sol.y[t][i] - ref[i]));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && secs < 5.0,
          "max diff " + fmt("%.3g", worst) + ", " + fmt("%.3f", secs) + " s"};
}

Verdict linear_measure() {
  oracle::Rng rng(1002);
  double worst = 0.0;
  for (int n = 0; n < 50; ++n) {
    const int T = oracle::uniform_int(rng, 1, 3);
    const auto w = oracle::random_martingale(rng, T);
    const auto& tr = w->tree();
    Predictable slope = tr.zeros_predictable();
    for (int t = 1; t <= T; ++t) {
      for (double& v : slope[t]) v = oracle::uniform(rng, -0.95, 0.95) / w->sup_abs(t);
    }
    const Driver g = linear_driver(slope);
    const FiltrationTree q = extract_linear_measure(g, *w);
    for (int k = 0; k < 3; ++k) {
      const Level x = oracle::random_level(rng, tr.leaves(), -5.0, 5.0);
      for (int t = 0; t <= T; ++t) {
        const Level y = g_expectation(g, *w, x, T, t);
        const Level e = q.cond_exp(x, T, t);
        const Level ref = oracle::linear_measure_expectation(tr, w->increments(), slope, x, t);
        for (int i = 0; i < tr.size(t); ++i) {
          worst = std::max({worst, std::abs(y[i] - e[i]), std::abs(y[i] - ref[i])});
        }
      }
    }
  }
  return {worst < 1e-12, "max diff " + fmt("%.3g", worst)};
}

Verdict battery_run(const std::function<std::string(oracle::Rng&, int)>& one, int count,
                    std::uint64_t seed) {
  oracle::Rng rng(seed);
  for (int k = 0; k < count; ++k) {
    const std::string err = one(rng, k);
    if (!err.empty()) return {false, "case " + std::to_string(k) + ": " + err};
  }
  return {true, std::to_string(count) + " cases"};
}

Verdict gexp_axioms() {
  return battery_run([](oracle::Rng& r, int k) { return battery::gexp_case(r, k, 1e-10); }, 200,
                     1003);
}

Verdict comparison() {
  Verdict a = battery_run(battery::comparison_case, 200, 1004);
  if (!a.pass) return a;
  Verdict b = battery_run(battery::equality_case, 20, 1005);
  if (!b.pass) return b;
  return {true, "200 ordered, 20 equality instances"};
}

Verdict dcrm_dai() {
  oracle::Rng rng(1006);
  const auto w3 = oracle::walk(3);
  std::vector<DividendStream> battery;
  for (int k = 0; k < 8; ++k) battery.push_back(oracle::random_stream(rng, w3->tree(), -2.0, 2.0));
  const std::vector<std::string> r6 = {"R1", "R2", "R3", "R4", "R5", "R6"};
  for (const char* kind : {"entropic", "logsumexp"}) {
    const auto rep = check_dcrm_axioms(builtin_driver(kind, 0.8), *w3, battery, {1, 1e-10});
    if (!rep.passed(r6)) return {false, std::string(kind) + " fails R1-R6"};
  }
  const auto coh = check_dcrm_axioms(builtin_driver("coherent_abs", 0.4), *w3, battery, {2, 1e-10});
  if (!coh.passed({"R1", "R2", "R3", "R4", "R5", "R6", "R7"})) return {false, "coherent fails R1-R7"};

  const auto w2 = oracle::walk(2);
  std::vector<DividendStream> dai;
  for (int k = 0; k < 6; ++k) dai.push_back(oracle::random_stream(rng, w2->tree(), -1.0, 2.0));
  DividendStream tilted = w2->tree().zeros();
  tilted[1] = {1.0, -0.9};
  dai.push_back(tilted);
  DaiConfig cfg;
  cfg.seed = 3;
  const std::vector<std::string> i6 = {"I1", "I2", "I3", "I4", "I5", "I6"};
  for (const char* kind : {"coherent", "entropic", "quasiconcave_lse"}) {
    const auto rep = check_dai_axioms(builtin_family(kind), *w2, dai, cfg);
    if (!rep.passed(i6)) return {false, std::string(kind) + " fails I1-I6"};
    const auto& p = rep.at("I5'");
    if (std::string(kind) == "coherent" && !p.passed) return {false, "coherent fails I5'"};
    if (std::string(kind) == "quasiconcave_lse" && (p.passed || p.witness.empty())) {
      return {false, "no I5' witness for the quasi-concave family"};
    }
    if (std::string(kind) == "quasiconcave_lse") return {true, "I5' witness: " + p.witness};
  }
  return {false, "unreachable"};
}

Verdict worked_index() {
  const auto w = oracle::walk(1);
  DividendStream d = w->tree().zeros();
  d[1] = {1.0, -0.9};
  IndexConfig cfg;
  cfg.tol = 1e-9;
  const double a = acceptability_index(builtin_family("coherent"), *w, d, 0, cfg)[0];
  return {std::abs(a - 1.0 / 18.0) < 1e-7, "alpha_0 = " + fmt("%.10f", a)};
}

Verdict pricing_properties() {
  return battery_run([](oracle::Rng& r, int k) { return battery::pricing_case(r, k, 1e-10); }, 200,
                     1007);
}

Verdict direct_arbitrage() {
  const MarketModel m = fixture::direct_arbitrage();
  const auto r = find_arbitrage(m, 0);
  if (!r.found || !validate_certificate(r.certificate, m, 0, r.node)) {
    return {false, "no valid certificate at t = 0"};
  }
  const TradingStrategy psi = fixture::direct_arbitrage_psi(m);
  const Level v0 = setup_cost(psi, m, 0);
  const Level vt = liquidation_value(psi, m, 2);
  Level gain(vt.size());
  for (std::size_t j = 0; j < vt.size(); ++j) gain[j] = vt[j] - v0[0];
  const bool exact = gain == Level{1.0, 1.0, 0.0, 0.0};
  return {exact && validate_certificate(psi, m, 0, 0),
          "search certificate valid, reference strategy gain (1,1,0,0)" +
              std::string(exact ? "" : " MISMATCH")};
}

Verdict conic_no_arbitrage() {
  oracle::Rng rng(1008);
  long total = 0;
  struct Case {
    int securities;
    const char* family;
    double ga, gb;
    std::vector<double> values;
  };
  const std::vector<Case> cases = {
      {1, "coherent", 1.0, 1.0, {0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0}},
      {1, "entropic", 0.5, 2.0, {0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0}},
      {2, "coherent", 0.5, 0.5, {0.0, 0.5, 2.0}},
      {2, "quasiconcave_lse", 1.0, 1.0, {0.0, 0.5, 2.0}},
  };
  for (const auto& c : cases) {
    const MarketModel m = fixture::conic_market(rng, 2, c.securities, c.family, c.ga, c.gb);
    const auto rep = exhaustive_arbitrage_search(m, 0, c.values);
    if (rep.combinations < 100000) return {false, "grid too small"};
    if (rep.found) return {false, std::string("certificate found for ") + c.family};
    total += rep.combinations;
  }
  return {true, std::to_string(total) + " strategies over 4 markets, none found"};
}

Verdict order_book() {
  const OrderBook ask = fixture::aapl_ask();
  const std::vector<std::pair<std::int64_t, std::int64_t>> ladder = {
      {11661, 200}, {11662, 700}, {11663, 543}, {11664, 643}, {11665, 343}};
  const std::int64_t c200 = ask.cost_cents(200), c500 = ask.cost_cents(500);
  const bool ok = c200 == 2332200 && c500 == 5830800 && c200 == oracle::walk_book_cents(ladder, 200) &&
                  c500 == oracle::walk_book_cents(ladder, 500);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%lld.%02lld and %lld.%02lld", static_cast<long long>(c200 / 100),
                static_cast<long long>(c200 % 100), static_cast<long long>(c500 / 100),
                static_cast<long long>(c500 % 100));
  return {ok, buf};
}

Verdict hedged_sandwich() {
  oracle::Rng rng(1009);
  static const char* kFamilies[] = {"coherent", "entropic", "quasiconcave_lse"};
  int ngd_none = 0;
  double worst = 0.0;
  for (int n = 0; n < 30; ++n) {
    const char* fam = kFamilies[n % 3];
    const auto f = builtin_family(fam);
    const double gm = oracle::uniform(rng, 0.3, 1.5);
    const MarketModel m = fixture::conic_market(rng, 2, 1 + n % 2, fam, gm, gm);
    const auto d = oracle::random_stream(rng, m.tree());
    const double gamma = oracle::uniform(rng, 0.3, 2.0);
    const Level phi = {oracle::uniform(rng, 0.5, 2.0)};
    SearchConfig cfg;
    cfg.seed = n;
    const double tol = 2.0 * cfg.refine_tol;
    const auto ha = hedged_ask(f, gamma, phi, d, m, 0, cfg);
    const auto hb = hedged_bid(f, gamma, phi, d, m, 0, cfg);
    worst = std::max({worst, ha.value[0] - ha.unhedged[0], hb.unhedged[0] - hb.value[0]});
    if (ha.value[0] > ha.unhedged[0] + tol) return {false, "hedged ask above ask, case " + std::to_string(n)};
    if (hb.value[0] < hb.unhedged[0] - tol) return {false, "hedged bid below bid, case " + std::to_string(n)};
    if (check_ngd(f, gamma, m, 0, cfg).verdict == NgdVerdict::NoneFound) {
      ++ngd_none;
      if (hb.value[0] > ha.value[0] + tol) return {false, "hedged bid above hedged ask, case " + std::to_string(n)};
    }
  }
  double rep_gap = 0.0;
  std::string per_family;
  for (int k = 0; k < 3; ++k) {
    const char* fam = kFamilies[k];
    const auto f = builtin_family(fam);
    double gap = 0.0;
    for (int n = 0; n < 3; ++n) {
      const MarketModel m = fixture::conic_market(rng, 2, 1, fam, 0.3, 0.3);
      SearchConfig cfg;
      cfg.bound = 2.0;
      if (check_ngd(f, 2.0, m, 0, cfg).verdict != NgdVerdict::NoneFound) continue;
      const auto& d = m.security(0).d_ask;
      const double a = hedged_ask(f, 2.0, {1.0}, d, m, 0, cfg).value[0];
      const double b = hedged_bid(f, 2.0, {1.0}, d, m, 0, cfg).value[0];
      gap = std::max({gap, std::abs(a - m.price(0, Side::Ask, Leg::Long, 0, 0, 1.0)),
                      std::abs(b - m.price(0, Side::Bid, Leg::Long, 0, 0, 1.0))});
    }
    rep_gap = std::max(rep_gap, gap);
    per_family += std::string(k ? ", " : "") + fam + " " + fmt("%.2g", gap);
  }
  return {rep_gap < 1e-6, "30 instances (" + std::to_string(ngd_none) + " NGD NONE_FOUND), worst " +
                              fmt("%.2g", worst) + "; replication gap " + per_family};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

Verdict determinism(const std::string& cli, const std::string& scenarios, const std::string& work) {
  const auto t0 = Clock::now();
  fs::remove_all(work);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(scenarios)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) return {false, "no scenarios in " + scenarios};
  for (const char* run : {"a", "b"}) {
    for (const auto& s : files) {
      const std::string out = work + "/" + run + "/" + s.stem().string();
      const std::string cmd = "\"" + cli + "\" run \"" + s.string() + "\" --seed 7 --jobs 2 --out \"" +
                              out + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, s.filename().string() + " did not exit 0"};
    }
  }
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(work + "/a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), work + "/a");
    if (slurp(e.path()) != slurp(fs::path(work + "/b") / rel)) return {false, rel.string() + " differs"};
    ++compared;
  }
  const double secs = seconds_since(t0);
  return {compared > 0 && secs < 60.0, std::to_string(files.size()) + " scenarios, " +
                                           std::to_string(compared) + " artifacts identical, " +
                                           fmt("%.2f", secs) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli = GCONIC_CLI_PATH, scenarios = GCONIC_SCENARIO_DIR;
  std::string work = (fs::temp_directory_path() / "gconic_acceptance").string();
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string k = argv[i];
    if (k == "--cli") cli = argv[i + 1];
    else if (k == "--scenarios") scenarios = argv[i + 1];
    else if (k == "--work") work = argv[i + 1];
  }
  struct Criterion {
    const char* title;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {"entropic oracle equivalence", entropic_oracle},
      {"linear-measure equivalence", linear_measure},
      {"g-expectation axiom suite", gexp_axioms},
      {"comparison theorem", comparison},
      {"DCRM/DAI axioms", dcrm_dai},
      {"worked index value", worked_index},
      {"pricing properties", pricing_properties},
      {"arbitrage example", direct_arbitrage},
      {"conic market no-arbitrage", conic_no_arbitrage},
      {"order-book operator", order_book},
      {"hedged-price sandwich", hedged_sandwich},
      {"determinism", [&] { return determinism(cli, scenarios, work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s %2zu %-30s %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].title,
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
