// SPDX-License-Identifier: MIT
#include "scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <thread>

#include "gconic/bsde.hpp"
#include "gconic/errors.hpp"
#include "gconic/market.hpp"
#include "gconic/pricing.hpp"
#include "gconic/risk.hpp"

namespace gconic::cli {

namespace fs = std::filesystem;

bool RunSummary::passed() const {
  return std::all_of(jobs.begin(), jobs.end(), [](const JobOutcome& j) { return j.passed; });
}

// ---------------------------------------------------------------------------
// output formatting

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace {

void dump_to(const json& j, int depth, std::string& out) {
  const std::string pad(2 * depth + 2, ' ');
  const std::string close(2 * depth, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(it.key()).dump() + ": ";
        dump_to(it.value(), depth + 1, out);
      }
      out += "\n" + close + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
      if (flat) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          dump_to(j[i], depth + 1, out);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump_to(j[i], depth + 1, out);
      }
      out += "\n" + close + "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      const std::string s = format_number(v);
      out += std::isfinite(v) ? s : "\"" + s + "\"";
      return;
    }
    default:
      out += j.dump();
  }
}

json level_json(const Level& x) {
  json a = json::array();
  for (double v : x) a.push_back(v);
  return a;
}

json levels_json(const std::vector<Level>& x, int from = 0) {
  json a = json::array();
  for (std::size_t t = from; t < x.size(); ++t) a.push_back(level_json(x[t]));
  return a;
}

json strategy_json(const TradingStrategy& s) {
  json j;
  j["bank"] = levels_json(s.bank, 1);
  j["longs"] = json::array();
  j["shorts"] = json::array();
  for (const auto& l : s.longs) j["longs"].push_back(levels_json(l, 1));
  for (const auto& l : s.shorts) j["shorts"].push_back(levels_json(l, 1));
  return j;
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw JobFailed("cannot write " + tmp.string());
    f << text;
  }
  fs::rename(tmp, path);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// config access with key paths

class Node {
 public:
  Node(const json* j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return *j_; }
  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Node at(const std::string& key) const {
    if (!j_->is_object()) fail("expected an object");
    if (!j_->contains(key)) throw ConfigInvalid(child(key), "missing");
    return Node(&(*j_)[key], child(key));
  }
  Node at(std::size_t i) const { return Node(&(*j_)[i], path_ + "[" + std::to_string(i) + "]"); }

  std::size_t size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }
  bool is_array() const { return j_->is_array(); }
  bool is_object() const { return j_->is_object(); }
  bool is_string() const { return j_->is_string(); }
  bool is_number() const { return j_->is_number(); }
  bool is_null() const { return j_->is_null(); }

  double num() const {
    if (!j_->is_number()) fail("expected a number");
    return j_->get<double>();
  }
  int integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<int>();
  }
  std::uint64_t seed() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<long long>() >= 0)) {
      fail("expected a nonnegative integer");
    }
    return j_->get<std::uint64_t>();
  }
  bool boolean() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }
  std::string str() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).num());
    return out;
  }
  std::vector<Level> levels() const {
    std::vector<Level> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).numbers());
    return out;
  }

  double num_or(const std::string& key, double d) const { return has(key) ? at(key).num() : d; }
  int int_or(const std::string& key, int d) const { return has(key) ? at(key).integer() : d; }
  std::string str_or(const std::string& key, const std::string& d) const {
    return has(key) ? at(key).str() : d;
  }
  bool bool_or(const std::string& key, bool d) const { return has(key) ? at(key).boolean() : d; }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigInvalid(path_, what); }

 private:
  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  const json* j_;
  std::string path_;
};

/// Runs `f`, turning library errors into ConfigInvalid at `path`.
template <class F>
auto guarded(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigInvalid&) {
    throw;
  } catch (const Error& e) {
    throw ConfigInvalid(path, e.what());
  }
}

// ---------------------------------------------------------------------------
// scenario model

struct DriverEntry {
  std::string kind;
  double param = 0.0;
  Driver driver;
};

struct FamilyEntry {
  std::string kind;
  DriverFamily family;
};

struct Model {
  std::string name;
  std::uint64_t seed = 0;
  bool strict = false;
  MartingalePtr w;
  std::map<std::string, DriverEntry> drivers;
  std::map<std::string, FamilyEntry> families;
  std::map<std::string, DividendStream> streams;
  std::shared_ptr<MarketModel> market;
  std::map<std::string, int> security_index;
  SearchConfig search;
};

struct JobResult {
  json result = json::object();
  std::vector<std::string> failures;
  std::vector<std::string> warnings;
  std::vector<std::string> csv;
};

struct Job {
  std::string name;
  std::string type;
  std::function<JobResult()> run;
};

TreePtr parse_tree(const Node& n) {
  const std::string kind = n.at("kind").str();
  return guarded(n.path(), [&]() -> TreePtr {
    if (kind == "binary") {
      return std::make_shared<const FiltrationTree>(
          FiltrationTree::binary(n.at("horizon").integer(), n.num_or("p_up", 0.5)));
    }
    if (kind == "uniform") {
      return std::make_shared<const FiltrationTree>(
          FiltrationTree::uniform(n.at("horizon").integer(), n.at("branching").integer()));
    }
    if (kind == "explicit") {
      const Node levels = n.at("levels");
      TreeSpec spec;
      for (std::size_t t = 0; t < levels.size(); ++t) {
        LevelSpec ls;
        ls.probabilities = levels.at(t).levels();
        spec.levels.push_back(std::move(ls));
      }
      return std::make_shared<const FiltrationTree>(build_tree(spec));
    }
    n.at("kind").fail("unknown tree kind '" + kind + "'");
  });
}

MartingalePtr parse_martingale(const Node* n, TreePtr tree) {
  const std::string kind = n ? n->str_or("kind", "walk") : "walk";
  const std::string path = n ? n->path() : "martingale";
  return guarded(path, [&]() -> MartingalePtr {
    if (kind == "walk") return std::make_shared<const Martingale>(symmetric_random_walk(tree));
    if (kind == "explicit") {
      const auto inc = n->at("increments").levels();
      if (static_cast<int>(inc.size()) != tree->horizon()) {
        n->at("increments").fail("expected one level per period");
      }
      Adapted dw = tree->zeros();
      for (int t = 1; t <= tree->horizon(); ++t) {
        if (static_cast<int>(inc[t - 1].size()) != tree->size(t)) {
          n->at("increments").at(t - 1).fail("expected " + std::to_string(tree->size(t)) +
                                             " values");
        }
        dw[t] = inc[t - 1];
      }
      return std::make_shared<const Martingale>(tree, dw);
    }
    throw ConfigInvalid(path + ".kind", "unknown martingale kind '" + kind + "'");
  });
}

DividendStream parse_stream(const Node& n, const FiltrationTree& tr) {
  const int T = tr.horizon();
  if (n.has("levels")) {
    const auto lv = n.at("levels").levels();
    if (static_cast<int>(lv.size()) != T + 1) n.at("levels").fail("expected T+1 levels");
    for (int t = 0; t <= T; ++t) {
      if (static_cast<int>(lv[t].size()) != tr.size(t)) {
        n.at("levels").at(t).fail("expected " + std::to_string(tr.size(t)) + " values");
      }
    }
    for (double v : lv[0]) {
      if (v != 0.0) n.at("levels").at(0).fail("D_0 must be zero");
    }
    return lv;
  }
  if (n.has("terminal")) {
    const auto x = n.at("terminal").numbers();
    if (static_cast<int>(x.size()) != tr.leaves()) n.at("terminal").fail("expected one value per leaf");
    return single_payment(tr, x, T);
  }
  if (n.has("cds")) {
    const Node c = n.at("cds");
    const Node tau = c.at("tau");
    std::vector<std::optional<int>> taus;
    for (std::size_t j = 0; j < tau.size(); ++j) {
      if (tau.at(j).is_null()) taus.emplace_back();
      else taus.emplace_back(tau.at(j).integer());
    }
    try {
      return cds_dividends(tr, taus, c.at("protection").num(), c.at("spread").num());
    } catch (const ConfigInvalid& e) {
      throw ConfigInvalid(c.path() + "." + e.key(), e.what());
    }
  }
  n.fail("expected one of 'levels', 'terminal', 'cds'");
}

OrderBook parse_book(const Node& n, Side side) {
  std::vector<BookLevel> levels;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const auto row = n.at(i).numbers();
    if (row.size() != 2) n.at(i).fail("expected [price, size]");
    levels.push_back({row[0], row[1]});
  }
  return guarded(n.path(), [&] { return OrderBook(side, levels); });
}

void apply_search(const Node& n, SearchConfig& cfg) {
  cfg.grid_points = n.int_or("grid_points", cfg.grid_points);
  cfg.starts = n.int_or("starts", cfg.starts);
  cfg.bound = n.num_or("bound", cfg.bound);
  cfg.max_dimension = n.int_or("max_dimension", cfg.max_dimension);
  cfg.max_sweeps = n.int_or("max_sweeps", cfg.max_sweeps);
  cfg.refine_tol = n.num_or("refine_tol", cfg.refine_tol);
  if (cfg.grid_points < 2) n.at("grid_points").fail("need at least 2 points");
  if (cfg.starts < 1) n.at("starts").fail("need at least 1 start");
  if (cfg.bound < 0.0) n.at("bound").fail("must be nonnegative");
}

template <class Map>
const typename Map::mapped_type& lookup(const Map& m, const Node& ref, const char* what) {
  const std::string id = ref.str();
  auto it = m.find(id);
  if (it == m.end()) ref.fail(std::string("unknown ") + what + " '" + id + "'");
  return it->second;
}

Level constant_level(const FiltrationTree& tr, int t, double v) { return Level(tr.size(t), v); }

int parse_time(const Node& job, const FiltrationTree& tr, int dflt) {
  const int t = job.int_or("t", dflt);
  if (t < 0 || t >= tr.horizon()) job.at("t").fail("need 0 <= t < T");
  return t;
}

std::string csv_row(int t, int node, const char* side, double gamma, const std::string& family,
                    double phi, double value) {
  return std::to_string(t) + "," + std::to_string(node) + "," + side + "," +
         format_number(gamma) + "," + family + "," + format_number(phi) + "," +
         format_number(value);
}

void heuristic_none(JobResult& r, bool strict, const std::string& what) {
  const std::string msg = what + ": NONE_FOUND is heuristic, absence is not proven";
  if (strict) r.failures.push_back(msg);
  else r.warnings.push_back(msg);
}

double max_abs_diff(const Level& a, const Level& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// ---------------------------------------------------------------------------
// jobs

Job solve_job(const Node& n, const Model& m) {
  const DriverEntry& d = lookup(m.drivers, n.at("driver"), "driver");
  const auto& tr = m.w->tree();
  Level terminal;
  if (n.at("terminal").is_string()) {
    terminal = cumulative_from(tr, lookup(m.streams, n.at("terminal"), "stream"), 0);
  } else {
    terminal = n.at("terminal").numbers();
    if (static_cast<int>(terminal.size()) != tr.leaves()) {
      n.at("terminal").fail("expected one value per leaf");
    }
  }
  const std::string oracle = n.str_or("oracle", "");
  if (!oracle.empty() && oracle != "entropic") n.at("oracle").fail("unknown oracle '" + oracle + "'");
  if (oracle == "entropic" && d.kind != "entropic") n.at("oracle").fail("needs an entropic driver");
  const double tol = n.num_or("tolerance", 1e-9);
  const MartingalePtr w = m.w;
  return {"", "solve", [=]() {
            JobResult r;
            const BsdeSolution sol = solve_bsde(d.driver, *w, terminal);
            const auto res = check_solution(d.driver, *w, sol);
            r.result["y"] = levels_json(sol.y);
            r.result["residuals"] = {{"identity", res.identity},
                                     {"martingale", res.martingale},
                                     {"orthogonal", res.orthogonal}};
            double worst = std::max({res.identity, res.martingale, res.orthogonal});
            if (oracle == "entropic") {
              Level neg = terminal;
              for (double& v : neg) v = -v;
              double diff = 0.0;
              for (int t = 0; t <= tr.horizon(); ++t) {
                const Level ref =
                    entropic_risk_closed_form(w->tree(), neg, tr.horizon(), t, d.param);
                diff = std::max(diff, max_abs_diff(sol.y[t], ref));
              }
              r.result["oracle"] = {{"kind", oracle}, {"max_residual", diff}};
              worst = std::max(worst, diff);
            }
            r.result["worst"] = worst;
            if (!(worst < tol)) {
              r.failures.push_back("max residual " + format_number(worst) + " >= " +
                                   format_number(tol));
            }
            return r;
          }};
}

Job price_job(const Node& n, const Model& m) {
  const std::string fam_id = n.at("family").str();
  const FamilyEntry& f = lookup(m.families, n.at("family"), "family");
  const DividendStream& d = lookup(m.streams, n.at("stream"), "stream");
  std::vector<double> gammas;
  if (n.at("gamma").is_array()) gammas = n.at("gamma").numbers();
  else gammas = {n.at("gamma").num()};
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (!(gammas[i] > 0.0)) n.at("gamma").fail("levels must be positive");
  }
  const double phi = n.num_or("phi", 1.0);
  if (phi < 0.0) n.at("phi").fail("must be nonnegative");
  const auto& tr = m.w->tree();
  std::vector<int> times;
  if (n.has("t")) {
    for (std::size_t i = 0; i < n.at("t").size(); ++i) {
      const int t = n.at("t").at(i).integer();
      if (t < 0 || t > tr.horizon()) n.at("t").at(i).fail("out of range");
      times.push_back(t);
    }
  } else {
    for (int t = 0; t < tr.horizon(); ++t) times.push_back(t);
  }
  const double tol = n.num_or("tolerance", 1e-10);
  const MartingalePtr w = m.w;
  return {"", "price", [=, &f, &d]() {
            JobResult r;
            r.csv.push_back("t,node,side,gamma,family,phi,value");
            double worst = 0.0;
            json tc = json::object();
            for (double gamma : gammas) {
              for (int t : times) {
                const Level ph = constant_level(tr, t, phi);
                const Level a = ask(f.family, gamma, ph, d, *w, t).value;
                const Level b = bid(f.family, gamma, ph, d, *w, t).value;
                for (int i = 0; i < tr.size(t); ++i) {
                  r.csv.push_back(csv_row(t, i, "ask", gamma, fam_id, phi, a[i]));
                  r.csv.push_back(csv_row(t, i, "bid", gamma, fam_id, phi, b[i]));
                  if (a[i] < b[i] - tol) {
                    r.failures.push_back("ask below bid at t=" + std::to_string(t) +
                                         " node=" + std::to_string(i));
                  }
                }
              }
              for (Side side : {Side::Ask, Side::Bid}) {
                const auto rep = time_consistency_check(side, f.family, gamma, d, *w, tol);
                tc[std::string(side_name(side)) + "@" + format_number(gamma)] = rep.max_residual;
                worst = std::max(worst, rep.max_residual);
                if (!rep.passed) {
                  r.failures.push_back(std::string("time consistency (") + side_name(side) +
                                       ") residual " + format_number(rep.max_residual));
                }
              }
            }
            r.result["time_consistency"] = tc;
            if (gammas.size() > 1) {
              std::vector<double> sorted = gammas;
              std::sort(sorted.begin(), sorted.end());
              bool mono = true;
              for (int t : times) {
                if (t >= tr.horizon()) continue;
                const auto rep = spread_monotonicity(f.family, sorted, d, *w, t, tol);
                if (!rep.passed) {
                  mono = false;
                  r.failures.push_back("spread not monotone: " + rep.witness);
                }
              }
              r.result["spread_monotone"] = mono;
            }
            r.result["worst"] = worst;
            return r;
          }};
}

std::vector<DividendStream> make_battery(const FiltrationTree& tr, std::uint64_t seed, int count,
                                         double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<DividendStream> out;
  for (int k = 0; k < count; ++k) {
    DividendStream d = tr.zeros();
    for (int t = 1; t <= tr.horizon(); ++t) {
      for (double& v : d[t]) v = u(rng);
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<std::string> name_list(const Node& n, const std::string& key,
                                   std::vector<std::string> dflt,
                                   const std::vector<std::string>& allowed) {
  if (!n.has(key)) return dflt;
  std::vector<std::string> out;
  const Node l = n.at(key);
  for (std::size_t i = 0; i < l.size(); ++i) {
    const std::string s = l.at(i).str();
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      l.at(i).fail("unknown axiom '" + s + "'");
    }
    out.push_back(s);
  }
  return out;
}

Job axioms_job(const Node& n, const Model& m, std::uint64_t seed) {
  const std::string kind = n.at("kind").str();
  if (kind != "dcrm" && kind != "dai") n.at("kind").fail("expected 'dcrm' or 'dai'");
  const bool dcrm = kind == "dcrm";
  const std::vector<std::string> all =
      dcrm ? std::vector<std::string>{"R1", "R2", "R3", "R4", "R5", "R6", "R7"}
           : std::vector<std::string>{"I1", "I2", "I3", "I4", "I5", "I6", "I5'"};
  const std::vector<std::string> base(all.begin(), all.begin() + 6);
  const auto expect_pass = name_list(n, "expect_pass", base, all);
  const auto expect_fail = name_list(n, "expect_fail", {}, all);
  int count = 6;
  double lo = -1.0, hi = 2.0;
  std::vector<DividendStream> fixed;
  if (n.has("battery")) {
    const Node b = n.at("battery");
    count = b.int_or("count", count);
    lo = b.num_or("lo", lo);
    hi = b.num_or("hi", hi);
    if (b.has("streams")) {
      const Node ids = b.at("streams");
      for (std::size_t i = 0; i < ids.size(); ++i) fixed.push_back(lookup(m.streams, ids.at(i), "stream"));
    }
    if (count < 0) b.at("count").fail("must be nonnegative");
    if (count + fixed.size() == 0) b.fail("need at least one stream");
    if (!(hi > lo)) b.fail("need lo < hi");
  }
  const DriverEntry* drv = dcrm ? &lookup(m.drivers, n.at("driver"), "driver") : nullptr;
  const FamilyEntry* fam = dcrm ? nullptr : &lookup(m.families, n.at("family"), "family");
  const double tol = n.num_or("tolerance", dcrm ? 1e-10 : 1e-8);
  const MartingalePtr w = m.w;
  return {"", "axioms", [=]() {
            JobResult r;
            auto battery = fixed;
            for (auto& d : make_battery(w->tree(), seed, count, lo, hi)) battery.push_back(std::move(d));
            AxiomReport rep;
            if (dcrm) {
              rep = check_dcrm_axioms(drv->driver, *w, battery, {seed, tol});
            } else {
              DaiConfig cfg;
              cfg.seed = seed;
              cfg.index.tol = tol;
              rep = check_dai_axioms(fam->family, *w, battery, cfg);
            }
            json ax = json::object();
            double worst = 0.0;
            for (const auto& a : rep.axioms) {
              ax[a.name] = {{"passed", a.passed},
                            {"checks", a.checks},
                            {"worst", a.worst},
                            {"witness", a.witness}};
            }
            for (const auto& name : expect_pass) {
              const auto& a = rep.at(name);
              if (!a.passed) {
                worst = std::max(worst, a.worst);
                r.failures.push_back(name + " failed: " + a.witness);
              }
            }
            for (const auto& name : expect_fail) {
              if (rep.at(name).passed) r.failures.push_back(name + " passed but a failure was expected");
            }
            r.result["axioms"] = ax;
            r.result["battery"] = {
                {"count", count}, {"fixed", fixed.size()}, {"lo", lo}, {"hi", hi}, {"seed", seed}};
            r.result["worst"] = worst;
            return r;
          }};
}

Predictable parse_predictable(const Node& n, const FiltrationTree& tr) {
  const auto lv = n.levels();
  if (static_cast<int>(lv.size()) != tr.horizon()) n.fail("expected one level per period");
  Predictable p = tr.zeros_predictable();
  for (int u = 1; u <= tr.horizon(); ++u) {
    if (static_cast<int>(lv[u - 1].size()) != tr.size(u - 1)) {
      n.at(u - 1).fail("expected " + std::to_string(tr.size(u - 1)) + " values");
    }
    p[u] = lv[u - 1];
  }
  return p;
}

TradingStrategy parse_strategy(const Node& n, const MarketModel& mk) {
  const auto& tr = mk.tree();
  TradingStrategy s = zero_strategy(mk);
  if (n.has("bank")) s.bank = parse_predictable(n.at("bank"), tr);
  for (const char* key : {"longs", "shorts"}) {
    if (!n.has(key)) continue;
    const Node l = n.at(key);
    if (static_cast<int>(l.size()) != mk.size()) l.fail("expected one entry per security");
    auto& dst = std::string(key) == "longs" ? s.longs : s.shorts;
    for (int k = 0; k < mk.size(); ++k) dst[k] = parse_predictable(l.at(k), tr);
  }
  guarded(n.path(), [&] {
    check_strategy(s, mk);
    return 0;
  });
  return s;
}

const MarketModel& need_market(const Node& n, const Model& m) {
  if (!m.market) n.fail("job needs a market section");
  return *m.market;
}

Job arbitrage_job(const Node& n, const Model& m, SearchConfig cfg, bool strict) {
  const MarketModel& mk = need_market(n, m);
  const int t = parse_time(n, mk.tree(), 0);
  const std::string expect = n.str_or("expect", "");
  if (!expect.empty() && expect != "found" && expect != "none") {
    n.at("expect").fail("expected 'found' or 'none'");
  }
  std::optional<TradingStrategy> reference;
  Level expect_terminal;
  const int ref_node = n.int_or("node", 0);
  if (ref_node < 0 || ref_node >= mk.tree().size(t)) n.at("node").fail("no such node at level t");
  if (n.has("strategy")) {
    reference = parse_strategy(n.at("strategy"), mk);
    if (n.has("expect_terminal")) {
      expect_terminal = n.at("expect_terminal").numbers();
      if (static_cast<int>(expect_terminal.size()) != mk.tree().leaves()) {
        n.at("expect_terminal").fail("expected one value per leaf");
      }
    }
  }
  std::vector<double> grid;
  if (n.has("exhaustive")) {
    grid = n.at("exhaustive").at("values").numbers();
    for (double v : grid) {
      if (v < 0.0) n.at("exhaustive").at("values").fail("holdings must be nonnegative");
    }
  }
  const auto market = m.market;
  return {"", "arbitrage", [=]() {
            JobResult r;
            const auto& tr = market->tree();
            const ArbitrageResult a = find_arbitrage(*market, t, cfg);
            json res;
            res["found"] = a.found;
            res["bound"] = a.bound;
            res["evaluations"] = a.evaluations;
            if (a.found) {
              const bool valid = validate_certificate(a.certificate, *market, t, a.node);
              res["certificate"] = {{"node", a.node},
                                    {"strategy", strategy_json(a.certificate)},
                                    {"terminal", level_json(a.terminal)},
                                    {"min_terminal", a.min_terminal},
                                    {"max_terminal", a.max_terminal},
                                    {"residual", a.residual},
                                    {"valid", valid}};
              if (!valid) r.failures.push_back("certificate failed re-validation");
              if (expect == "none") r.failures.push_back("arbitrage found where none was expected");
            } else {
              heuristic_none(r, strict, "arbitrage search");
              if (expect == "found") r.failures.push_back("no arbitrage found");
            }
            res["worst"] = a.residual;
            if (!grid.empty()) {
              const auto ex = exhaustive_arbitrage_search(*market, t, grid, cfg.max_dimension);
              res["exhaustive"] = {{"combinations", ex.combinations}, {"found", ex.found}};
              if (ex.found && expect == "none") {
                r.failures.push_back("exhaustive search found a certificate");
              }
            }
            if (reference) {
              const Level v0 = setup_cost(*reference, *market, t);
              const Level vt = liquidation_value(*reference, *market, tr.horizon());
              const Level v0l = tr.lift(v0, t, tr.horizon());
              Level gain(vt.size());
              for (std::size_t j = 0; j < vt.size(); ++j) gain[j] = vt[j] - v0l[j];
              const auto sf = validate_self_financing(*reference, *market);
              const bool valid = validate_certificate(*reference, *market, t, ref_node);
              json ref = {{"setup_cost", level_json(v0)},
                          {"terminal_gain", level_json(gain)},
                          {"self_financing_residual", sf.max_residual},
                          {"valid", valid}};
              if (!valid) r.failures.push_back("reference strategy is not an arbitrage");
              if (!expect_terminal.empty()) {
                const bool match = gain == expect_terminal;
                ref["matches_expected"] = match;
                if (!match) r.failures.push_back("reference terminal gain differs from expected");
              }
              res["reference"] = ref;
            }
            r.result = res;
            return r;
          }};
}

Job hedged_job(const Node& n, const Model& m, SearchConfig cfg, bool strict) {
  const MarketModel& mk = need_market(n, m);
  const std::string fam_id = n.at("family").str();
  const FamilyEntry& f = lookup(m.families, n.at("family"), "family");
  const DividendStream& d = lookup(m.streams, n.at("stream"), "stream");
  const double gamma = n.at("gamma").num();
  if (!(gamma > 0.0)) n.at("gamma").fail("must be positive");
  const double phi = n.num_or("phi", 1.0);
  if (phi < 0.0) n.at("phi").fail("must be nonnegative");
  const int t = parse_time(n, mk.tree(), 0);
  const bool ngd = n.bool_or("ngd", false);
  int security = -1;
  double price_tol = 1e-6;
  if (n.has("expect_price")) {
    const Node e = n.at("expect_price");
    security = lookup(m.security_index, e.at("security"), "security");
    price_tol = e.num_or("tolerance", price_tol);
  }
  const auto market = m.market;
  const double sandwich_tol = 2.0 * cfg.refine_tol;
  return {"", "hedged", [=, &f, &d]() {
            JobResult r;
            const auto& tr = market->tree();
            const Level ph = constant_level(tr, t, phi);
            const HedgeResult ha = hedged_ask(f.family, gamma, ph, d, *market, t, cfg);
            const HedgeResult hb = hedged_bid(f.family, gamma, ph, d, *market, t, cfg);
            r.csv.push_back("t,node,side,gamma,family,phi,value");
            double worst = 0.0;
            for (int i = 0; i < tr.size(t); ++i) {
              r.csv.push_back(csv_row(t, i, "ask", gamma, fam_id, phi, ha.value[i]));
              r.csv.push_back(csv_row(t, i, "bid", gamma, fam_id, phi, hb.value[i]));
              const double over = ha.value[i] - ha.unhedged[i];
              const double under = hb.unhedged[i] - hb.value[i];
              worst = std::max({worst, over, under});
              if (over > sandwich_tol) r.failures.push_back("hedged ask above unhedged ask");
              if (under > sandwich_tol) r.failures.push_back("hedged bid below unhedged bid");
            }
            json res;
            res["hedged_ask"] = level_json(ha.value);
            res["hedged_bid"] = level_json(hb.value);
            res["unhedged_ask"] = level_json(ha.unhedged);
            res["unhedged_bid"] = level_json(hb.unhedged);
            res["ask_strategy"] = strategy_json(ha.strategy);
            res["bid_strategy"] = strategy_json(hb.strategy);
            res["bound"] = ha.bound;
            res["evaluations"] = ha.evaluations + hb.evaluations;
            if (ngd) {
              const NgdResult g = check_ngd(f.family, gamma, *market, t, cfg);
              res["ngd"] = verdict_name(g.verdict);
              if (g.verdict == NgdVerdict::NoneFound) {
                heuristic_none(r, strict, "good-deal search");
                for (int i = 0; i < tr.size(t); ++i) {
                  const double gap = hb.value[i] - ha.value[i];
                  worst = std::max(worst, gap);
                  if (gap > sandwich_tol) r.failures.push_back("hedged bid above hedged ask");
                }
              }
            }
            if (security >= 0) {
              double diff = 0.0;
              for (int i = 0; i < tr.size(t); ++i) {
                diff = std::max(diff, std::abs(ha.value[i] - market->price(security, Side::Ask,
                                                                           Leg::Long, t, i, phi)));
                diff = std::max(diff, std::abs(hb.value[i] - market->price(security, Side::Bid,
                                                                           Leg::Long, t, i, phi)));
              }
              res["market_price_gap"] = diff;
              if (diff > price_tol) {
                r.failures.push_back("hedged prices miss the market price by " +
                                     format_number(diff));
              }
            }
            res["worst"] = worst;
            r.result = res;
            return r;
          }};
}

Job ngd_job(const Node& n, const Model& m, SearchConfig cfg, bool strict) {
  const MarketModel& mk = need_market(n, m);
  const FamilyEntry& f = lookup(m.families, n.at("family"), "family");
  const double gamma = n.at("gamma").num();
  if (!(gamma > 0.0)) n.at("gamma").fail("must be positive");
  const int t = parse_time(n, mk.tree(), 0);
  const std::string expect = n.str_or("expect", "");
  if (!expect.empty() && expect != "good_deal" && expect != "none") {
    n.at("expect").fail("expected 'good_deal' or 'none'");
  }
  const auto market = m.market;
  return {"", "ngd", [=, &f]() {
            JobResult r;
            const NgdResult g = check_ngd(f.family, gamma, *market, t, cfg);
            json res;
            res["verdict"] = verdict_name(g.verdict);
            res["rho"] = level_json(g.rho);
            res["evaluations"] = g.evaluations;
            if (g.verdict == NgdVerdict::GoodDealFound) {
              res["certificate"] = {{"strategy", strategy_json(g.worst)},
                                    {"valid", g.certificate_valid}};
              if (!g.certificate_valid) r.failures.push_back("good-deal certificate invalid");
              if (expect == "none") r.failures.push_back("good deal found where none was expected");
            } else {
              heuristic_none(r, strict, "good-deal search");
              res["consistent"] = g.consistent;
              if (g.arbitrage) res["arbitrage_found"] = g.arbitrage->found;
              if (!g.consistent) r.failures.push_back("NONE_FOUND but an arbitrage was found");
              if (expect == "good_deal") r.failures.push_back("no good deal found");
            }
            double lowest = 0.0;
            for (double v : g.rho) lowest = std::min(lowest, v);
            res["min_rho"] = lowest;
            r.result = res;
            return r;
          }};
}

// ---------------------------------------------------------------------------

struct Prepared {
  Model model;
  std::vector<Job> jobs;
};

std::unique_ptr<Prepared> prepare(const json& config, const std::string& name,
                                  const RunOptions& opt) {
  auto out = std::make_unique<Prepared>();
  Model& m = out->model;
  const Node root(&config, "");
  if (!config.is_object()) root.fail("scenario must be a JSON object");
  m.name = root.str_or("name", name);
  m.seed = root.has("seed") ? root.at("seed").seed() : 0;
  if (opt.seed) m.seed = *opt.seed;
  m.strict = opt.strict;

  const TreePtr tree = parse_tree(root.at("tree"));
  if (root.has("martingale")) {
    const Node mn = root.at("martingale");
    m.w = parse_martingale(&mn, tree);
  } else {
    m.w = parse_martingale(nullptr, tree);
  }
  const auto& tr = m.w->tree();

  if (root.has("drivers")) {
    const Node dn = root.at("drivers");
    if (!dn.is_object()) dn.fail("expected an object");
    for (auto it = config["drivers"].begin(); it != config["drivers"].end(); ++it) {
      const Node e = dn.at(it.key());
      DriverEntry de;
      de.kind = e.at("kind").str();
      de.param = e.num_or("param", 0.0);
      de.driver = guarded(e.path(), [&] { return builtin_driver(de.kind, de.param); });
      m.drivers.emplace(it.key(), std::move(de));
    }
  }
  if (root.has("families")) {
    const Node fn = root.at("families");
    if (!fn.is_object()) fn.fail("expected an object");
    for (auto it = config["families"].begin(); it != config["families"].end(); ++it) {
      const Node e = fn.at(it.key());
      FamilyEntry fe;
      fe.kind = e.at("kind").str();
      const double param = e.num_or("param", 0.0);
      fe.family = guarded(e.path(), [&] { return builtin_family(fe.kind, param); });
      m.families.emplace(it.key(), std::move(fe));
    }
  }
  if (root.has("streams")) {
    const Node sn = root.at("streams");
    if (!sn.is_object()) sn.fail("expected an object");
    for (auto it = config["streams"].begin(); it != config["streams"].end(); ++it) {
      m.streams.emplace(it.key(), parse_stream(sn.at(it.key()), tr));
    }
  }
  if (root.has("search")) apply_search(root.at("search"), m.search);
  m.search.seed = m.seed;

  if (root.has("market")) {
    m.market = std::make_shared<MarketModel>(m.w);
    const Node secs = root.at("market").at("securities");
    for (std::size_t k = 0; k < secs.size(); ++k) {
      const Node s = secs.at(k);
      const std::string id = s.at("id").str();
      if (m.security_index.count(id)) s.at("id").fail("duplicate security id");
      const std::string flavor = s.at("flavor").str();
      DividendStream d_ask, d_bid;
      if (s.has("stream")) {
        d_ask = d_bid = lookup(m.streams, s.at("stream"), "stream");
      } else {
        d_ask = lookup(m.streams, s.at("ask_stream"), "stream");
        d_bid = lookup(m.streams, s.at("bid_stream"), "stream");
      }
      Security sec = guarded(s.path(), [&]() -> Security {
        if (flavor == "conic") {
          const FamilyEntry& f = lookup(m.families, s.at("family"), "family");
          return conic_security(id, m.w, f.family, s.at("gamma_ask").num(),
                                s.at("gamma_bid").num(), d_ask, d_bid);
        }
        if (flavor == "direct") {
          return direct_security(id, tr, s.at("ask").levels(), s.at("bid").levels(), d_ask,
                                 d_bid);
        }
        if (flavor == "tabulated") {
          return tabulated_security(id, tr, parse_book(s.at("ask_book"), Side::Ask),
                                    parse_book(s.at("bid_book"), Side::Bid), d_ask, d_bid);
        }
        s.at("flavor").fail("unknown flavor '" + flavor + "'");
      });
      guarded(s.path(), [&] {
        m.market->add(std::move(sec));
        return 0;
      });
      m.security_index.emplace(id, static_cast<int>(k));
    }
  }

  const Node jobs = root.at("jobs");
  std::map<std::string, int> names;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Node j = jobs.at(i);
    const std::string jname = j.at("name").str();
    if (jname.empty() || jname.find_first_not_of("abcdefghijklmnopqrstuvwxyz"
                                                 "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") !=
                             std::string::npos) {
      j.at("name").fail("names use letters, digits, '_' and '-'");
    }
    if (jname == "summary") j.at("name").fail("'summary' is reserved");
    if (names.count(jname)) j.at("name").fail("duplicate job name");
    names[jname] = static_cast<int>(i);
    const std::string type = j.at("type").str();
    SearchConfig cfg = m.search;
    if (j.has("search")) apply_search(j.at("search"), cfg);
    const std::uint64_t seed = j.has("seed") ? j.at("seed").seed() : m.seed;
    cfg.seed = seed;
    Job job;
    if (type == "solve") job = solve_job(j, m);
    else if (type == "price") job = price_job(j, m);
    else if (type == "axioms") job = axioms_job(j, m, seed);
    else if (type == "arbitrage") job = arbitrage_job(j, m, cfg, m.strict);
    else if (type == "hedged") job = hedged_job(j, m, cfg, m.strict);
    else if (type == "ngd") job = ngd_job(j, m, cfg, m.strict);
    else j.at("type").fail("unknown job type '" + type + "'");
    job.name = jname;
    out->jobs.push_back(std::move(job));
  }
  return out;
}

JobOutcome execute(const Job& job, const std::string& scenario, const fs::path& dir) {
  JobOutcome o{job.name, job.type, true, {}, {}};
  JobResult r;
  try {
    r = job.run();
  } catch (const std::exception& e) {
    r = JobResult{};
    r.failures.push_back(e.what());
  }
  o.failures = r.failures;
  o.warnings = r.warnings;
  o.passed = r.failures.empty();
  json report;
  report["scenario"] = scenario;
  report["job"] = job.name;
  report["type"] = job.type;
  report["passed"] = o.passed;
  report["failures"] = r.failures;
  report["warnings"] = r.warnings;
  report["result"] = r.result;
  write_atomic(dir / (job.name + ".json"), canonical_dump(report) + "\n");
  if (!r.csv.empty()) {
    std::string text;
    for (const auto& line : r.csv) text += line + "\n";
    write_atomic(dir / (job.name + ".csv"), text);
  }
  return o;
}

}  // namespace

std::string canonical_dump(const json& j) {
  std::string out;
  dump_to(j, 0, out);
  return out;
}

RunSummary run_scenario(const json& config, const std::string& name, const RunOptions& opt) {
  const auto prep = prepare(config, name, opt);
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  RunSummary summary;
  summary.scenario = prep->model.name;
  summary.seed = prep->model.seed;
  const auto& jobs = prep->jobs;
  summary.jobs.resize(jobs.size());
  const int workers = std::max(1, std::min<int>(opt.jobs, static_cast<int>(jobs.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      summary.jobs[i] = execute(jobs[i], summary.scenario, dir);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < workers; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  json s;
  s["scenario"] = summary.scenario;
  s["seed"] = summary.seed;
  s["strict"] = opt.strict;
  s["passed"] = summary.passed();
  s["jobs"] = json::array();
  for (const auto& j : summary.jobs) {
    s["jobs"].push_back({{"name", j.name}, {"type", j.type}, {"passed", j.passed},
                         {"warnings", j.warnings.size()}});
  }
  write_atomic(dir / "summary.json", canonical_dump(s) + "\n");
  return summary;
}

RunSummary run_scenario_file(const std::string& path, const RunOptions& opt) {
  std::ifstream f(path);
  if (!f) throw ConfigInvalid("$", "cannot open " + path);
  json config;
  try {
    config = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid("$", std::string("parse error: ") + e.what());
  }
  return run_scenario(config, fs::path(path).stem().string(), opt);
}

namespace {

json read_artifact(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw ArtifactMissing(p.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error&) {
    throw ArtifactMissing(p.string() + " is not valid JSON");
  }
}

std::string num_text(const json& v) {
  if (v.is_number()) return format_number(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void strategy_table(const json& s, std::ostringstream& os) {
  const json& bank = s["bank"];
  os << "    u  node  bank";
  for (std::size_t k = 0; k < s["longs"].size(); ++k) os << "  long[" << k << "]  short[" << k << "]";
  os << "\n";
  for (std::size_t u = 0; u < bank.size(); ++u) {
    for (std::size_t p = 0; p < bank[u].size(); ++p) {
      os << "    " << u + 1 << "  " << p << "  " << num_text(bank[u][p]);
      for (std::size_t k = 0; k < s["longs"].size(); ++k) {
        os << "  " << num_text(s["longs"][k][u][p]) << "  " << num_text(s["shorts"][k][u][p]);
      }
      os << "\n";
    }
  }
}

}  // namespace

std::string render_report(const std::string& out_dir) {
  const fs::path dir(out_dir);
  const json summary = read_artifact(dir / "summary.json");
  std::ostringstream os;
  for (const auto& entry : summary.at("jobs")) {
    const std::string name = entry.at("name").get<std::string>();
    const json rep = read_artifact(dir / (name + ".json"));
    const json& res = rep["result"];
    os << (rep["passed"].get<bool>() ? "[PASS] " : "[FAIL] ") << name << " ("
       << rep["type"].get<std::string>() << ")\n";
    if (res.contains("worst")) os << "  worst residual: " << num_text(res["worst"]) << "\n";
    if (res.contains("verdict")) {
      os << "  verdict: " << res["verdict"].get<std::string>() << "  min rho "
         << num_text(res["min_rho"]) << "\n";
    }
    if (res.contains("certificate")) {
      char buf[20];
      std::snprintf(buf, sizeof buf, "%016llx",
                    static_cast<unsigned long long>(fnv1a(canonical_dump(res["certificate"]))));
      os << "  certificate digest: " << buf << "\n";
      if (res["certificate"].contains("strategy")) strategy_table(res["certificate"]["strategy"], os);
    }
    if (res.contains("axioms")) {
      for (auto it = res["axioms"].begin(); it != res["axioms"].end(); ++it) {
        const json& a = it.value();
        os << "  " << it.key() << "  " << (a["passed"].get<bool>() ? "pass" : "FAIL") << "  checks "
           << a["checks"].get<long>() << "  worst " << num_text(a["worst"]) << "\n";
      }
    }
    for (const auto& f : rep["failures"]) os << "  failure: " << f.get<std::string>() << "\n";
    for (const auto& w : rep["warnings"]) os << "  warning: " << w.get<std::string>() << "\n";
  }
  return os.str();
}

}  // namespace gconic::cli
