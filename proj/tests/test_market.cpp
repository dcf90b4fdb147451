// SPDX-License-Identifier: MIT
#include <gtest/gtest.h>

#include <cmath>

#include "gconic/errors.hpp"
#include "gconic/market.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace gconic;

namespace {

MarketModel mixed_market(oracle::Rng& rng) {
  const auto w = oracle::walk(3);
  const auto& tr = w->tree();
  MarketModel m(w);
  const auto d = oracle::random_stream(rng, tr);
  m.add(conic_security("C", w, builtin_family("entropic"), 1.0, 1.5, d, d));
  Adapted ask = tr.zeros(), bid = tr.zeros();
  for (int t = 0; t <= 3; ++t) {
    for (int i = 0; i < tr.size(t); ++i) {
      bid[t][i] = oracle::uniform(rng, 5.0, 10.0);
      ask[t][i] = bid[t][i] + oracle::uniform(rng, 0.0, 0.5);
    }
  }
  const auto d2 = oracle::random_stream(rng, tr, 0.0, 0.2);
  m.add(direct_security("S", tr, ask, bid, d2, d2));
  m.add(tabulated_security("B", tr, fixture::aapl_ask(), fixture::aapl_bid(), tr.zeros(),
                           tr.zeros()));
  return m;
}

TradingStrategy random_partial(oracle::Rng& rng, const MarketModel& m, double hi) {
  TradingStrategy s = zero_strategy(m);
  for (int k = 0; k < m.size(); ++k) {
    for (int u = 1; u <= m.tree().horizon(); ++u) {
      for (double& v : s.longs[k][u]) v = oracle::uniform(rng, 0.0, hi);
      for (double& v : s.shorts[k][u]) v = oracle::uniform(rng, 0.0, hi);
    }
  }
  return s;
}

}  // namespace

TEST(DirectArbitrage, ReferenceStrategyValues) {
  const MarketModel m = fixture::direct_arbitrage();
  const TradingStrategy psi = fixture::direct_arbitrage_psi(m);
  EXPECT_EQ(setup_cost(psi, m, 0), Level{0.0});
  EXPECT_EQ(liquidation_value(psi, m, 1), (Level{1.0, 0.0}));
  EXPECT_EQ(liquidation_value(psi, m, 2), (Level{1.0, 1.0, 0.0, 0.0}));
  EXPECT_TRUE(validate_self_financing(psi, m).passed);
  EXPECT_EQ(validate_self_financing(psi, m).max_residual, 0.0);
  EXPECT_TRUE(validate_certificate(psi, m, 0, 0));
}

TEST(DirectArbitrage, SearchFindsCertificate) {
  const MarketModel m = fixture::direct_arbitrage();
  const auto r = find_arbitrage(m, 0);
  ASSERT_TRUE(r.found);
  EXPECT_EQ(r.node, 0);
  EXPECT_GE(r.min_terminal, -1e-12);
  EXPECT_GT(r.max_terminal, 1e-9);
  EXPECT_TRUE(validate_certificate(r.certificate, m, 0, 0));
}

TEST(Strategy, RejectsNegativeHoldings) {
  const MarketModel m = fixture::direct_arbitrage();
  TradingStrategy s = zero_strategy(m);
  s.longs[0][1] = {-1.0};
  EXPECT_THROW(check_strategy(s, m), StrategyInvalid);
  s = zero_strategy(m);
  s.bank[2] = {1.0};
  EXPECT_THROW(check_strategy(s, m), StrategyInvalid);
}

TEST(Strategy, CompletedBankLegIsSelfFinancing) {
  oracle::Rng rng(61);
  const MarketModel m = mixed_market(rng);
  for (int n = 0; n < 200; ++n) {
    const TradingStrategy s = complete_bank_leg(random_partial(rng, m, 3.0), m);
    const auto rep = validate_self_financing(s, m);
    EXPECT_LT(rep.max_residual, 1e-12) << "strategy " << n << " t=" << rep.worst_t;
    EXPECT_NEAR(setup_cost(s, m, 0)[0], 0.0, 1e-12);
  }
}

TEST(Strategy, ConvexCombinationStaysSelfFinancing) {
  oracle::Rng rng(67);
  const MarketModel m = mixed_market(rng);
  const auto& tr = m.tree();
  for (int n = 0; n < 20; ++n) {
    const TradingStrategy a = complete_bank_leg(random_partial(rng, m, 2.0), m);
    const TradingStrategy b = complete_bank_leg(random_partial(rng, m, 2.0), m);
    const int t = n % 3;
    const Level lam = oracle::random_level(rng, tr.size(t), 0.0, 1.0);
    const TradingStrategy c = convex_combination(a, b, lam, m, t);
    EXPECT_LT(validate_self_financing(c, m).max_residual, 1e-12);
    for (int u = t + 1; u <= 3; ++u) {
      for (int p = 0; p < tr.size(u - 1); ++p) {
        const double l = lam[tr.ancestor(u - 1, p, t)];
        EXPECT_NEAR(c.longs[1][u][p], l * a.longs[1][u][p] + (1 - l) * b.longs[1][u][p], 1e-15);
      }
    }
  }
}

TEST(MarketAxioms, ConvexPricingAndNetting) {
  oracle::Rng rng(71);
  const MarketModel m = mixed_market(rng);
  const auto rep = check_market_axioms(m, 3, 8);
  EXPECT_TRUE(rep.m5) << rep.witness;
  EXPECT_TRUE(rep.m6) << rep.witness;
  EXPECT_GT(rep.checks, 0);
}

TEST(MarketModel, RejectsBadSecurities) {
  const auto w = oracle::walk(2);
  const auto& tr = w->tree();
  MarketModel m(w);
  Adapted d = tr.zeros();
  d[0] = {1.0};
  EXPECT_THROW(m.add(direct_security("S", tr, tr.zeros(), tr.zeros(), d, d)), ParamOutOfRange);
  Adapted short_d = tr.zeros();
  short_d[2].pop_back();
  EXPECT_THROW(m.add(direct_security("S", tr, tr.zeros(), tr.zeros(), short_d, short_d)),
               LevelMismatch);
}

TEST(OrderBook, AaplWalkTheBook) {
  const OrderBook ask = fixture::aapl_ask();
  EXPECT_EQ(ask.cost_cents(200), 2332200);
  EXPECT_EQ(ask.cost_cents(500), 5830800);
  const std::vector<std::pair<std::int64_t, std::int64_t>> ladder = {
      {11661, 200}, {11662, 700}, {11663, 543}, {11664, 643}, {11665, 343}};
  for (std::int64_t q : {0, 1, 199, 200, 201, 900, 1500, 2429}) {
    EXPECT_EQ(ask.cost_cents(q), oracle::walk_book_cents(ladder, q)) << q;
    EXPECT_NEAR(ask.cost(static_cast<double>(q)), oracle::walk_book_cents(ladder, q) / 100.0,
                1e-8);
  }
  EXPECT_DOUBLE_EQ(ask.depth(), 2429.0);
  EXPECT_THROW(ask.cost(2430.0), DepthExceeded);
  EXPECT_THROW(ask.cost_cents(2430), DepthExceeded);
  const OrderBook bid = fixture::aapl_bid();
  EXPECT_EQ(bid.cost_cents(500), 400 * 11659 + 100 * 11658);
}

TEST(OrderBook, ConvexAskConcaveBid) {
  const OrderBook ask = fixture::aapl_ask(), bid = fixture::aapl_bid();
  for (double q = 10.0; q < 2000.0; q += 37.0) {
    EXPECT_LE(ask.cost(q), 0.5 * (ask.cost(q - 10.0) + ask.cost(q + 10.0)) + 1e-9);
    EXPECT_GE(bid.cost(q), 0.5 * (bid.cost(q - 10.0) + bid.cost(q + 10.0)) - 1e-9);
    EXPECT_GE(ask.cost(q), bid.cost(q));
  }
}

TEST(OrderBook, RejectsUnorderedLadder) {
  EXPECT_THROW(OrderBook(Side::Ask, {{2.0, 1.0}, {1.0, 1.0}}), ParamOutOfRange);
  EXPECT_THROW(OrderBook(Side::Bid, {{1.0, 1.0}, {2.0, 1.0}}), ParamOutOfRange);
  EXPECT_THROW(OrderBook(Side::Ask, {{1.0, 0.0}}), ParamOutOfRange);
}

TEST(Cds, DividendsFromDefaultTimes) {
  const auto tr = FiltrationTree::binary(3);
  // leaves 0..3 default at 1; leaf 4 at 3; the rest survive
  std::vector<std::optional<int>> tau = {1, 1, 1, 1, 3, std::nullopt, std::nullopt, std::nullopt};
  const auto d = cds_dividends(tr, tau, 0.6, 0.05);
  EXPECT_EQ(d[0], Level{0.0});
  EXPECT_DOUBLE_EQ(d[1][0], 0.6);
  EXPECT_DOUBLE_EQ(d[1][1], -0.05);
  EXPECT_DOUBLE_EQ(d[2][0], 0.0);
  EXPECT_DOUBLE_EQ(d[2][2], -0.05);
  EXPECT_DOUBLE_EQ(d[3][4], 0.6);
  EXPECT_DOUBLE_EQ(d[3][5], -0.05);
  EXPECT_DOUBLE_EQ(d[3][0], 0.0);
}

TEST(Cds, RejectsNonStoppingTimes) {
  const auto tr = FiltrationTree::binary(2);
  EXPECT_THROW(cds_dividends(tr, {1, 2, std::nullopt, std::nullopt}, 1.0, 0.1), ConfigInvalid);
  EXPECT_THROW(cds_dividends(tr, {0, 0, 1, 1}, 1.0, 0.1), ConfigInvalid);
  EXPECT_THROW(cds_dividends(tr, {3, 3, 1, 1}, 1.0, 0.1), ConfigInvalid);
  EXPECT_THROW(cds_dividends(tr, {1, 1}, 1.0, 0.1), ConfigInvalid);
  try {
    cds_dividends(tr, {1, 2, 2, 2}, 1.0, 0.1);
    FAIL();
  } catch (const ConfigInvalid& e) {
    EXPECT_EQ(e.key(), "tau");
  }
}

TEST(NoArbitrage, ExhaustiveGridOnConicMarkets) {
  oracle::Rng rng(73);
  {
    const MarketModel m = fixture::conic_market(rng, 2, 1, "coherent", 1.0, 1.0);
    const auto rep = exhaustive_arbitrage_search(m, 0, {0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0});
    EXPECT_GE(rep.combinations, 100000);
    EXPECT_FALSE(rep.found);
  }
  {
    const MarketModel m = fixture::conic_market(rng, 2, 2, "entropic", 0.5, 2.0);
    const auto rep = exhaustive_arbitrage_search(m, 0, {0.0, 0.5, 2.0});
    EXPECT_GE(rep.combinations, 100000);
    EXPECT_FALSE(rep.found);
  }
}

TEST(NoArbitrage, HeuristicSearchOnConicMarket) {
  oracle::Rng rng(79);
  const MarketModel m = fixture::conic_market(rng, 2, 2, "coherent", 0.5, 0.5);
  for (int t = 0; t < 2; ++t) EXPECT_FALSE(find_arbitrage(m, t).found);
}

TEST(Hedged, TrivialHedgingSetGivesUnhedgedPrice) {
  oracle::Rng rng(83);
  const MarketModel m = fixture::conic_market(rng, 2, 1, "coherent", 1.0, 1.0);
  const auto d = oracle::random_stream(rng, m.tree());
  const auto f = builtin_family("entropic");
  SearchConfig cfg;
  cfg.hedge = false;
  const auto ha = hedged_ask(f, 1.0, {1.0}, d, m, 0, cfg);
  const auto hb = hedged_bid(f, 1.0, {1.0}, d, m, 0, cfg);
  EXPECT_EQ(ha.value, ask(f, 1.0, {1.0}, d, m.martingale(), 0).value);
  EXPECT_EQ(hb.value, bid(f, 1.0, {1.0}, d, m.martingale(), 0).value);
}

TEST(Hedged, ReplicableStreamRecoversMarketPrice) {
  oracle::Rng rng(89);
  const auto f = builtin_family("coherent");
  for (int n = 0; n < 5; ++n) {
    const MarketModel m = fixture::conic_market(rng, 2, 1, "coherent", 0.3, 0.3);
    const auto& d = m.security(0).d_ask;
    SearchConfig cfg;
    cfg.bound = 2.0;
    const auto ha = hedged_ask(f, 2.0, {1.0}, d, m, 0, cfg);
    const auto hb = hedged_bid(f, 2.0, {1.0}, d, m, 0, cfg);
    EXPECT_NEAR(ha.value[0], m.price(0, Side::Ask, Leg::Long, 0, 0, 1.0), 1e-6);
    EXPECT_NEAR(hb.value[0], m.price(0, Side::Bid, Leg::Long, 0, 0, 1.0), 1e-6);
  }
}

TEST(Hedged, ConvexMarketPricesAllowCheaperPartialHedge) {
  oracle::Rng rng(131);
  const auto f = builtin_family("entropic");
  const MarketModel m = fixture::conic_market(rng, 2, 1, "entropic", 0.3, 0.3);
  SearchConfig cfg;
  cfg.bound = 2.0;
  ASSERT_EQ(check_ngd(f, 2.0, m, 0, cfg).verdict, NgdVerdict::NoneFound);
  const auto& d = m.security(0).d_ask;
  const auto ha = hedged_ask(f, 2.0, {1.0}, d, m, 0, cfg);
  const double p = m.price(0, Side::Ask, Leg::Long, 0, 0, 1.0);
  // buying less than one unit and carrying the rest beats full replication
  EXPECT_LT(ha.value[0], p - 1e-3);
  EXPECT_GT(ha.strategy.longs[0][1][0], 0.0);
  EXPECT_LT(ha.strategy.longs[0][1][0], 1.0);
  const double psi = ha.strategy.longs[0][1][0];
  DividendStream rest = d;
  for (auto& level : rest) {
    for (double& v : level) v *= 1.0 - psi;
  }
  const double bound = m.price(0, Side::Ask, Leg::Long, 0, 0, psi) +
                       ask(f, 2.0, {1.0}, rest, m.martingale(), 0).value[0];
  EXPECT_LE(ha.value[0], bound + 1e-12);
}

TEST(Hedged, StreamInHedgingSetHasZeroPrice) {
  oracle::Rng rng(97);
  const auto f = builtin_family("coherent");
  for (int n = 0; n < 5; ++n) {
    const MarketModel m = fixture::conic_market(rng, 2, 1, "coherent", 1.0, 1.0);
    // buy one unit on credit at t = 0 and hold it
    TradingStrategy s = zero_strategy(m);
    s.longs[0][1] = {1.0};
    s.longs[0][2] = {1.0, 1.0};
    s = complete_bank_leg(s, m);
    DividendStream h = m.tree().zeros();
    Level prev = m.tree().lift({0.0}, 0, 1);
    for (int u = 1; u <= 2; ++u) {
      const Level v = liquidation_value(s, m, u);
      const Level before = u == 1 ? prev : m.tree().lift(prev, 1, 2);
      for (int i = 0; i < m.tree().size(u); ++i) h[u][i] = v[i] - before[i];
      prev = v;
    }
    SearchConfig cfg;
    cfg.bound = 2.0;
    ASSERT_EQ(check_ngd(f, 1.0, m, 0, cfg).verdict, NgdVerdict::NoneFound);
    const double a = hedged_ask(f, 1.0, {1.0}, h, m, 0, cfg).value[0];
    EXPECT_NEAR(a, 0.0, 1e-9);
    EXPECT_LE(hedged_bid(f, 1.0, {1.0}, h, m, 0, cfg).value[0], a + 2e-10);
  }
}

TEST(Hedged, SandwichOnRandomInstances) {
  oracle::Rng rng(101);
  static const char* kFamilies[] = {"coherent", "entropic", "quasiconcave_lse"};
  for (int n = 0; n < 6; ++n) {
    const char* fam = kFamilies[n % 3];
    const auto f = builtin_family(fam);
    const MarketModel m = fixture::conic_market(rng, 2, 1 + n % 2, fam, 1.0, 1.0);
    const auto d = oracle::random_stream(rng, m.tree());
    SearchConfig cfg;
    cfg.seed = n;
    const auto ha = hedged_ask(f, 1.0, {1.0}, d, m, 0, cfg);
    const auto hb = hedged_bid(f, 1.0, {1.0}, d, m, 0, cfg);
    EXPECT_LE(ha.value[0], ha.unhedged[0] + 2e-10) << fam;
    EXPECT_GE(hb.value[0], hb.unhedged[0] - 2e-10) << fam;
    const auto ngd = check_ngd(f, 1.0, m, 0, cfg);
    if (ngd.verdict == NgdVerdict::NoneFound) EXPECT_LE(hb.value[0], ha.value[0] + 2e-10) << fam;
  }
}

TEST(Ngd, ConicMarketHasNoGoodDeal) {
  oracle::Rng rng(103);
  const MarketModel m = fixture::conic_market(rng, 2, 1, "entropic", 1.0, 1.0);
  const auto r = check_ngd(builtin_family("entropic"), 1.0, m, 0);
  EXPECT_EQ(r.verdict, NgdVerdict::NoneFound);
  EXPECT_TRUE(r.consistent);
  ASSERT_TRUE(r.arbitrage.has_value());
  EXPECT_FALSE(r.arbitrage->found);
}

TEST(Ngd, ArbitrageIsAGoodDeal) {
  const MarketModel m = fixture::direct_arbitrage();
  const auto r = check_ngd(builtin_family("coherent"), 1.0, m, 0);
  EXPECT_EQ(r.verdict, NgdVerdict::GoodDealFound);
  EXPECT_TRUE(r.certificate_valid);
  EXPECT_LT(r.rho[0], 0.0);
  EXPECT_STREQ(verdict_name(r.verdict), "GOOD_DEAL_FOUND");
}

TEST(Hedged, LevelMonotonicity) {
  oracle::Rng rng(107);
  const auto f = builtin_family("coherent");
  for (int n = 0; n < 3; ++n) {
    const MarketModel m = fixture::conic_market(rng, 2, 1, "coherent", 1.0, 1.0);
    const auto d = oracle::random_stream(rng, m.tree());
    const auto rep = hedged_level_monotonicity(f, 0.5, 2.0, {1.0}, d, m, 0);
    EXPECT_TRUE(rep.passed()) << rep.worst;
  }
}

TEST(Hedged, ConvexityInTheStream) {
  oracle::Rng rng(109);
  const auto f = builtin_family("entropic");
  for (int n = 0; n < 3; ++n) {
    const MarketModel m = fixture::conic_market(rng, 2, 1, "entropic", 1.0, 1.0);
    const auto d1 = oracle::random_stream(rng, m.tree());
    const auto d2 = oracle::random_stream(rng, m.tree());
    const auto rep = hedged_convexity_check(f, 1.0, d1, d2, {0.3}, m, 0);
    EXPECT_TRUE(rep.passed()) << rep.worst;
  }
}

TEST(Hedged, ExtendedCashflowProbe) {
  oracle::Rng rng(113);
  const auto f = builtin_family("coherent");
  const MarketModel m = fixture::conic_market(rng, 2, 1, "coherent", 1.0, 1.0);
  const auto d = oracle::random_stream(rng, m.tree());
  const auto ha = hedged_ask(f, 1.0, {1.0}, d, m, 0);
  const auto hb = hedged_bid(f, 1.0, {1.0}, d, m, 0);
  const auto rep = extended_cashflow_probe({1.0}, d, m, 0, ha, hb);
  EXPECT_TRUE(rep.passed()) << rep.seller_best_min << " " << rep.buyer_best_min;
}

TEST(Hedged, TooManyLegs) {
  oracle::Rng rng(127);
  const MarketModel m = fixture::conic_market(rng, 5, 2, "coherent", 1.0, 1.0);
  const auto d = oracle::random_stream(rng, m.tree());
  EXPECT_THROW(hedged_ask(builtin_family("coherent"), 1.0, {1.0}, d, m, 0), InstanceTooLarge);
}
