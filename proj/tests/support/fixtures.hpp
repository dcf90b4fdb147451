// SPDX-License-Identifier: MIT
// Small markets with known answers.
#pragma once

#include <memory>

#include "gconic/market.hpp"
#include "support/oracles.hpp"

namespace fixture {

using namespace gconic;

/// One stock on a fair binary tree with T = 2 and no dividends.
inline MarketModel direct_arbitrage() {
  const auto w = oracle::walk(2);
  const auto& tr = w->tree();
  const Adapted ask = {{10.0}, {12.0, 11.0}, {13.0, 11.0, 12.0, 10.0}};
  const Adapted bid = {{10.0}, {11.0, 10.0}, {12.0, 10.0, 11.0, 9.0}};
  MarketModel m(w);
  m.add(direct_security("S", tr, ask, bid, tr.zeros(), tr.zeros()));
  return m;
}

/// Buy one share on borrowed cash, sell it after an up move.
inline TradingStrategy direct_arbitrage_psi(const MarketModel& m) {
  TradingStrategy s = zero_strategy(m);
  s.bank[1] = {-10.0};
  s.longs[0][1] = {1.0};
  s.bank[2] = {1.0, 0.0};
  s.longs[0][2] = {0.0, 0.0};
  return s;
}

inline OrderBook aapl_ask() {
  return OrderBook(Side::Ask, {{116.61, 200}, {116.62, 700}, {116.63, 543}, {116.64, 643},
                               {116.65, 343}});
}

inline OrderBook aapl_bid() {
  return OrderBook(Side::Bid, {{116.59, 400}, {116.58, 400}, {116.57, 800}, {116.56, 500},
                               {116.55, 543}});
}

/// A conic security on a symmetric walk with a random stream.
inline MarketModel conic_market(oracle::Rng& rng, int horizon, int securities, const char* family,
                                double gamma_ask, double gamma_bid) {
  const auto w = oracle::walk(horizon);
  MarketModel m(w);
  for (int k = 0; k < securities; ++k) {
    const auto d = oracle::random_stream(rng, w->tree(), -1.0, 1.0);
    m.add(conic_security("X" + std::to_string(k), w, builtin_family(family), gamma_ask, gamma_bid,
                         d, d));
  }
  return m;
}

}  // namespace fixture
