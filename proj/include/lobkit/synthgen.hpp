#pragma once

// Zero-intelligence Poisson order flow that writes LOBSTER-format
// message/orderbook files. The tick-size regime is controlled through where
// limit orders land relative to the quotes and how large they are.

#include "lobkit/error.hpp"
#include "lobkit/lobster_io.hpp"
#include "lobkit/random.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace lobkit {

enum class Regime { SmallTick, MediumTick, LargeTick };

inline Regime parse_regime(std::string_view s) {
  if (s == "small" || s == "SmallTick") return Regime::SmallTick;
  if (s == "medium" || s == "MediumTick") return Regime::MediumTick;
  if (s == "large" || s == "LargeTick") return Regime::LargeTick;
  fail(Errc::InvalidConfig, "unknown regime '" + std::string(s) + "' (small|medium|large)");
}

inline std::string_view regime_name(Regime r) {
  switch (r) {
  case Regime::SmallTick: return "small";
  case Regime::MediumTick: return "medium";
  case Regime::LargeTick: return "large";
  }
  return "?";
}

/// Order-placement knobs per regime.
struct RegimeParams {
  double p_limit = 0.5;   ///< event mix; the rest is split by p_market
  double p_market = 0.2;
  double p_inside = 0.5;  ///< a limit order lands strictly inside a wide spread
  double offset_p = 0.5;  ///< geometric parameter of the distance behind the own best
  double gap_p = 0.5;     ///< geometric parameter of gaps between initial levels
  double mean_size = 100; ///< mean limit order size (shares)
  int initial_levels = 25;
  int min_levels = 14;    ///< a side below this is replenished by the next event
  double target_orders = 300; ///< cancellation intensity scales with live orders / this
};

inline RegimeParams regime_params(Regime r) {
  RegimeParams p;
  switch (r) {
  case Regime::LargeTick:
    p.p_limit = 0.55;
    p.p_market = 0.25;
    p.p_inside = 0.9;
    p.offset_p = 0.3;
    p.target_orders = 120;
    p.gap_p = 1.0;
    p.mean_size = 400;
    break;
  case Regime::MediumTick:
    p.p_limit = 0.55;
    p.p_market = 0.25;
    p.p_inside = 0.15;
    p.offset_p = 0.2;
    p.target_orders = 150;
    p.gap_p = 0.7;
    p.mean_size = 150;
    break;
  case Regime::SmallTick:
    p.p_limit = 0.55;
    p.p_market = 0.25;
    p.p_inside = 0.12;
    p.offset_p = 0.08;
    p.gap_p = 0.35;
    p.mean_size = 60;
    break;
  }
  return p;
}

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::string stock = "SYN";
  Date date{std::chrono::year{2019}, std::chrono::month{1}, std::chrono::day{2}};
  TimeNs session_start = hms(9, 30, 0);
  TimeNs session_end = hms(16, 0, 0);
  Regime regime = Regime::LargeTick;
  double event_rate = 5.0; ///< events per second
  double initial_mid = 100.0;
  int levels = kDefaultLevels;
  double crossed_fraction = 0.0;   ///< extra crossed rows per real event
  double duplicate_fraction = 0.0; ///< extra equal-timestamp rows per real event
  std::uint64_t max_events = 0;    ///< 0: run until the session ends

  void validate() const {
    if (!(event_rate > 0.0)) fail(Errc::InvalidConfig, "event rate must be positive");
    if (!(initial_mid >= 1.0)) fail(Errc::InvalidConfig, "initial mid must be at least $1");
    if (levels < 1) fail(Errc::InvalidConfig, "levels must be >= 1");
    if (session_end <= session_start || session_start < 0 || session_end > hms(24, 0, 0))
      fail(Errc::InvalidConfig, "bad session bounds");
    if (crossed_fraction < 0.0 || crossed_fraction >= 1.0 || duplicate_fraction < 0.0 || duplicate_fraction >= 1.0)
      fail(Errc::InvalidConfig, "defect fractions must lie in [0, 1)");
    if (!date.ok()) fail(Errc::InvalidConfig, "invalid date");
  }
};

struct DefectLog {
  std::vector<TimeNs> crossed_rows;
  std::vector<TimeNs> duplicate_rows;

  nlohmann::json to_json() const {
    return {{"crossed_rows", crossed_rows.size()},
            {"duplicate_rows", duplicate_rows.size()},
            {"crossed_times_ns", crossed_rows},
            {"duplicate_times_ns", duplicate_rows}};
  }
};

struct GeneratedDay {
  std::string messages_csv;
  std::string orderbook_csv;
  DefectLog defects;
  std::size_t rows = 0;
  std::size_t real_events = 0;
  double close_mid = 0.0;
};

namespace detail {

/// Price-time priority book in whole ticks.
class ZiBook {
public:
  struct Order {
    std::int64_t id;
    Volume size;
  };
  using Queue = std::deque<Order>;

  std::map<std::int64_t, Queue> asks;
  std::map<std::int64_t, Queue, std::greater<>> bids;

  std::int64_t best_ask() const { return asks.begin()->first; }
  std::int64_t best_bid() const { return bids.begin()->first; }

  void add(Direction d, std::int64_t price, std::int64_t id, Volume size) {
    if (d == Direction::Sell)
      asks[price].push_back({id, size});
    else
      bids[price].push_back({id, size});
    where_[id] = {d, price};
    live_mut(d).push_back(id);
    slot_[id] = live_mut(d).size() - 1;
  }

  /// Reduces an order; removes it when it reaches zero.
  void reduce(std::int64_t id, Volume by) {
    const auto [d, price] = where_.at(id);
    auto &q = d == Direction::Sell ? asks.at(price) : bids.at(price);
    for (auto it = q.begin(); it != q.end(); ++it) {
      if (it->id != id) continue;
      it->size -= by;
      if (it->size <= 0) {
        q.erase(it);
        if (q.empty()) {
          if (d == Direction::Sell)
            asks.erase(price);
          else
            bids.erase(price);
        }
        forget(id);
      }
      return;
    }
  }

  const std::vector<std::int64_t> &live(Direction d) const { return d == Direction::Sell ? live_asks_ : live_bids_; }
  std::pair<Direction, std::int64_t> locate(std::int64_t id) const { return where_.at(id); }
  Volume size_of(std::int64_t id) const {
    const auto [d, price] = where_.at(id);
    const auto &q = d == Direction::Sell ? asks.at(price) : bids.at(price);
    for (const auto &o : q)
      if (o.id == id) return o.size;
    return 0;
  }

  int depth(Direction d) const { return static_cast<int>(d == Direction::Sell ? asks.size() : bids.size()); }

private:
  std::vector<std::int64_t> &live_mut(Direction d) { return d == Direction::Sell ? live_asks_ : live_bids_; }

  void forget(std::int64_t id) {
    const auto d = where_.at(id).first;
    auto &v = live_mut(d);
    const auto pos = slot_.at(id);
    v[pos] = v.back();
    slot_[v[pos]] = pos;
    v.pop_back();
    slot_.erase(id);
    where_.erase(id);
  }

  std::unordered_map<std::int64_t, std::pair<Direction, std::int64_t>> where_;
  std::unordered_map<std::int64_t, std::size_t> slot_;
  std::vector<std::int64_t> live_asks_, live_bids_;
};

} // namespace detail

/// Runs one session of zero-intelligence flow: limit submissions, partial and
/// full cancellations, and executions against the front of the best queue,
/// with exponential inter-arrival times. Deterministic given the config.
inline GeneratedDay generate_day(const GeneratorConfig &cfg) {
  cfg.validate();
  const auto rp = regime_params(cfg.regime);
  Rng rng(cfg.seed);
  detail::ZiBook book;
  constexpr Price kTick = 100; // $0.01 in price units
  std::int64_t next_id = 1;
  auto draw_size = [&] { return 1 + rng.geometric(1.0 / rp.mean_size); };

  // Initial book around the requested mid.
  const auto mid_ticks = static_cast<std::int64_t>(std::llround(cfg.initial_mid * 100.0));
  {
    std::int64_t ask = mid_ticks + 1, bid = mid_ticks - (cfg.regime == Regime::LargeTick ? 0 : 1);
    for (int l = 0; l < rp.initial_levels; ++l) {
      for (int k = 0, n = 1 + static_cast<int>(rng.below(3)); k < n; ++k) {
        book.add(Direction::Sell, ask, next_id++, draw_size());
        book.add(Direction::Buy, bid, next_id++, draw_size());
      }
      ask += 1 + rng.geometric(rp.gap_p);
      bid -= 1 + rng.geometric(rp.gap_p);
    }
  }

  std::ostringstream msg, ob;
  GeneratedDay out;

  auto write_message = [&](TimeNs t, EventType type, std::int64_t id, Volume size, Price price, Direction d) {
    msg << lobkit::detail::format_time_ns(t) << ',' << static_cast<int>(type) << ',' << id << ',' << size << ','
        << price << ',' << static_cast<int>(d) << '\n';
  };
  auto write_book = [&](std::int64_t ask_override) {
    int l = 0;
    auto ai = book.asks.begin();
    auto bi = book.bids.begin();
    for (; l < cfg.levels; ++l) {
      if (l) ob << ',';
      if (ai != book.asks.end()) {
        Volume v = 0;
        for (const auto &o : ai->second) v += o.size;
        const std::int64_t p = (l == 0 && ask_override >= 0) ? ask_override : ai->first;
        ob << p * kTick << ',' << v;
        ++ai;
      } else {
        ob << kAskSentinel << ",0";
      }
      ob << ',';
      if (bi != book.bids.end()) {
        Volume v = 0;
        for (const auto &o : bi->second) v += o.size;
        ob << bi->first * kTick << ',' << v;
        ++bi;
      } else {
        ob << kBidSentinel << ",0";
      }
    }
    ob << '\n';
  };

  TimeNs t = cfg.session_start;
  for (;;) {
    const auto gap = std::max<TimeNs>(2, static_cast<TimeNs>(std::llround(rng.exponential(cfg.event_rate) * 1e9)));
    t += gap;
    if (t >= cfg.session_end) break;
    if (cfg.max_events && out.real_events >= cfg.max_events) break;

    // Crossed defect row just before the real event: ask1 pulled to bid1 or below.
    if (rng.bernoulli(cfg.crossed_fraction)) {
      const std::int64_t crossed = book.best_bid() - static_cast<std::int64_t>(rng.below(2));
      write_message(t - 1, EventType::NewLimit, 0, 1, crossed * kTick, Direction::Sell);
      write_book(crossed);
      out.defects.crossed_rows.push_back(t - 1);
      ++out.rows;
    }

    EventType type = EventType::NewLimit;
    std::int64_t id = 0;
    Volume size = 0;
    std::int64_t price = 0;
    Direction dir = rng.bernoulli(0.5) ? Direction::Buy : Direction::Sell;

    const bool thin_ask = book.depth(Direction::Sell) < rp.min_levels;
    const bool thin_bid = book.depth(Direction::Buy) < rp.min_levels;
    // Cancellation intensity grows with the number of resting orders, which
    // keeps the book size stationary.
    const double live_orders = static_cast<double>(book.live(Direction::Sell).size() + book.live(Direction::Buy).size());
    const double w_cancel = (1.0 - rp.p_limit - rp.p_market) * live_orders / rp.target_orders;
    const double u = rng.uniform() * (rp.p_limit + rp.p_market + w_cancel);
    if (thin_ask || thin_bid) {
      // Replenish the thin side behind its worst level.
      dir = thin_ask ? Direction::Sell : Direction::Buy;
      const std::int64_t worst = dir == Direction::Sell ? book.asks.rbegin()->first : book.bids.rbegin()->first;
      const std::int64_t off = 1 + rng.geometric(rp.offset_p);
      price = dir == Direction::Sell ? worst + off : std::max<std::int64_t>(1, worst - off);
      id = next_id++;
      size = draw_size();
      book.add(dir, price, id, size);
    } else if (u < rp.p_limit) {
      const std::int64_t a = book.best_ask(), b = book.best_bid();
      if (a - b > 1 && rng.bernoulli(rp.p_inside)) {
        price = b + 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(a - b - 1)));
      } else {
        const std::int64_t off = rng.geometric(rp.offset_p);
        price = dir == Direction::Sell ? a + off : std::max<std::int64_t>(1, b - off);
      }
      id = next_id++;
      size = draw_size();
      book.add(dir, price, id, size);
    } else if (u < rp.p_limit + rp.p_market) {
      // A marketable order of direction `dir` hits the front order on the
      // opposite side; the message carries the resting order's direction.
      const Direction resting = dir == Direction::Buy ? Direction::Sell : Direction::Buy;
      const auto &front =
          resting == Direction::Sell ? book.asks.begin()->second.front() : book.bids.begin()->second.front();
      type = EventType::VisibleExecution;
      id = front.id;
      price = resting == Direction::Sell ? book.best_ask() : book.best_bid();
      size = front.size;
      dir = resting;
      book.reduce(id, size);
    } else {
      const auto &ids = book.live(dir);
      id = ids[rng.below(ids.size())];
      price = book.locate(id).second;
      const Volume have = book.size_of(id);
      if (have > 1 && rng.bernoulli(0.5)) {
        type = EventType::PartialCancel;
        size = 1 + static_cast<Volume>(rng.below(static_cast<std::uint64_t>(have - 1)));
      } else {
        type = EventType::Deletion;
        size = have;
      }
      book.reduce(id, size);
    }

    write_message(t, type, id, size, price * kTick, dir);
    write_book(-1);
    ++out.rows;
    ++out.real_events;

    if (rng.bernoulli(cfg.duplicate_fraction)) {
      write_message(t, type, id, size, price * kTick, dir);
      write_book(-1);
      out.defects.duplicate_rows.push_back(t);
      ++out.rows;
    }
  }
  out.messages_csv = std::move(msg).str();
  out.orderbook_csv = std::move(ob).str();
  out.close_mid = static_cast<double>(book.best_ask() + book.best_bid()) / 200.0;
  return out;
}

/// Parses a generated day back into a raw DaySeries.
inline DaySeries to_day_series(const GeneratedDay &g, const GeneratorConfig &cfg) {
  std::istringstream m(g.messages_csv), o(g.orderbook_csv);
  auto day = parse_day(m, o, cfg.levels, "<synthetic messages>", "<synthetic orderbook>");
  day.stock = cfg.stock;
  day.date = cfg.date;
  return day;
}

/// Next weekday after `d`.
inline Date next_weekday(Date d) {
  auto sd = std::chrono::sys_days{d};
  do {
    sd += std::chrono::days{1};
  } while (is_weekend(Date{sd}));
  return Date{sd};
}

/// Consecutive weekdays starting at cfg.date (moved forward if it is a
/// weekend); each day opens at the previous close and uses seed + day index.
inline std::vector<std::pair<GeneratorConfig, GeneratedDay>> generate_days(GeneratorConfig cfg, int n_days) {
  if (n_days < 1) fail(Errc::InvalidConfig, "need at least one day");
  if (is_weekend(cfg.date)) cfg.date = next_weekday(cfg.date);
  std::vector<std::pair<GeneratorConfig, GeneratedDay>> out;
  const auto base_seed = cfg.seed;
  for (int i = 0; i < n_days; ++i) {
    cfg.seed = base_seed + static_cast<std::uint64_t>(i);
    auto g = generate_day(cfg);
    const double close = g.close_mid;
    out.emplace_back(cfg, std::move(g));
    cfg.initial_mid = std::max(1.0, close);
    cfg.date = next_weekday(cfg.date);
  }
  return out;
}

} // namespace lobkit
