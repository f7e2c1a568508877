#pragma once

// LOBSTER-style message/orderbook parsing, cleaning and serialization.
//
// Prices are kept as integer price units of $0.0001 (the LOBSTER file unit)
// everywhere; conversion to dollars happens only at presentation.

#include "lobkit/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace lobkit {

using Price = std::int64_t; ///< $0.0001 units
using Volume = std::int64_t; ///< shares
using TimeNs = std::int64_t; ///< nanoseconds after midnight ET
using Date = std::chrono::year_month_day;

inline constexpr Price kPriceUnitsPerDollar = 10'000;
inline constexpr Price kAskSentinel = 9'999'999'999;
inline constexpr Price kBidSentinel = -9'999'999'999;
inline constexpr int kDefaultLevels = 10;
inline constexpr double kNasdaqTick = 0.01;

inline constexpr TimeNs kNsPerSecond = 1'000'000'000;
inline constexpr TimeNs hms(int h, int m, int s) {
  return (static_cast<TimeNs>(h) * 3600 + m * 60 + s) * kNsPerSecond;
}
inline constexpr TimeNs kTrimStart = hms(9, 40, 0);
inline constexpr TimeNs kTrimEnd = hms(15, 50, 0);

inline double to_dollars(Price p) { return static_cast<double>(p) / kPriceUnitsPerDollar; }

/// Converts a tick size in dollars to price units; the tick must be a whole
/// number of $0.0001 units.
inline Price tick_units(double theta) {
  if (!(theta > 0.0)) fail(Errc::InvalidArgument, "tick size must be positive");
  const double units = theta * kPriceUnitsPerDollar;
  const auto rounded = static_cast<Price>(units + 0.5);
  if (rounded <= 0 || std::abs(units - static_cast<double>(rounded)) > 1e-6)
    fail(Errc::InvalidArgument, "tick size is not a multiple of $0.0001");
  return rounded;
}

// ---------------------------------------------------------------------------
// Dates

inline Date parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-' ||
      std::from_chars(s.data(), s.data() + 4, y).ec != std::errc{} ||
      std::from_chars(s.data() + 5, s.data() + 7, m).ec != std::errc{} ||
      std::from_chars(s.data() + 8, s.data() + 10, d).ec != std::errc{})
    fail(Errc::InvalidArgument, "bad date '" + std::string(s) + "', expected YYYY-MM-DD");
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) fail(Errc::InvalidArgument, "invalid calendar date '" + std::string(s) + "'");
  return date;
}

inline std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

inline bool is_weekend(Date d) {
  const std::chrono::weekday wd{std::chrono::sys_days{d}};
  return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

// ---------------------------------------------------------------------------
// Domain types

enum class EventType : std::int8_t {
  NewLimit = 1,
  PartialCancel = 2,
  Deletion = 3,
  VisibleExecution = 4,
  HiddenExecution = 5,
  Cross = 6,
  Halt = 7,
};

enum class Direction : std::int8_t { Buy = 1, Sell = -1 };

struct MessageEvent {
  TimeNs time_ns = 0;
  EventType event_type = EventType::NewLimit;
  std::int64_t order_id = 0;
  Volume size = 0;
  Price price = 0;
  Direction direction = Direction::Buy;

  bool operator==(const MessageEvent &) const = default;
};

struct PriceLevel {
  Price price = 0;
  Volume volume = 0;

  bool operator==(const PriceLevel &) const = default;
};

using BookSide = std::vector<std::optional<PriceLevel>>;

/// One book state. Level 0 is the best quote; asks increase and bids
/// decrease with level index. Empty levels are std::nullopt.
struct LobSnapshot {
  TimeNs time_ns = 0;
  BookSide asks;
  BookSide bids;

  int levels() const noexcept { return static_cast<int>(asks.size()); }
  const std::optional<PriceLevel> &best_ask() const { return asks.front(); }
  const std::optional<PriceLevel> &best_bid() const { return bids.front(); }

  bool operator==(const LobSnapshot &) const = default;
};

/// A (stock, day) series. Raw series hold events and snapshots zipped 1:1;
/// cleaning keeps them in lockstep, so events[i] is the message that produced
/// snapshots[i] after cleaning as well.
struct DaySeries {
  std::string stock;
  Date date{};
  std::vector<LobSnapshot> snapshots;
  std::vector<MessageEvent> events;
  double tick_size = kNasdaqTick;

  std::size_t size() const noexcept { return snapshots.size(); }
  bool operator==(const DaySeries &) const = default;
};

// ---------------------------------------------------------------------------
// Best-quote arithmetic

inline std::pair<Price, Price> best_prices(const LobSnapshot &s) {
  if (s.asks.empty() || s.bids.empty() || !s.best_ask() || !s.best_bid())
    fail(Errc::MissingBest, "snapshot at t=" + std::to_string(s.time_ns) + " lacks a best quote");
  return {s.best_ask()->price, s.best_bid()->price};
}

/// ask1 + bid1 in price units: twice the mid, always exact.
inline Price mid_sum(const LobSnapshot &s) {
  const auto [a, b] = best_prices(s);
  return a + b;
}

inline double mid_price(const LobSnapshot &s) {
  return static_cast<double>(mid_sum(s)) / (2.0 * kPriceUnitsPerDollar);
}

inline Price spread_units(const LobSnapshot &s) {
  const auto [a, b] = best_prices(s);
  if (a <= b)
    fail(Errc::CrossedQuote, "ask1 <= bid1 at t=" + std::to_string(s.time_ns));
  return a - b;
}

inline double spread(const LobSnapshot &s) { return to_dollars(spread_units(s)); }

inline bool is_crossed_or_locked(const LobSnapshot &s) {
  return s.best_ask() && s.best_bid() && s.best_ask()->price <= s.best_bid()->price;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string where(std::string_view file, std::size_t line) {
  return std::string(file) + ":" + std::to_string(line);
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto &f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

template <class Int> bool parse_int(std::string_view s, Int &out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

/// Parses "seconds[.fraction]" into nanoseconds without going through
/// floating point. Fractions longer than 9 digits are rejected.
inline bool parse_time_ns(std::string_view s, TimeNs &out) {
  const auto dot = s.find('.');
  std::int64_t secs = 0;
  if (!parse_int(s.substr(0, dot), secs) || secs < 0) return false;
  std::int64_t frac = 0;
  if (dot != std::string_view::npos) {
    auto f = s.substr(dot + 1);
    if (f.empty() || f.size() > 9) return false;
    for (char c : f)
      if (c < '0' || c > '9') return false;
    if (!parse_int(f, frac)) return false;
    for (auto n = f.size(); n < 9; ++n) frac *= 10;
  }
  out = secs * kNsPerSecond + frac;
  return true;
}

inline std::string format_time_ns(TimeNs t) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%lld.%09lld", static_cast<long long>(t / kNsPerSecond),
                static_cast<long long>(t % kNsPerSecond));
  return buf;
}

} // namespace detail

inline MessageEvent parse_message_row(std::string_view line, std::string_view file, std::size_t lineno) {
  const auto f = detail::split_csv(line);
  if (f.size() != 6)
    fail(Errc::MalformedRow, detail::where(file, lineno) + ": expected 6 message columns, got " +
                                 std::to_string(f.size()));
  MessageEvent e;
  int type = 0, dir = 0;
  if (!detail::parse_time_ns(f[0], e.time_ns) || !detail::parse_int(f[1], type) ||
      !detail::parse_int(f[2], e.order_id) || !detail::parse_int(f[3], e.size) ||
      !detail::parse_int(f[4], e.price) || !detail::parse_int(f[5], dir))
    fail(Errc::MalformedRow, detail::where(file, lineno) + ": non-numeric message field");
  if (type < 1 || type > 7) fail(Errc::MalformedRow, detail::where(file, lineno) + ": unknown event type");
  if (dir != 1 && dir != -1) fail(Errc::MalformedRow, detail::where(file, lineno) + ": direction must be 1 or -1");
  e.event_type = static_cast<EventType>(type);
  e.direction = static_cast<Direction>(dir);
  if (e.event_type != EventType::Halt && (e.size < 1 || e.price <= 0))
    fail(Errc::MalformedRow, detail::where(file, lineno) + ": size and price must be positive");
  return e;
}

inline LobSnapshot parse_orderbook_row(std::string_view line, int levels, std::string_view file,
                                       std::size_t lineno) {
  const auto f = detail::split_csv(line);
  if (static_cast<int>(f.size()) != 4 * levels)
    fail(Errc::MalformedRow, detail::where(file, lineno) + ": expected " + std::to_string(4 * levels) +
                                 " orderbook columns, got " + std::to_string(f.size()));
  LobSnapshot s;
  s.asks.resize(levels);
  s.bids.resize(levels);
  for (int l = 0; l < levels; ++l) {
    Price ap = 0, bp = 0;
    Volume av = 0, bv = 0;
    if (!detail::parse_int(f[4 * l], ap) || !detail::parse_int(f[4 * l + 1], av) ||
        !detail::parse_int(f[4 * l + 2], bp) || !detail::parse_int(f[4 * l + 3], bv))
      fail(Errc::MalformedRow, detail::where(file, lineno) + ": non-numeric orderbook field");
    if (ap != kAskSentinel) {
      if (av < 1 || ap <= 0) fail(Errc::MalformedRow, detail::where(file, lineno) + ": bad ask level");
      s.asks[l] = PriceLevel{ap, av};
    }
    if (bp != kBidSentinel) {
      if (bv < 1 || bp <= 0) fail(Errc::MalformedRow, detail::where(file, lineno) + ": bad bid level");
      s.bids[l] = PriceLevel{bp, bv};
    }
  }
  // Level ordering: present levels strictly monotone, and no present level
  // may follow an empty one.
  auto check_side = [&](const BookSide &side, bool ascending) {
    std::optional<Price> prev;
    bool gap = false;
    for (const auto &lvl : side) {
      if (!lvl) {
        gap = true;
        continue;
      }
      if (gap) fail(Errc::MalformedRow, detail::where(file, lineno) + ": populated level after an empty one");
      if (prev && (ascending ? lvl->price <= *prev : lvl->price >= *prev))
        fail(Errc::MalformedRow, detail::where(file, lineno) + ": level prices not monotone");
      prev = lvl->price;
    }
  };
  check_side(s.asks, true);
  check_side(s.bids, false);
  return s;
}

/// Parses a message/orderbook stream pair into a raw (uncleaned) day.
inline DaySeries parse_day(std::istream &messages, std::istream &orderbook, int levels,
                           std::string_view message_name = "<messages>",
                           std::string_view orderbook_name = "<orderbook>") {
  if (levels < 1) fail(Errc::InvalidArgument, "levels must be >= 1");
  DaySeries day;
  std::string mline, oline;
  std::size_t lineno = 0;
  for (;;) {
    const bool has_m = static_cast<bool>(std::getline(messages, mline));
    const bool has_o = static_cast<bool>(std::getline(orderbook, oline));
    if (!has_m && !has_o) break;
    ++lineno;
    if (has_m != has_o)
      fail(Errc::RowCountMismatch, "message and orderbook files diverge at row " + std::to_string(lineno));
    if (mline.empty() && oline.empty()) continue;
    auto ev = parse_message_row(mline, message_name, lineno);
    auto snap = parse_orderbook_row(oline, levels, orderbook_name, lineno);
    snap.time_ns = ev.time_ns;
    if (!day.events.empty() && ev.time_ns < day.events.back().time_ns)
      fail(Errc::NonMonotoneTime, detail::where(message_name, lineno) + ": timestamp decreases");
    day.events.push_back(ev);
    day.snapshots.push_back(std::move(snap));
  }
  return day;
}

inline DaySeries parse_day(const std::string &message_path, const std::string &orderbook_path, int levels) {
  std::ifstream m(message_path), o(orderbook_path);
  if (!m) fail(Errc::Io, "cannot open " + message_path);
  if (!o) fail(Errc::Io, "cannot open " + orderbook_path);
  return parse_day(m, o, levels, message_path, orderbook_path);
}

// ---------------------------------------------------------------------------
// Cleaning

struct CleaningStats {
  std::size_t crossed_removed = 0; ///< crossed, locked or one-sided rows
  std::size_t collapsed = 0;
  std::size_t trimmed = 0;
};

/// Removes crossed/locked/one-sided quotes, collapses equal-timestamp runs to
/// their last state, then drops rows outside [09:40, 15:50] ET. Throws
/// EmptyDay when nothing survives.
inline DaySeries clean_day(const DaySeries &raw, CleaningStats *stats = nullptr) {
  CleaningStats st;
  DaySeries out;
  out.stock = raw.stock;
  out.date = raw.date;
  out.tick_size = raw.tick_size;
  const bool has_events = raw.events.size() == raw.snapshots.size();

  std::vector<std::size_t> keep;
  keep.reserve(raw.snapshots.size());
  for (std::size_t i = 0; i < raw.snapshots.size(); ++i) {
    const auto &s = raw.snapshots[i];
    const bool two_sided = !s.asks.empty() && !s.bids.empty() && s.best_ask() && s.best_bid();
    if (!two_sided || is_crossed_or_locked(s)) {
      ++st.crossed_removed;
      continue;
    }
    if (!keep.empty() && raw.snapshots[keep.back()].time_ns == s.time_ns) {
      keep.back() = i;
      ++st.collapsed;
      continue;
    }
    keep.push_back(i);
  }
  for (auto i : keep) {
    const auto t = raw.snapshots[i].time_ns;
    if (t < kTrimStart || t > kTrimEnd) {
      ++st.trimmed;
      continue;
    }
    out.snapshots.push_back(raw.snapshots[i]);
    if (has_events) out.events.push_back(raw.events[i]);
  }
  if (stats) *stats = st;
  if (out.snapshots.empty())
    fail(Errc::EmptyDay, raw.stock + " " + format_date(raw.date) + ": no snapshot survives cleaning");
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_messages_csv(std::ostream &os, const DaySeries &day) {
  for (const auto &e : day.events) {
    os << detail::format_time_ns(e.time_ns) << ',' << static_cast<int>(e.event_type) << ',' << e.order_id
       << ',' << e.size << ',' << e.price << ',' << static_cast<int>(e.direction) << '\n';
  }
}

inline void write_orderbook_row(std::ostream &os, const LobSnapshot &s) {
  for (int l = 0; l < s.levels(); ++l) {
    if (l) os << ',';
    const auto &a = s.asks[l];
    const auto &b = s.bids[l];
    os << (a ? a->price : kAskSentinel) << ',' << (a ? a->volume : 0) << ',' << (b ? b->price : kBidSentinel)
       << ',' << (b ? b->volume : 0);
  }
  os << '\n';
}

inline void write_orderbook_csv(std::ostream &os, const DaySeries &day) {
  for (const auto &s : day.snapshots) write_orderbook_row(os, s);
}

/// LOBSTER file naming: TICKER_YYYY-MM-DD_34200000_57600000_{message,orderbook}_L.csv
inline std::string lobster_file_name(const std::string &stock, Date date, std::string_view kind, int levels) {
  return stock + "_" + format_date(date) + "_34200000_57600000_" + std::string(kind) + "_" +
         std::to_string(levels) + ".csv";
}

// Columnar binary day dump ("LOBKDAY1"): all integers little-endian.
//   magic[8] | u32 levels | u32 stock_len | stock | i32 y | u32 m | u32 d |
//   f64 tick | u64 n | time_ns[n] | per level: ask_p[n] ask_v[n] bid_p[n] bid_v[n] |
//   u8 has_events | events as columns (time, type, id, size, price, dir)
// Empty levels use the orderbook sentinels.
namespace detail {

inline constexpr char kDayMagic[8] = {'L', 'O', 'B', 'K', 'D', 'A', 'Y', '1'};

template <class T> void put_le(std::ostream &os, T v) {
  static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char *>(bytes.data()), sizeof(T));
}

template <class T> T get_le(std::istream &is) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char *>(bytes.data()), sizeof(T)))
    fail(Errc::MalformedRow, "truncated binary stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

} // namespace detail

inline void write_day_binary(std::ostream &os, const DaySeries &day) {
  using detail::put_le;
  os.write(detail::kDayMagic, 8);
  const auto levels = static_cast<std::uint32_t>(day.snapshots.empty() ? 0 : day.snapshots.front().levels());
  put_le(os, levels);
  put_le(os, static_cast<std::uint32_t>(day.stock.size()));
  os.write(day.stock.data(), static_cast<std::streamsize>(day.stock.size()));
  put_le(os, static_cast<std::int32_t>(static_cast<int>(day.date.year())));
  put_le(os, static_cast<std::uint32_t>(static_cast<unsigned>(day.date.month())));
  put_le(os, static_cast<std::uint32_t>(static_cast<unsigned>(day.date.day())));
  put_le(os, day.tick_size);
  const auto n = static_cast<std::uint64_t>(day.snapshots.size());
  put_le(os, n);
  for (const auto &s : day.snapshots) put_le(os, s.time_ns);
  for (std::uint32_t l = 0; l < levels; ++l) {
    for (const auto &s : day.snapshots) put_le(os, s.asks[l] ? s.asks[l]->price : kAskSentinel);
    for (const auto &s : day.snapshots) put_le(os, s.asks[l] ? s.asks[l]->volume : Volume{0});
    for (const auto &s : day.snapshots) put_le(os, s.bids[l] ? s.bids[l]->price : kBidSentinel);
    for (const auto &s : day.snapshots) put_le(os, s.bids[l] ? s.bids[l]->volume : Volume{0});
  }
  const bool has_events = day.events.size() == day.snapshots.size() && !day.events.empty();
  put_le(os, static_cast<std::uint8_t>(has_events));
  if (has_events) {
    for (const auto &e : day.events) put_le(os, e.time_ns);
    for (const auto &e : day.events) put_le(os, static_cast<std::int8_t>(e.event_type));
    for (const auto &e : day.events) put_le(os, e.order_id);
    for (const auto &e : day.events) put_le(os, e.size);
    for (const auto &e : day.events) put_le(os, e.price);
    for (const auto &e : day.events) put_le(os, static_cast<std::int8_t>(e.direction));
  }
}

inline DaySeries read_day_binary(std::istream &is) {
  using detail::get_le;
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kDayMagic, 8) != 0)
    fail(Errc::MalformedRow, "not a lobkit day file");
  DaySeries day;
  const auto levels = get_le<std::uint32_t>(is);
  const auto stock_len = get_le<std::uint32_t>(is);
  day.stock.resize(stock_len);
  if (stock_len && !is.read(day.stock.data(), stock_len)) fail(Errc::MalformedRow, "truncated stock name");
  const auto y = get_le<std::int32_t>(is);
  const auto m = get_le<std::uint32_t>(is);
  const auto d = get_le<std::uint32_t>(is);
  day.date = Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  day.tick_size = get_le<double>(is);
  const auto n = get_le<std::uint64_t>(is);
  day.snapshots.resize(n);
  for (auto &s : day.snapshots) {
    s.time_ns = get_le<TimeNs>(is);
    s.asks.resize(levels);
    s.bids.resize(levels);
  }
  for (std::uint32_t l = 0; l < levels; ++l) {
    std::vector<Price> ap(n), bp(n);
    std::vector<Volume> av(n), bv(n);
    for (auto &v : ap) v = get_le<Price>(is);
    for (auto &v : av) v = get_le<Volume>(is);
    for (auto &v : bp) v = get_le<Price>(is);
    for (auto &v : bv) v = get_le<Volume>(is);
    for (std::uint64_t i = 0; i < n; ++i) {
      if (ap[i] != kAskSentinel) day.snapshots[i].asks[l] = PriceLevel{ap[i], av[i]};
      if (bp[i] != kBidSentinel) day.snapshots[i].bids[l] = PriceLevel{bp[i], bv[i]};
    }
  }
  if (get_le<std::uint8_t>(is)) {
    day.events.resize(n);
    for (auto &e : day.events) e.time_ns = get_le<TimeNs>(is);
    for (auto &e : day.events) e.event_type = static_cast<EventType>(get_le<std::int8_t>(is));
    for (auto &e : day.events) e.order_id = get_le<std::int64_t>(is);
    for (auto &e : day.events) e.size = get_le<Volume>(is);
    for (auto &e : day.events) e.price = get_le<Price>(is);
    for (auto &e : day.events) e.direction = static_cast<Direction>(get_le<std::int8_t>(is));
  }
  return day;
}

} // namespace lobkit
