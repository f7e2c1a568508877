#pragma once

// Microstructural statistics over cleaned day series: tick-size class,
// spread/depth distributions, best-quote volume tails, information richness
// and horizon-to-physical-time probabilities.

#include "lobkit/error.hpp"
#include "lobkit/lobster_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lobkit {

enum class TickClass { Small, Medium, Large };

inline std::string_view tick_class_name(TickClass c) {
  switch (c) {
  case TickClass::Small: return "small";
  case TickClass::Medium: return "medium";
  case TickClass::Large: return "large";
  }
  return "?";
}

struct TickClassification {
  TickClass value = TickClass::Medium;
  std::vector<TickClass> per_year;
  bool no_majority = false; ///< set when no class holds a strict majority of years
};

/// Per-year bounds: Small if <spread> >= 3 theta, Large if <spread> <= 1.5
/// theta, Medium otherwise. The stock's class is the one holding in a strict
/// majority of years (2 of 3); without a majority the result is Medium and
/// no_majority is set.
inline TickClass classify_year(double mean_spread, double theta) {
  if (!(theta > 0.0)) fail(Errc::InvalidArgument, "theta must be positive");
  if (!(mean_spread >= 0.0)) fail(Errc::InvalidArgument, "mean spread must be non-negative");
  // Compare the scale-free ratio with a relative slack so that values sitting
  // exactly on a bound are not pushed across it by rounding.
  constexpr double slack = 1e-9;
  const double ratio = mean_spread / theta;
  if (ratio >= 3.0 * (1.0 - slack)) return TickClass::Small;
  if (ratio <= 1.5 * (1.0 + slack)) return TickClass::Large;
  return TickClass::Medium;
}

inline TickClassification classify_tick_size(std::span<const double> yearly_mean_spreads, double theta) {
  if (yearly_mean_spreads.empty()) fail(Errc::EmptyInput, "no yearly mean spreads");
  TickClassification out;
  std::array<int, 3> votes{};
  for (double s : yearly_mean_spreads) {
    const auto c = classify_year(s, theta);
    out.per_year.push_back(c);
    ++votes[static_cast<int>(c)];
  }
  const auto n = static_cast<int>(yearly_mean_spreads.size());
  for (int c = 0; c < 3; ++c) {
    if (2 * votes[c] > n) {
      out.value = static_cast<TickClass>(c);
      return out;
    }
  }
  out.value = TickClass::Medium;
  out.no_majority = true;
  return out;
}

// ---------------------------------------------------------------------------
// Histograms

/// Normalized histogram over integer support.
struct Histogram {
  std::map<std::int64_t, double> mass;
  std::uint64_t samples = 0;

  /// Support point with the highest mass; ties resolve to the smaller key.
  std::int64_t mode() const {
    if (mass.empty()) fail(Errc::EmptyInput, "empty histogram");
    auto best = mass.begin();
    for (auto it = mass.begin(); it != mass.end(); ++it)
      if (it->second > best->second) best = it;
    return best->first;
  }

  double mean() const {
    double m = 0.0;
    for (const auto &[k, p] : mass) m += static_cast<double>(k) * p;
    return m;
  }

  double variance() const {
    const double mu = mean();
    double v = 0.0;
    for (const auto &[k, p] : mass) v += (static_cast<double>(k) - mu) * (static_cast<double>(k) - mu) * p;
    return v;
  }
};

/// Integer counts; merging is associative, normalization happens once.
struct Counter {
  std::map<std::int64_t, std::uint64_t> counts;
  std::uint64_t total = 0;

  void add(std::int64_t key, std::uint64_t n = 1) {
    counts[key] += n;
    total += n;
  }

  void merge(const Counter &other) {
    for (const auto &[k, n] : other.counts) add(k, n);
  }

  Histogram normalized() const {
    if (total == 0) fail(Errc::EmptyInput, "no samples");
    Histogram h;
    h.samples = total;
    for (const auto &[k, n] : counts) h.mass[k] = static_cast<double>(n) / static_cast<double>(total);
    return h;
  }
};

/// spread / theta rounded half-up, computed exactly in price units.
inline std::int64_t spread_in_ticks(const LobSnapshot &s, Price theta_units) {
  const Price sp = spread_units(s);
  return (2 * sp + theta_units) / (2 * theta_units);
}

inline Histogram spread_pdf_ticks(std::span<const DaySeries> days, double theta) {
  const Price tu = tick_units(theta);
  Counter c;
  for (const auto &d : days)
    for (const auto &s : d.snapshots) c.add(spread_in_ticks(s, tu));
  if (c.total == 0) fail(Errc::EmptyInput, "no snapshots for spread PDF");
  return c.normalized();
}

// ---------------------------------------------------------------------------
// Best-quote volume tails

/// Empirical CCDF P(V >= v) stored on the sorted distinct support.
struct TailFunction {
  std::vector<Volume> support; ///< ascending
  std::vector<double> tail;    ///< tail[i] = P(V >= support[i])

  double operator()(Volume v) const {
    const auto it = std::lower_bound(support.begin(), support.end(), v);
    if (it == support.end()) return 0.0;
    return tail[static_cast<std::size_t>(it - support.begin())];
  }
};

inline TailFunction empirical_ccdf(std::vector<Volume> values) {
  if (values.empty()) fail(Errc::EmptyInput, "no volumes");
  std::sort(values.begin(), values.end());
  TailFunction f;
  const auto n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i == 0 || values[i] != values[i - 1]) {
      f.support.push_back(values[i]);
      f.tail.push_back(static_cast<double>(values.size() - i) / n);
    }
  }
  return f;
}

/// Ask-side tail is presented on the negative axis (x = -v) and the bid side
/// on the positive axis; both functions are stored on volume magnitudes.
struct VolumeCcdf {
  TailFunction ask;
  TailFunction bid;
};

inline VolumeCcdf best_volume_ccdf(std::span<const DaySeries> days) {
  std::vector<Volume> ask, bid;
  for (const auto &d : days)
    for (const auto &s : d.snapshots) {
      if (!s.asks.empty() && s.best_ask()) ask.push_back(s.best_ask()->volume);
      if (!s.bids.empty() && s.best_bid()) bid.push_back(s.best_bid()->volume);
    }
  if (ask.empty() || bid.empty()) fail(Errc::EmptyInput, "no best-quote volumes");
  return {empirical_ccdf(std::move(ask)), empirical_ccdf(std::move(bid))};
}

// ---------------------------------------------------------------------------
// Actual LOB depth

enum class Side { Ask, Bid };

/// Tick distance between the first and the last level of one side, or
/// nullopt when any level on that side is empty.
inline std::optional<std::int64_t> side_depth(const LobSnapshot &s, Side side, double theta = kNasdaqTick) {
  const auto &levels = side == Side::Ask ? s.asks : s.bids;
  if (levels.size() < 2) return std::nullopt;
  for (const auto &l : levels)
    if (!l) return std::nullopt;
  const Price tu = tick_units(theta);
  const Price dist = side == Side::Ask ? levels.back()->price - levels.front()->price
                                       : levels.front()->price - levels.back()->price;
  return (2 * dist + tu) / (2 * tu);
}

struct ActualDepth {
  std::int64_t ask = 0;
  std::int64_t bid = 0;
};

inline ActualDepth actual_depth(const LobSnapshot &s, double theta = kNasdaqTick) {
  const auto a = side_depth(s, Side::Ask, theta);
  if (!a) fail(Errc::InsufficientLevels, "ask side not fully populated");
  const auto b = side_depth(s, Side::Bid, theta);
  if (!b) fail(Errc::InsufficientLevels, "bid side not fully populated");
  return {*a, *b};
}

struct DepthPdf {
  Histogram ask;
  Histogram bid;
};

/// Snapshots whose side is not fully populated are excluded from that side.
inline DepthPdf depth_pdf(std::span<const DaySeries> days, double theta = kNasdaqTick) {
  Counter ca, cb;
  for (const auto &d : days)
    for (const auto &s : d.snapshots) {
      if (auto a = side_depth(s, Side::Ask, theta)) ca.add(*a);
      if (auto b = side_depth(s, Side::Bid, theta)) cb.add(*b);
    }
  if (ca.total == 0 || cb.total == 0) fail(Errc::EmptyInput, "no fully populated snapshots for depth PDF");
  return {ca.normalized(), cb.normalized()};
}

// ---------------------------------------------------------------------------
// Information richness

inline double information_richness(double n_updates, double n_price_changes) {
  if (!(n_price_changes > 0.0)) fail(Errc::ZeroPriceChanges, "no mid-price changes");
  if (!(n_updates > 0.0)) fail(Errc::InvalidArgument, "update count must be positive");
  return std::log(n_updates / n_price_changes);
}

/// Consecutive snapshot pairs (within a day) whose mid-price differs.
inline std::uint64_t count_price_changes(const DaySeries &day) {
  std::uint64_t n = 0;
  for (std::size_t i = 1; i < day.snapshots.size(); ++i)
    if (mid_sum(day.snapshots[i]) != mid_sum(day.snapshots[i - 1])) ++n;
  return n;
}

inline std::uint64_t count_price_changes(std::span<const DaySeries> days) {
  std::uint64_t n = 0;
  for (const auto &d : days) n += count_price_changes(d);
  return n;
}

// ---------------------------------------------------------------------------
// Horizon-to-physical-time probabilities

struct HorizonTimeCounts {
  int horizon = 0;
  std::uint64_t below_1s = 0;
  std::uint64_t from_1s_to_10s = 0;
  std::uint64_t at_least_10s = 0;

  std::uint64_t total() const { return below_1s + from_1s_to_10s + at_least_10s; }

  void merge(const HorizonTimeCounts &o) {
    below_1s += o.below_1s;
    from_1s_to_10s += o.from_1s_to_10s;
    at_least_10s += o.at_least_10s;
  }
};

struct HorizonTimeProbs {
  int horizon = 0;
  double below_1s = 0.0;
  double from_1s_to_10s = 0.0;
  double at_least_10s = 0.0;
  std::uint64_t samples = 0;
};

inline HorizonTimeCounts horizon_time_counts(const DaySeries &day, int horizon) {
  if (horizon < 1) fail(Errc::InvalidArgument, "horizon must be >= 1");
  const auto n = day.snapshots.size();
  if (static_cast<std::size_t>(horizon) >= n)
    fail(Errc::HorizonTooLong, day.stock + " " + format_date(day.date) + ": horizon " + std::to_string(horizon) +
                                   " >= day length " + std::to_string(n));
  HorizonTimeCounts c;
  c.horizon = horizon;
  for (std::size_t t = 0; t + horizon < n; ++t) {
    const TimeNs dt = day.snapshots[t + horizon].time_ns - day.snapshots[t].time_ns;
    if (dt < kNsPerSecond)
      ++c.below_1s;
    else if (dt < 10 * kNsPerSecond)
      ++c.from_1s_to_10s;
    else
      ++c.at_least_10s;
  }
  return c;
}

inline HorizonTimeProbs to_probabilities(const HorizonTimeCounts &c) {
  const auto total = c.total();
  if (total == 0) fail(Errc::EmptyInput, "no horizon samples");
  HorizonTimeProbs p;
  p.horizon = c.horizon;
  p.samples = total;
  const double n = static_cast<double>(total);
  p.below_1s = static_cast<double>(c.below_1s) / n;
  p.from_1s_to_10s = static_cast<double>(c.from_1s_to_10s) / n;
  // Remainder keeps the triple summing to exactly one.
  p.at_least_10s = 1.0 - p.below_1s - p.from_1s_to_10s;
  return p;
}

inline std::vector<HorizonTimeProbs> horizon_time_probabilities(std::span<const DaySeries> days,
                                                                std::span<const int> horizons) {
  if (days.empty()) fail(Errc::EmptyInput, "no days");
  std::vector<HorizonTimeProbs> out;
  for (int h : horizons) {
    HorizonTimeCounts acc;
    acc.horizon = h;
    for (const auto &d : days) acc.merge(horizon_time_counts(d, h));
    out.push_back(to_probabilities(acc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct YearStats {
  int year = 0;
  double mean_price = 0.0;
  double mean_spread = 0.0;
  Histogram spread_pdf;
  VolumeCcdf best_volume_ccdf;
  DepthPdf depth;
  double ir = 0.0;
  std::uint64_t n_updates = 0;
  std::uint64_t n_price_changes = 0;
  std::vector<HorizonTimeProbs> horizon_time_probs;
};

struct MicrostructureReport {
  std::string stock;
  std::vector<YearStats> years;
  TickClassification tick_class;
};

inline YearStats year_stats(int year, std::span<const DaySeries> days, double theta,
                            std::span<const int> horizons) {
  if (days.empty()) fail(Errc::EmptyInput, "no days for year " + std::to_string(year));
  YearStats y;
  y.year = year;
  long double price_sum = 0.0L, spread_sum = 0.0L;
  std::uint64_t n = 0;
  for (const auto &d : days)
    for (const auto &s : d.snapshots) {
      price_sum += mid_price(s);
      spread_sum += spread(s);
      ++n;
    }
  if (n == 0) fail(Errc::EmptyInput, "no snapshots for year " + std::to_string(year));
  y.mean_price = static_cast<double>(price_sum / n);
  y.mean_spread = static_cast<double>(spread_sum / n);
  y.spread_pdf = spread_pdf_ticks(days, theta);
  y.best_volume_ccdf = best_volume_ccdf(days);
  y.depth = depth_pdf(days, theta);
  y.n_updates = n;
  y.n_price_changes = count_price_changes(days);
  y.ir = information_richness(static_cast<double>(y.n_updates), static_cast<double>(y.n_price_changes));
  y.horizon_time_probs = horizon_time_probabilities(days, horizons);
  return y;
}

inline MicrostructureReport build_report(const std::string &stock,
                                         const std::map<int, std::vector<DaySeries>> &days_by_year,
                                         double theta, std::span<const int> horizons) {
  MicrostructureReport r;
  r.stock = stock;
  std::vector<double> spreads;
  for (const auto &[year, days] : days_by_year) {
    r.years.push_back(year_stats(year, days, theta, horizons));
    spreads.push_back(r.years.back().mean_spread);
  }
  r.tick_class = classify_tick_size(spreads, theta);
  return r;
}

} // namespace lobkit
