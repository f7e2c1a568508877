#pragma once

// Fixture builders and independent oracles shared by the unit tests and the
// acceptance binary. Oracles deliberately avoid the library code paths they
// check.

#include "lobkit/forecast_eval.hpp"
#include "lobkit/lobster_io.hpp"
#include "lobkit/pipeline.hpp"
#include "lobkit/random.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <tuple>
#include <vector>

namespace lobkit::testing {

/// Dense book: asks at best_ask + k*gap, bids at best_bid - k*gap (units).
inline LobSnapshot dense_snapshot(TimeNs t, Price best_ask, Price best_bid, int levels = 10, Volume vol = 100,
                                  Price gap = 100) {
  LobSnapshot s;
  s.time_ns = t;
  for (int k = 0; k < levels; ++k) {
    s.asks.push_back(PriceLevel{best_ask + k * gap, vol + k});
    s.bids.push_back(PriceLevel{best_bid - k * gap, vol + 2 * k});
  }
  return s;
}

inline MessageEvent dummy_event(TimeNs t, std::int64_t id = 1) {
  return MessageEvent{t, EventType::NewLimit, id, 100, 1000000, Direction::Buy};
}

inline DaySeries day_from(std::vector<LobSnapshot> snaps, const std::string &stock = "TST",
                          Date date = Date{std::chrono::year{2019}, std::chrono::month{1}, std::chrono::day{2}}) {
  DaySeries d;
  d.stock = stock;
  d.date = date;
  for (std::size_t i = 0; i < snaps.size(); ++i) d.events.push_back(dummy_event(snaps[i].time_ns, static_cast<std::int64_t>(i + 1)));
  d.snapshots = std::move(snaps);
  return d;
}

/// Session-interior day whose mid follows the given tick offsets from $100.
inline DaySeries day_from_mid_ticks(const std::vector<int> &mid_ticks, TimeNs start = hms(10, 0, 0),
                                    TimeNs step = 1'000'000) {
  std::vector<LobSnapshot> snaps;
  for (std::size_t i = 0; i < mid_ticks.size(); ++i) {
    const Price base = 1'000'000 + 100 * mid_ticks[i];
    snaps.push_back(dense_snapshot(start + static_cast<TimeNs>(i) * step, base + 100, base - 100));
  }
  return day_from(std::move(snaps));
}

inline std::vector<Label> random_labels(Rng &rng, std::size_t n) {
  std::vector<Label> v(n);
  for (auto &l : v) l = label_from_index(static_cast<int>(rng.below(3)));
  return v;
}

// ---------------------------------------------------------------------------
// Oracles

inline std::vector<std::vector<int>> tally(const std::vector<Label> &t, const std::vector<Label> &p) {
  std::vector<std::vector<int>> m(3, std::vector<int>(3, 0));
  for (std::size_t i = 0; i < t.size(); ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (class_index(t[i]) == a && class_index(p[i]) == b) ++m[a][b];
  return m;
}

/// Pearson correlation of the flattened one-hot target and prediction
/// matrices (n x 3 each); 0 when either side has zero variance.
inline double pearson_one_hot_mcc(const std::vector<Label> &t, const std::vector<Label> &p) {
  const std::size_t n = t.size();
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) {
      x.push_back(class_index(t[i]) == k ? 1.0 : 0.0);
      y.push_back(class_index(p[i]) == k ? 1.0 : 0.0);
    }
  // Column-centred covariance summed over classes (the multi-class R_K).
  double cxy = 0, cxx = 0, cyy = 0;
  for (int k = 0; k < 3; ++k) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += x[i * 3 + k];
      my += y[i * 3 + k];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = x[i * 3 + k] - mx, dy = y[i * 3 + k] - my;
      cxy += dx * dy;
      cxx += dx * dx;
      cyy += dy * dy;
    }
  }
  if (cxx == 0.0 || cyy == 0.0) return 0.0;
  return cxy / std::sqrt(cxx * cyy);
}

struct BruteScores {
  double f1_macro = 0, accuracy = 0;
};

/// Macro F1 from per-class precision and recall; a class with no support on
/// either side contributes 0.
inline BruteScores brute_f1_accuracy(const std::vector<Label> &t, const std::vector<Label> &p) {
  BruteScores s;
  int correct = 0;
  for (std::size_t i = 0; i < t.size(); ++i) correct += t[i] == p[i];
  s.accuracy = static_cast<double>(correct) / static_cast<double>(t.size());
  for (int k = 0; k < 3; ++k) {
    int tp = 0, pred = 0, act = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const bool a = class_index(t[i]) == k, b = class_index(p[i]) == k;
      tp += a && b;
      pred += b;
      act += a;
    }
    const double prec = pred ? static_cast<double>(tp) / pred : 0.0;
    const double rec = act ? static_cast<double>(tp) / act : 0.0;
    s.f1_macro += (prec + rec > 0.0 ? 2 * prec * rec / (prec + rec) : 0.0) / 3.0;
  }
  return s;
}

/// Action-table interpreter: state x signal -> action, written out in full.
/// O = open, M = maintain, C = close and re-open opposite, N = nothing.
struct TxSim {
  std::size_t opened = 0, closed = 0;
  std::set<std::tuple<std::int64_t, std::int64_t, int>> tx;
};

inline TxSim simulate_action_table(const std::vector<Label> &labels) {
  enum State { Flat, Long, Short };
  // table[state][signal index: 0 Down, 1 Stable, 2 Up]
  const char table[3][3] = {{'O', 'N', 'O'}, {'C', 'M', 'M'}, {'M', 'M', 'C'}};
  TxSim sim;
  State st = Flat;
  std::int64_t open_at = -1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int sig = class_index(labels[i]);
    switch (table[st][sig]) {
    case 'O':
      st = sig == 0 ? Short : Long;
      open_at = static_cast<std::int64_t>(i);
      ++sim.opened;
      break;
    case 'C':
      sim.tx.insert({open_at, static_cast<std::int64_t>(i), st == Short ? -1 : 1});
      ++sim.closed;
      st = st == Short ? Long : Short;
      open_at = static_cast<std::int64_t>(i);
      ++sim.opened;
      break;
    default: break;
    }
  }
  return sim;
}

inline double jaccard(const std::set<std::tuple<std::int64_t, std::int64_t, int>> &a,
                      const std::set<std::tuple<std::int64_t, std::int64_t, int>> &b) {
  std::size_t inter = 0;
  for (const auto &x : a) inter += b.count(x);
  std::set<std::tuple<std::int64_t, std::int64_t, int>> uni = a;
  uni.insert(b.begin(), b.end());
  if (uni.empty()) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni.size());
}

/// P(Gamma(shape k, rate) < x) = 1 - sum_{j<k} e^{-rate x} (rate x)^j / j!.
inline double gamma_cdf_integer_shape(int k, double rate, double x) {
  const double lx = rate * x;
  double term = std::exp(-lx), sum = 0.0;
  for (int j = 0; j < k; ++j) {
    sum += term;
    term *= lx / (j + 1);
  }
  return 1.0 - sum;
}

/// Student-t CDF with three degrees of freedom, closed form.
inline double t3_cdf(double t) {
  const double u = t / std::sqrt(3.0);
  return 0.5 + (u / (1.0 + t * t / 3.0) + std::atan(u)) / std::numbers::pi;
}

inline std::vector<ForecastRecord> one_hot_forecasts(const std::vector<Label> &labels, double confidence = 1.0) {
  std::vector<ForecastRecord> out(labels.size());
  const double rest = (1.0 - confidence) / 2.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i].index = static_cast<std::int64_t>(i);
    out[i].probs = {rest, rest, rest};
    out[i].probs[class_index(labels[i])] = confidence;
  }
  return out;
}

// Yearly mean spreads (2017, 2018, 2019) and the expected class.
struct TickRow {
  const char *ticker;
  double spreads[3];
  const char *expected;
};

} // namespace lobkit::testing

namespace lobkit::testing {

inline constexpr TickRow kTable6[] = {
    {"CHTR", {0.2869, 0.3475, 0.2206}, "small"},  {"GOOG", {0.4362, 0.7898, 0.5511}, "small"},
    {"GS", {0.0965, 0.1111, 0.0759}, "small"},    {"IBM", {0.0362, 0.0444, 0.0316}, "small"},
    {"MCD", {0.0321, 0.0542, 0.0531}, "small"},   {"NVDA", {0.0437, 0.0844, 0.0500}, "small"},
    {"AAPL", {0.0145, 0.0223, 0.0190}, "medium"}, {"ABBV", {0.0211, 0.0422, 0.0212}, "medium"},
    {"PM", {0.0231, 0.0293, 0.0240}, "medium"},   {"BAC", {0.0109, 0.0109, 0.0105}, "large"},
    {"CSCO", {0.0106, 0.0110, 0.0107}, "large"},  {"KO", {0.0112, 0.0116, 0.0111}, "large"},
    {"ORCL", {0.0115, 0.0117, 0.0111}, "large"},  {"PFE", {0.0111, 0.0114, 0.0109}, "large"},
    {"VZ", {0.0119, 0.0121, 0.0112}, "large"},
};

} // namespace lobkit::testing
