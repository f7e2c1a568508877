#pragma once

// Dataset construction: horizon labels, 5-day rolling z-score normalization,
// class-balanced sampling, 100-update windows and the split calendar.

#include "lobkit/error.hpp"
#include "lobkit/lobster_io.hpp"
#include "lobkit/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace lobkit {

inline constexpr int kWindowLength = 100;
inline constexpr int kDefaultNormWindowDays = 5;
inline constexpr double kNormEpsilon = 1e-8;
inline constexpr std::size_t kDefaultSampleCap = 5000;

enum class Label : std::int8_t { Down = -1, Stable = 0, Up = 1 };

/// Class order used for counts and confusion matrices: Down, Stable, Up.
inline constexpr int class_index(Label l) { return static_cast<int>(l) + 1; }
inline constexpr Label label_from_index(int i) { return static_cast<Label>(i - 1); }

inline Label label_from_int(int v) {
  if (v < -1 || v > 1) fail(Errc::InvalidArgument, "label must be -1, 0 or 1, got " + std::to_string(v));
  return static_cast<Label>(v);
}

/// Down if the mid moves by <= -theta, Up if >= +theta, Stable otherwise.
/// Arguments are ask1+bid1 sums (twice the mid), so the comparison is exact.
inline Label label_from_mid_sums(Price now, Price future, Price theta_units) {
  const Price diff2 = future - now;
  if (diff2 <= -2 * theta_units) return Label::Down;
  if (diff2 >= 2 * theta_units) return Label::Up;
  return Label::Stable;
}

/// labels[t] compares the mid at t with the mid at t + horizon; the last
/// `horizon` snapshots of the day stay unlabelled.
inline std::vector<Label> label_events(const DaySeries &day, int horizon, double theta) {
  if (horizon < 1) fail(Errc::InvalidArgument, "horizon must be >= 1");
  const Price tu = tick_units(theta);
  const auto n = day.snapshots.size();
  if (static_cast<std::size_t>(horizon) >= n)
    fail(Errc::HorizonTooLong, day.stock + " " + format_date(day.date) + ": horizon " + std::to_string(horizon) +
                                   " >= day length " + std::to_string(n));
  std::vector<Price> mids(n);
  for (std::size_t i = 0; i < n; ++i) mids[i] = mid_sum(day.snapshots[i]);
  std::vector<Label> out(n - horizon);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = label_from_mid_sums(mids[t], mids[t + horizon], tu);
  return out;
}

struct ClassCounts {
  std::uint64_t down = 0;
  std::uint64_t stable = 0;
  std::uint64_t up = 0;

  std::uint64_t operator[](int class_idx) const { return class_idx == 0 ? down : class_idx == 1 ? stable : up; }
  std::uint64_t total() const { return down + stable + up; }
  bool operator==(const ClassCounts &) const = default;
};

inline ClassCounts class_distribution(std::span<const Label> labels) {
  ClassCounts c;
  for (auto l : labels) {
    switch (l) {
    case Label::Down: ++c.down; break;
    case Label::Stable: ++c.stable; break;
    case Label::Up: ++c.up; break;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Features and normalization

/// Per-snapshot features in the order ask_p1, ask_v1, bid_p1, bid_v1, ...;
/// prices in dollars, volumes in shares. An empty level continues its side
/// one tick beyond the previous level with zero volume.
inline void snapshot_features(const LobSnapshot &s, double theta, std::span<double> out) {
  const int L = s.levels();
  if (out.size() != static_cast<std::size_t>(4 * L)) fail(Errc::ShapeMismatch, "feature buffer size");
  double last_ask = 0.0, last_bid = 0.0;
  for (int l = 0; l < L; ++l) {
    const auto &a = s.asks[l];
    const auto &b = s.bids[l];
    const double ap = a ? to_dollars(a->price) : last_ask + theta;
    const double bp = b ? to_dollars(b->price) : last_bid - theta;
    out[4 * l] = ap;
    out[4 * l + 1] = a ? static_cast<double>(a->volume) : 0.0;
    out[4 * l + 2] = bp;
    out[4 * l + 3] = b ? static_cast<double>(b->volume) : 0.0;
    last_ask = ap;
    last_bid = bp;
  }
}

inline std::vector<double> day_features(const DaySeries &day) {
  if (day.snapshots.empty()) return {};
  const auto cols = static_cast<std::size_t>(4 * day.snapshots.front().levels());
  std::vector<double> out(day.snapshots.size() * cols);
  for (std::size_t i = 0; i < day.snapshots.size(); ++i)
    snapshot_features(day.snapshots[i], day.tick_size, std::span<double>(out).subspan(i * cols, cols));
  return out;
}

/// Feature-wise count/mean/M2 accumulator (Welford), mergeable across days.
struct FeatureMoments {
  std::uint64_t n = 0;
  std::vector<double> mean;
  std::vector<double> m2;

  explicit FeatureMoments(std::size_t cols = 0) : mean(cols, 0.0), m2(cols, 0.0) {}

  void add_row(std::span<const double> row) {
    ++n;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double d = row[j] - mean[j];
      mean[j] += d * inv;
      m2[j] += d * (row[j] - mean[j]);
    }
  }

  void merge(const FeatureMoments &o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n), nt = na + nb;
    for (std::size_t j = 0; j < mean.size(); ++j) {
      const double d = o.mean[j] - mean[j];
      mean[j] += d * nb / nt;
      m2[j] += o.m2[j] + d * d * na * nb / nt;
    }
    n += o.n;
  }
};

struct NormalizationState {
  std::vector<double> mean;
  std::vector<double> stddev; ///< population standard deviation
  double epsilon = kNormEpsilon;
  std::vector<Date> source_days;
};

/// A normalized day: row-major rows x cols features plus the raw mid sums
/// (ask1+bid1, price units) needed to re-derive labels.
struct NormalizedDay {
  std::string stock;
  Date date{};
  std::size_t rows = 0;
  std::size_t cols = 0;
  double tick_size = kNasdaqTick;
  std::vector<float> values;
  std::vector<Price> mid_sums;
  NormalizationState state;

  std::span<const float> row(std::size_t i) const { return std::span<const float>(values).subspan(i * cols, cols); }
};

inline FeatureMoments day_moments(const DaySeries &day) {
  const auto feats = day_features(day);
  const std::size_t cols = day.snapshots.empty() ? 0 : 4 * static_cast<std::size_t>(day.snapshots.front().levels());
  FeatureMoments m(cols);
  for (std::size_t i = 0; i < day.snapshots.size(); ++i)
    m.add_row(std::span<const double>(feats).subspan(i * cols, cols));
  return m;
}

/// z-scores day d with statistics pooled over days d-W..d-1. The first W days
/// are burn-in and emit nothing; days must be chronological for one stock.
inline std::vector<NormalizedDay> rolling_normalize(std::span<const DaySeries> days,
                                                    int window_days = kDefaultNormWindowDays,
                                                    double epsilon = kNormEpsilon) {
  if (window_days < 1) fail(Errc::InvalidArgument, "normalization window must be >= 1 day");
  if (days.size() <= static_cast<std::size_t>(window_days))
    fail(Errc::InsufficientHistory, "need at least " + std::to_string(window_days + 1) + " days, got " +
                                        std::to_string(days.size()));
  for (std::size_t i = 1; i < days.size(); ++i) {
    if (!(std::chrono::sys_days{days[i - 1].date} < std::chrono::sys_days{days[i].date}))
      fail(Errc::InvalidArgument, "days are not in strictly increasing date order");
    if (days[i].stock != days[0].stock) fail(Errc::InvalidArgument, "days mix several stocks");
  }
  std::vector<FeatureMoments> per_day;
  per_day.reserve(days.size());
  for (const auto &d : days) per_day.push_back(day_moments(d));

  std::vector<NormalizedDay> out;
  for (std::size_t d = static_cast<std::size_t>(window_days); d < days.size(); ++d) {
    const auto &day = days[d];
    FeatureMoments pooled(per_day[d].mean.size());
    NormalizationState st;
    st.epsilon = epsilon;
    for (std::size_t k = d - window_days; k < d; ++k) {
      if (per_day[k].mean.size() != pooled.mean.size())
        fail(Errc::ShapeMismatch, "days have different level counts");
      pooled.merge(per_day[k]);
      st.source_days.push_back(days[k].date);
    }
    if (pooled.n == 0)
      fail(Errc::InsufficientHistory, format_date(day.date) + ": empty normalization window");
    st.mean = pooled.mean;
    st.stddev.resize(pooled.m2.size());
    for (std::size_t j = 0; j < pooled.m2.size(); ++j)
      st.stddev[j] = std::sqrt(std::max(0.0, pooled.m2[j] / static_cast<double>(pooled.n)));

    NormalizedDay nd;
    nd.stock = day.stock;
    nd.date = day.date;
    nd.tick_size = day.tick_size;
    nd.rows = day.snapshots.size();
    nd.cols = st.mean.size();
    const auto feats = day_features(day);
    nd.values.resize(feats.size());
    for (std::size_t i = 0; i < nd.rows; ++i)
      for (std::size_t j = 0; j < nd.cols; ++j) {
        const auto k = i * nd.cols + j;
        nd.values[k] = static_cast<float>((feats[k] - st.mean[j]) / (st.stddev[j] + epsilon));
      }
    nd.mid_sums.resize(nd.rows);
    for (std::size_t i = 0; i < nd.rows; ++i) nd.mid_sums[i] = mid_sum(day.snapshots[i]);
    nd.state = std::move(st);
    out.push_back(std::move(nd));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Balanced sampling

struct SampleSelection {
  std::vector<std::size_t> indices; ///< ascending
  std::size_t per_class = 0;
  bool empty_class = false; ///< some class had no eligible representative
};

/// Draws min(cap, m) indices per class uniformly without replacement, where m
/// is the smallest class count among labelled positions >= first_valid.
inline SampleSelection balanced_sample(std::span<const Label> labels, std::size_t cap, std::uint64_t seed,
                                       std::size_t first_valid = kWindowLength - 1) {
  std::array<std::vector<std::size_t>, 3> pools;
  for (std::size_t i = first_valid; i < labels.size(); ++i) pools[class_index(labels[i])].push_back(i);
  SampleSelection sel;
  const std::size_t m = std::min({pools[0].size(), pools[1].size(), pools[2].size()});
  if (m == 0) {
    sel.empty_class = true;
    return sel;
  }
  sel.per_class = std::min(cap, m);
  Rng rng(seed);
  for (auto &pool : pools) {
    // Partial Fisher-Yates: the first per_class slots become the draw.
    for (std::size_t i = 0; i < sel.per_class; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    sel.indices.insert(sel.indices.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(sel.per_class));
  }
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

/// Every labelled position with a complete window, in order.
inline std::vector<std::size_t> sequential_indices(std::span<const Label> labels,
                                                   std::size_t first_valid = kWindowLength - 1) {
  std::vector<std::size_t> out;
  for (std::size_t i = first_valid; i < labels.size(); ++i) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Windows

struct LabeledWindow {
  std::string stock;
  Date date{};
  std::uint64_t end_index = 0;
  int horizon = 0;
  Label label = Label::Stable;
  std::vector<float> features; ///< kWindowLength x cols, row-major, oldest row first
  Price mid_sum_now = 0;
  Price mid_sum_future = 0;
};

inline std::vector<LabeledWindow> build_windows(const NormalizedDay &day, std::span<const std::size_t> selected,
                                                int horizon, std::span<const Label> labels) {
  std::vector<LabeledWindow> out;
  out.reserve(selected.size());
  for (auto t : selected) {
    if (t + 1 < static_cast<std::size_t>(kWindowLength) || t >= labels.size() || t >= day.rows ||
        t + static_cast<std::size_t>(horizon) >= day.rows)
      fail(Errc::IndexOutOfRange, "window end index " + std::to_string(t) + " has no complete window or label");
    LabeledWindow w;
    w.stock = day.stock;
    w.date = day.date;
    w.end_index = t;
    w.horizon = horizon;
    w.label = labels[t];
    const auto first = t + 1 - kWindowLength;
    w.features.assign(day.values.begin() + static_cast<std::ptrdiff_t>(first * day.cols),
                      day.values.begin() + static_cast<std::ptrdiff_t>((t + 1) * day.cols));
    w.mid_sum_now = day.mid_sums[t];
    w.mid_sum_future = day.mid_sums[t + horizon];
    out.push_back(std::move(w));
  }
  return out;
}

// Window record file ("LOBKWIN1"), little-endian:
//   magic[8] | u32 features_per_window | records...
//   record: u16 stock_len | stock | i32 yyyymmdd | u64 end_index | u32 horizon |
//           i8 label | f32[features_per_window]
inline constexpr char kWindowMagic[8] = {'L', 'O', 'B', 'K', 'W', 'I', 'N', '1'};

inline std::int32_t date_to_int(Date d) {
  return static_cast<int>(d.year()) * 10000 + static_cast<int>(static_cast<unsigned>(d.month())) * 100 +
         static_cast<int>(static_cast<unsigned>(d.day()));
}

inline Date date_from_int(std::int32_t v) {
  return Date{std::chrono::year{v / 10000}, std::chrono::month{static_cast<unsigned>(v / 100 % 100)},
              std::chrono::day{static_cast<unsigned>(v % 100)}};
}

inline void write_windows_header(std::ostream &os, std::uint32_t features_per_window) {
  os.write(kWindowMagic, 8);
  detail::put_le(os, features_per_window);
}

inline void write_window_record(std::ostream &os, const LabeledWindow &w) {
  using detail::put_le;
  put_le(os, static_cast<std::uint16_t>(w.stock.size()));
  os.write(w.stock.data(), static_cast<std::streamsize>(w.stock.size()));
  put_le(os, date_to_int(w.date));
  put_le(os, w.end_index);
  put_le(os, static_cast<std::uint32_t>(w.horizon));
  put_le(os, static_cast<std::int8_t>(w.label));
  for (float f : w.features) put_le(os, f);
}

inline void write_windows_binary(std::ostream &os, std::span<const LabeledWindow> windows) {
  const auto nf = windows.empty() ? 0u : static_cast<std::uint32_t>(windows.front().features.size());
  write_windows_header(os, nf);
  for (const auto &w : windows) {
    if (w.features.size() != nf) fail(Errc::ShapeMismatch, "windows with different feature counts");
    write_window_record(os, w);
  }
}

inline std::vector<LabeledWindow> read_windows_binary(std::istream &is) {
  using detail::get_le;
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kWindowMagic, 8) != 0)
    fail(Errc::MalformedRow, "not a lobkit window file");
  const auto nf = get_le<std::uint32_t>(is);
  std::vector<LabeledWindow> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    LabeledWindow w;
    const auto len = get_le<std::uint16_t>(is);
    w.stock.resize(len);
    if (len && !is.read(w.stock.data(), len)) fail(Errc::MalformedRow, "truncated window record");
    w.date = date_from_int(get_le<std::int32_t>(is));
    w.end_index = get_le<std::uint64_t>(is);
    w.horizon = static_cast<int>(get_le<std::uint32_t>(is));
    w.label = label_from_int(get_le<std::int8_t>(is));
    w.features.resize(nf);
    for (auto &f : w.features) f = get_le<float>(is);
    out.push_back(std::move(w));
  }
  return out;
}

inline void write_windows_csv(std::ostream &os, std::span<const LabeledWindow> windows) {
  const auto nf = windows.empty() ? 0 : windows.front().features.size();
  os << "stock,day,end_index,horizon,label";
  for (std::size_t j = 0; j < nf; ++j) os << ",f" << j;
  os << '\n';
  char buf[32];
  for (const auto &w : windows) {
    os << w.stock << ',' << format_date(w.date) << ',' << w.end_index << ',' << w.horizon << ','
       << static_cast<int>(w.label);
    for (float f : w.features) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(f));
      os << buf;
    }
    os << '\n';
  }
}

inline nlohmann::json windows_sidecar(std::span<const LabeledWindow> windows) {
  ClassCounts c;
  std::map<std::string, std::uint64_t> per_day;
  for (const auto &w : windows) {
    switch (w.label) {
    case Label::Down: ++c.down; break;
    case Label::Stable: ++c.stable; break;
    case Label::Up: ++c.up; break;
    }
    ++per_day[w.stock + " " + format_date(w.date)];
  }
  return {{"windows", windows.size()},
          {"features_per_window", windows.empty() ? 0 : windows.front().features.size()},
          {"window_length", kWindowLength},
          {"class_counts", {{"down", c.down}, {"stable", c.stable}, {"up", c.up}}},
          {"per_day", per_day}};
}

// ---------------------------------------------------------------------------
// Split calendar

enum class Split { Train, Validation, Test, Excluded };

inline std::string_view split_name(Split s) {
  switch (s) {
  case Split::Train: return "train";
  case Split::Validation: return "validation";
  case Split::Test: return "test";
  case Split::Excluded: return "excluded";
  }
  return "?";
}

/// Train and test are inclusive date ranges; validation days are drawn from
/// the train range and removed from it. Weekends and listed holidays belong
/// to no split.
struct SplitCalendar {
  Date train_from{}, train_to{};
  std::vector<Date> validation;
  Date test_from{}, test_to{};
  std::vector<Date> holidays;

  void validate() const {
    using std::chrono::sys_days;
    if (sys_days{train_from} > sys_days{train_to}) fail(Errc::InvalidConfig, "train range is reversed");
    if (sys_days{test_from} > sys_days{test_to}) fail(Errc::InvalidConfig, "test range is reversed");
    if (!(sys_days{test_from} > sys_days{train_to} || sys_days{test_to} < sys_days{train_from}))
      fail(Errc::InvalidConfig, "train and test ranges overlap");
    for (auto d : validation) {
      if (sys_days{d} < sys_days{train_from} || sys_days{d} > sys_days{train_to})
        fail(Errc::InvalidConfig, "validation day " + format_date(d) + " outside the train range");
      if (is_weekend(d) || is_holiday(d))
        fail(Errc::InvalidConfig, "validation day " + format_date(d) + " is not a trading day");
    }
  }

  bool is_holiday(Date d) const { return std::find(holidays.begin(), holidays.end(), d) != holidays.end(); }

  Split split_of(Date d) const {
    using std::chrono::sys_days;
    if (is_weekend(d) || is_holiday(d)) return Split::Excluded;
    if (std::find(validation.begin(), validation.end(), d) != validation.end()) return Split::Validation;
    if (sys_days{d} >= sys_days{train_from} && sys_days{d} <= sys_days{train_to}) return Split::Train;
    if (sys_days{d} >= sys_days{test_from} && sys_days{d} <= sys_days{test_to}) return Split::Test;
    return Split::Excluded;
  }
};

inline SplitCalendar calendar_from_json(const nlohmann::json &j) {
  try {
    SplitCalendar c;
    c.train_from = parse_date(j.at("train").at("from").get<std::string>());
    c.train_to = parse_date(j.at("train").at("to").get<std::string>());
    for (const auto &d : j.at("validation")) c.validation.push_back(parse_date(d.get<std::string>()));
    c.test_from = parse_date(j.at("test").at("from").get<std::string>());
    c.test_to = parse_date(j.at("test").at("to").get<std::string>());
    if (j.contains("holidays"))
      for (const auto &d : j.at("holidays")) c.holidays.push_back(parse_date(d.get<std::string>()));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception &e) {
    fail(Errc::InvalidConfig, std::string("calendar: ") + e.what());
  }
}

inline nlohmann::json calendar_to_json(const SplitCalendar &c) {
  nlohmann::json v = nlohmann::json::array(), h = nlohmann::json::array();
  for (auto d : c.validation) v.push_back(format_date(d));
  for (auto d : c.holidays) h.push_back(format_date(d));
  return {{"train", {{"from", format_date(c.train_from)}, {"to", format_date(c.train_to)}}},
          {"validation", v},
          {"test", {{"from", format_date(c.test_from)}, {"to", format_date(c.test_to)}}},
          {"holidays", h}};
}

} // namespace lobkit
