#pragma once

// Forecast scoring: confusion matrices, MCC / macro-F1 / accuracy under
// probability thresholds, and the transaction metrics PT, TT, CT and p_T.

#include "lobkit/error.hpp"
#include "lobkit/pipeline.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace lobkit {

// ---------------------------------------------------------------------------
// Confusion matrices

/// counts[target][prediction], classes ordered Down, Stable, Up.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, 3>, 3> counts{};

  std::int64_t &operator()(int t, int p) { return counts[t][p]; }
  std::int64_t operator()(int t, int p) const { return counts[t][p]; }

  std::int64_t total() const {
    std::int64_t s = 0;
    for (const auto &r : counts)
      for (auto v : r) s += v;
    return s;
  }
  std::int64_t trace() const { return counts[0][0] + counts[1][1] + counts[2][2]; }

  ConfusionMatrix &operator+=(const ConfusionMatrix &o) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) counts[i][j] += o.counts[i][j];
    return *this;
  }
  bool operator==(const ConfusionMatrix &) const = default;
};

using RealMatrix3 = std::array<std::array<double, 3>, 3>;

inline ConfusionMatrix confusion_matrix(std::span<const Label> targets, std::span<const Label> predictions) {
  if (targets.size() != predictions.size())
    fail(Errc::LengthMismatch, "targets have " + std::to_string(targets.size()) + " entries, predictions " +
                                   std::to_string(predictions.size()));
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < targets.size(); ++i) ++cm(class_index(targets[i]), class_index(predictions[i]));
  return cm;
}

/// Elementwise mean of the matrices, then each row scaled to sum to one.
/// Rows with no mass stay zero.
inline RealMatrix3 average_confusion(std::span<const ConfusionMatrix> matrices) {
  if (matrices.empty()) fail(Errc::EmptyList, "no confusion matrices to average");
  RealMatrix3 avg{};
  for (const auto &m : matrices)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) avg[i][j] += static_cast<double>(m(i, j));
  for (auto &row : avg)
    for (auto &v : row) v /= static_cast<double>(matrices.size());
  for (auto &row : avg) {
    const double s = row[0] + row[1] + row[2];
    if (s > 0.0)
      for (auto &v : row) v /= s;
  }
  return avg;
}

/// Multiclass Matthews correlation (Gorodkin's R_K). Returns 0 when either
/// marginal has zero variance.
inline double mcc(const ConfusionMatrix &cm) {
  const auto s = static_cast<double>(cm.total());
  if (s <= 0.0) fail(Errc::EmptyMatrix, "MCC of an empty confusion matrix");
  const auto c = static_cast<double>(cm.trace());
  double pt = 0.0, pp = 0.0, tt = 0.0;
  for (int k = 0; k < 3; ++k) {
    double pk = 0.0, tk = 0.0;
    for (int i = 0; i < 3; ++i) {
      pk += static_cast<double>(cm(i, k));
      tk += static_cast<double>(cm(k, i));
    }
    pt += pk * tk;
    pp += pk * pk;
    tt += tk * tk;
  }
  const double var_p = s * s - pp;
  const double var_t = s * s - tt;
  if (var_p <= 0.0 || var_t <= 0.0) return 0.0;
  return (c * s - pt) / std::sqrt(var_p * var_t);
}

struct F1Accuracy {
  double f1_macro = 0.0;
  double accuracy = 0.0;
};

/// Accuracy = trace/total; F1 is the unweighted mean over the three classes,
/// a class with no true or predicted samples contributing 0.
inline F1Accuracy f1_and_accuracy(const ConfusionMatrix &cm) {
  const auto total = cm.total();
  if (total <= 0) fail(Errc::EmptyMatrix, "F1/accuracy of an empty confusion matrix");
  F1Accuracy r;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  double f1_sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    std::int64_t row = 0, col = 0;
    for (int i = 0; i < 3; ++i) {
      row += cm(k, i);
      col += cm(i, k);
    }
    // F1 = 2 tp / (2 tp + fp + fn) = 2 tp / (row + col)
    if (row + col > 0) f1_sum += 2.0 * static_cast<double>(cm(k, k)) / static_cast<double>(row + col);
  }
  r.f1_macro = f1_sum / 3.0;
  return r;
}

// ---------------------------------------------------------------------------
// Forecast records and thresholds

struct ForecastRecord {
  std::int64_t index = 0;
  std::array<double, 3> probs{}; ///< p_down, p_stable, p_up

  bool operator==(const ForecastRecord &) const = default;
};

/// Ties resolve to the lower class (Down before Stable before Up).
inline Label argmax_label(const std::array<double, 3> &p) {
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (p[k] > p[best]) best = k;
  return label_from_index(best);
}

inline void validate_forecasts(std::span<const ForecastRecord> forecasts) {
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const auto &f = forecasts[i];
    double sum = 0.0;
    for (double p : f.probs) {
      if (!(p >= 0.0 && p <= 1.0))
        fail(Errc::InvalidArgument, "forecast " + std::to_string(f.index) + ": probability outside [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      fail(Errc::InvalidArgument, "forecast " + std::to_string(f.index) + ": probabilities do not sum to 1");
    if (i > 0 && f.index <= forecasts[i - 1].index)
      fail(Errc::InvalidArgument, "forecast indices are not strictly increasing at " + std::to_string(f.index));
  }
}

inline void check_threshold(double threshold) {
  if (!(threshold >= 0.3 - 1e-12 && threshold < 1.0))
    fail(Errc::InvalidArgument, "threshold must lie in [0.3, 1)");
}

struct KeptForecast {
  std::size_t position = 0; ///< position in the input stream
  std::int64_t index = 0;
  Label label = Label::Stable;
};

struct ThresholdResult {
  std::vector<KeptForecast> kept;
  double remaining_fraction = 0.0;
};

/// Keeps records whose largest class probability reaches the threshold and
/// predicts their argmax class.
inline ThresholdResult threshold_filter(std::span<const ForecastRecord> forecasts, double threshold) {
  check_threshold(threshold);
  ThresholdResult r;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const auto &p = forecasts[i].probs;
    if (std::max({p[0], p[1], p[2]}) >= threshold) r.kept.push_back({i, forecasts[i].index, argmax_label(p)});
  }
  r.remaining_fraction =
      forecasts.empty() ? 0.0 : static_cast<double>(r.kept.size()) / static_cast<double>(forecasts.size());
  return r;
}

/// Full-length signal where sub-threshold records become Stable, which in the
/// position state machine means "no action": flat stays flat and an open
/// position is maintained.
inline std::vector<Label> thresholded_signal(std::span<const ForecastRecord> forecasts, double threshold) {
  check_threshold(threshold);
  std::vector<Label> out(forecasts.size(), Label::Stable);
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const auto &p = forecasts[i].probs;
    if (std::max({p[0], p[1], p[2]}) >= threshold) out[i] = argmax_label(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transactions

enum class PositionSide : std::int8_t { SellFirst = -1, BuyFirst = 1 };

struct Transaction {
  std::int64_t open_index = 0;
  std::int64_t close_index = 0;
  PositionSide side = PositionSide::BuyFirst;

  auto operator<=>(const Transaction &) const = default;
};

struct TransactionExtraction {
  std::vector<Transaction> transactions; ///< ordered by open index
  std::size_t opened = 0;
  std::size_t closed = 0;
};

/// Single forward pass over a label stream. Flat: Down opens a sell, Up opens
/// a buy. In a position, the opposite label closes it and opens the reverse
/// position at the same index; Stable and same-sign labels maintain it. A
/// position still open at the end is not a transaction. `stream_indices`, when
/// given, maps positions to the original stream indices.
inline TransactionExtraction extract_transactions(std::span<const Label> labels,
                                                  std::span<const std::int64_t> stream_indices = {}) {
  if (!stream_indices.empty() && stream_indices.size() != labels.size())
    fail(Errc::LengthMismatch, "stream index map does not match the label count");
  TransactionExtraction out;
  std::optional<PositionSide> pos;
  std::int64_t open_at = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::int64_t idx = stream_indices.empty() ? static_cast<std::int64_t>(i) : stream_indices[i];
    const Label l = labels[i];
    if (l == Label::Stable) continue;
    const auto want = l == Label::Up ? PositionSide::BuyFirst : PositionSide::SellFirst;
    if (pos && *pos == want) continue;
    if (pos) {
      out.transactions.push_back({open_at, idx, *pos});
      ++out.closed;
    }
    pos = want;
    open_at = idx;
    ++out.opened;
  }
  return out;
}

struct TransactionMetrics {
  std::size_t pt = 0; ///< target-side transactions
  std::size_t tt = 0; ///< prediction-side transactions
  std::size_t ct = 0; ///< exact (open, close, side) matches
  double p_t = 0.0;
  bool empty_union = false; ///< PT = TT = 0; p_T reported as 1
};

inline std::size_t count_common(std::span<const Transaction> a, std::span<const Transaction> b) {
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j])
      ++i;
    else if (b[j] < a[i])
      ++j;
    else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

inline TransactionMetrics transaction_metrics_from(std::span<const Transaction> target_tx,
                                                   std::span<const Transaction> predicted_tx) {
  TransactionMetrics m;
  m.pt = target_tx.size();
  m.tt = predicted_tx.size();
  m.ct = count_common(target_tx, predicted_tx);
  const auto uni = m.pt + m.tt - m.ct;
  if (uni == 0) {
    m.empty_union = true;
    m.p_t = 1.0;
  } else {
    m.p_t = static_cast<double>(m.ct) / static_cast<double>(uni);
  }
  return m;
}

inline TransactionMetrics transaction_metrics(std::span<const Label> targets,
                                              std::span<const ForecastRecord> forecasts, double threshold) {
  if (targets.size() != forecasts.size())
    fail(Errc::LengthMismatch, "targets have " + std::to_string(targets.size()) + " entries, forecasts " +
                                   std::to_string(forecasts.size()));
  std::vector<std::int64_t> idx(forecasts.size());
  for (std::size_t i = 0; i < forecasts.size(); ++i) idx[i] = forecasts[i].index;
  const auto signal = thresholded_signal(forecasts, threshold);
  const auto tgt = extract_transactions(targets, idx);
  const auto prd = extract_transactions(signal, idx);
  return transaction_metrics_from(tgt.transactions, prd.transactions);
}

// ---------------------------------------------------------------------------
// Significance

struct Significance {
  double t_statistic = 0.0;
  double p_value = 1.0;
  std::string stars;
};

/// "***" p < 0.001, "**" p < 0.01, "*" p < 0.05, unmarked otherwise.
inline std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

/// One-sample two-sided t-test of the daily values against zero.
inline Significance per_day_significance(std::span<const double> daily) {
  if (daily.size() < 2) fail(Errc::DegenerateSeries, "need at least two daily values");
  const auto n = static_cast<double>(daily.size());
  double mean = 0.0;
  for (double v : daily) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : daily) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 1e-15 * std::max(1.0, std::abs(mean)))) fail(Errc::DegenerateSeries, "daily values are constant");
  Significance s;
  s.t_statistic = mean / (sd / std::sqrt(n));
  boost::math::students_t dist(n - 1.0);
  s.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(s.t_statistic)));
  s.p_value = std::min(1.0, s.p_value);
  s.stars = significance_stars(s.p_value);
  return s;
}

// ---------------------------------------------------------------------------
// Sweeps

inline std::vector<double> parse_threshold_grid(const std::string &spec) {
  // "lo:hi:step" or a comma list
  std::vector<double> out;
  auto to_d = [&](const std::string &s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception &) {
      fail(Errc::InvalidArgument, "bad threshold value '" + s + "'");
    }
  };
  if (spec.find(':') != std::string::npos) {
    const auto a = spec.find(':'), b = spec.find(':', a + 1);
    if (b == std::string::npos) fail(Errc::InvalidArgument, "threshold grid must be lo:hi:step");
    const double lo = to_d(spec.substr(0, a)), hi = to_d(spec.substr(a + 1, b - a - 1)),
                 step = to_d(spec.substr(b + 1));
    if (!(step > 0.0) || hi < lo) fail(Errc::InvalidArgument, "bad threshold grid '" + spec + "'");
    const auto n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
    for (int i = 0; i <= n; ++i) out.push_back(std::round((lo + i * step) * 1e9) / 1e9);
  } else {
    std::size_t start = 0;
    while (start <= spec.size()) {
      const auto c = spec.find(',', start);
      out.push_back(to_d(spec.substr(start, c == std::string::npos ? std::string::npos : c - start)));
      if (c == std::string::npos) break;
      start = c + 1;
    }
  }
  for (double t : out) check_threshold(t);
  return out;
}

inline std::vector<double> default_threshold_grid() { return {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

struct ThresholdEval {
  double threshold = 0.0;
  ConfusionMatrix cm;
  std::size_t kept = 0;
  double remaining_fraction = 0.0;
  std::optional<double> mcc; ///< absent when no forecast survives the threshold
  std::optional<double> f1_macro;
  std::optional<double> accuracy;
  TransactionMetrics transactions;
  std::vector<double> daily_mcc;
  std::optional<Significance> significance;
};

struct EvalReport {
  std::size_t n = 0;
  std::vector<ThresholdEval> sweep;
};

/// `days`, when non-empty, assigns each record to a day for the per-day MCC
/// series; transactions are always extracted over the whole stream.
inline EvalReport evaluate(std::span<const Label> targets, std::span<const ForecastRecord> forecasts,
                           std::span<const double> thresholds, std::span<const std::int32_t> days = {}) {
  if (targets.size() != forecasts.size())
    fail(Errc::LengthMismatch, "targets have " + std::to_string(targets.size()) + " entries, forecasts " +
                                   std::to_string(forecasts.size()));
  if (!days.empty() && days.size() != targets.size()) fail(Errc::LengthMismatch, "day column length");
  validate_forecasts(forecasts);
  EvalReport rep;
  rep.n = targets.size();
  for (double th : thresholds) {
    ThresholdEval e;
    e.threshold = th;
    const auto kept = threshold_filter(forecasts, th);
    e.kept = kept.kept.size();
    e.remaining_fraction = kept.remaining_fraction;
    std::map<std::int32_t, ConfusionMatrix> per_day;
    for (const auto &k : kept.kept) {
      ++e.cm(class_index(targets[k.position]), class_index(k.label));
      if (!days.empty()) ++per_day[days[k.position]](class_index(targets[k.position]), class_index(k.label));
    }
    if (e.cm.total() > 0) {
      e.mcc = mcc(e.cm);
      const auto fa = f1_and_accuracy(e.cm);
      e.f1_macro = fa.f1_macro;
      e.accuracy = fa.accuracy;
    }
    e.transactions = transaction_metrics(targets, forecasts, th);
    for (const auto &[d, cm] : per_day)
      if (cm.total() > 0) e.daily_mcc.push_back(mcc(cm));
    try {
      if (e.daily_mcc.size() >= 2) e.significance = per_day_significance(e.daily_mcc);
    } catch (const Error &) {
      // degenerate daily series: no significance mark
    }
    rep.sweep.push_back(std::move(e));
  }
  return rep;
}

inline nlohmann::json to_json(const EvalReport &r) {
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto &e : r.sweep) {
    nlohmann::json cm = nlohmann::json::array();
    for (const auto &row : e.cm.counts) cm.push_back(row);
    auto opt = [](const std::optional<double> &v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j = {{"threshold", e.threshold},
                        {"confusion_matrix", cm},
                        {"kept", e.kept},
                        {"remaining_fraction", e.remaining_fraction},
                        {"mcc", opt(e.mcc)},
                        {"f1_macro", opt(e.f1_macro)},
                        {"accuracy", opt(e.accuracy)},
                        {"PT", e.transactions.pt},
                        {"TT", e.transactions.tt},
                        {"CT", e.transactions.ct},
                        {"p_T", e.transactions.p_t},
                        {"p_T_empty_union", e.transactions.empty_union},
                        {"daily_mcc", e.daily_mcc}};
    if (e.significance)
      j["significance"] = {{"t", e.significance->t_statistic},
                           {"p_value", e.significance->p_value},
                           {"stars", e.significance->stars}};
    else
      j["significance"] = nullptr;
    sweep.push_back(std::move(j));
  }
  return {{"n", r.n}, {"sweep", sweep}};
}

// ---------------------------------------------------------------------------
// Prediction and target files

inline void write_predictions_csv(std::ostream &os, std::span<const ForecastRecord> forecasts) {
  os << "index,p_down,p_stable,p_up\n";
  char buf[96];
  for (const auto &f : forecasts) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(f.index), f.probs[0],
                  f.probs[1], f.probs[2]);
    os << buf;
  }
}

namespace detail {

inline double parse_real(std::string_view s, std::size_t lineno) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    fail(Errc::MalformedRow, "line " + std::to_string(lineno) + ": bad number '" + std::string(s) + "'");
  return v;
}

} // namespace detail

inline std::vector<ForecastRecord> read_predictions_csv(std::istream &is) {
  std::string line;
  if (!std::getline(is, line)) fail(Errc::MalformedRow, "empty prediction file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "index,p_down,p_stable,p_up")
    fail(Errc::MalformedRow, "prediction header must be 'index,p_down,p_stable,p_up'");
  std::vector<ForecastRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 4) fail(Errc::MalformedRow, "line " + std::to_string(lineno) + ": expected 4 columns");
    ForecastRecord r;
    if (!detail::parse_int(f[0], r.index))
      fail(Errc::MalformedRow, "line " + std::to_string(lineno) + ": bad index");
    for (int k = 0; k < 3; ++k) r.probs[k] = detail::parse_real(f[k + 1], lineno);
    out.push_back(r);
  }
  validate_forecasts(out);
  return out;
}

struct TargetStream {
  std::vector<std::int64_t> index;
  std::vector<Label> labels;
  std::vector<std::int32_t> days; ///< yyyymmdd; empty when the file has no day column
};

inline void write_targets_csv(std::ostream &os, const TargetStream &t) {
  const bool with_days = !t.days.empty();
  os << (with_days ? "index,label,day\n" : "index,label\n");
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    os << t.index[i] << ',' << static_cast<int>(t.labels[i]);
    if (with_days) os << ',' << t.days[i];
    os << '\n';
  }
}

inline TargetStream read_targets_csv(std::istream &is) {
  std::string line;
  if (!std::getline(is, line)) fail(Errc::MalformedRow, "empty target file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool with_days = false;
  if (line == "index,label,day")
    with_days = true;
  else if (line != "index,label")
    fail(Errc::MalformedRow, "target header must be 'index,label[,day]'");
  TargetStream t;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    if (f.size() != (with_days ? 3u : 2u))
      fail(Errc::MalformedRow, "line " + std::to_string(lineno) + ": wrong column count");
    std::int64_t idx = 0;
    int lab = 0;
    if (!detail::parse_int(f[0], idx) || !detail::parse_int(f[1], lab) || lab < -1 || lab > 1)
      fail(Errc::MalformedRow, "line " + std::to_string(lineno) + ": bad index or label");
    if (!t.index.empty() && idx <= t.index.back())
      fail(Errc::MalformedRow, "line " + std::to_string(lineno) + ": indices must increase");
    t.index.push_back(idx);
    t.labels.push_back(static_cast<Label>(lab));
    if (with_days) {
      std::int32_t d = 0;
      if (!detail::parse_int(f[2], d)) fail(Errc::MalformedRow, "line " + std::to_string(lineno) + ": bad day");
      t.days.push_back(d);
    }
  }
  return t;
}

} // namespace lobkit
