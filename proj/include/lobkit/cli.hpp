#pragma once

// `lobkit` subcommands. Kept header-only so tests can drive whole pipelines
// in-process through run().

#include "lobkit/baseline_model.hpp"
#include "lobkit/error.hpp"
#include "lobkit/forecast_eval.hpp"
#include "lobkit/lobster_io.hpp"
#include "lobkit/microstructure.hpp"
#include "lobkit/pipeline.hpp"
#include "lobkit/synthgen.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace lobkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  std::string data_root;
  std::vector<std::string> stocks;
  std::optional<SplitCalendar> calendar;
  std::vector<int> horizons{10, 50, 100};
  std::vector<double> thresholds = default_threshold_grid();
  std::string out_dir = ".";
  unsigned parallelism = 0; ///< 0: hardware concurrency
  std::uint64_t seed = 0;

  void validate() const {
    for (int h : horizons)
      if (h < 1) fail(Errc::InvalidConfig, "horizons must be positive");
    for (double t : thresholds)
      if (!(t >= 0.3 - 1e-12 && t < 1.0)) fail(Errc::InvalidConfig, "thresholds must lie in [0.3, 1)");
  }

  unsigned jobs() const {
    if (parallelism) return parallelism;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

inline RunConfig load_run_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) fail(Errc::InvalidConfig, "cannot open config " + path);
  RunConfig c;
  try {
    const auto j = json::parse(in);
    if (j.contains("data_root")) c.data_root = j["data_root"].get<std::string>();
    if (j.contains("stocks")) c.stocks = j["stocks"].get<std::vector<std::string>>();
    if (j.contains("calendar")) c.calendar = calendar_from_json(j["calendar"]);
    if (j.contains("horizons")) c.horizons = j["horizons"].get<std::vector<int>>();
    if (j.contains("thresholds")) {
      if (j["thresholds"].is_string())
        c.thresholds = parse_threshold_grid(j["thresholds"].get<std::string>());
      else
        c.thresholds = j["thresholds"].get<std::vector<double>>();
    }
    if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
    if (j.contains("parallelism")) c.parallelism = j["parallelism"].get<unsigned>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception &e) {
    fail(Errc::InvalidConfig, path + ": " + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Worker pool

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results keep input
/// order; the first failure (by index) is rethrown after all workers finish.
template <class Fn> auto parallel_map(std::size_t n, unsigned jobs, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<std::optional<R>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        results[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned k = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, jobs), std::max<std::size_t>(n, 1)));
  if (k <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < k; ++t) pool.emplace_back(worker);
  }
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(n);
  for (auto &r : results) out.push_back(std::move(*r));
  return out;
}

// ---------------------------------------------------------------------------
// Day file discovery

enum class DayFormat { Csv, Bin };

struct DayFile {
  std::string stock;
  Date date{};
  DayFormat format = DayFormat::Csv;
  fs::path message;   ///< csv only
  fs::path orderbook; ///< csv only; the .lobk file for bin
  int levels = kDefaultLevels;
};

inline std::vector<DayFile> discover_days(const fs::path &dir, const std::vector<std::string> &stocks = {}) {
  if (!fs::is_directory(dir)) fail(Errc::Io, "not a directory: " + dir.string());
  static const std::regex msg_re(R"(^([A-Za-z0-9.\-]+)_(\d{4}-\d{2}-\d{2})_(\d+)_(\d+)_message_(\d+)\.csv$)");
  static const std::regex bin_re(R"(^([A-Za-z0-9.\-]+)_(\d{4}-\d{2}-\d{2})\.lobk$)");
  std::vector<DayFile> out;
  for (const auto &entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    std::smatch m;
    DayFile f;
    if (std::regex_match(name, m, msg_re)) {
      f.stock = m[1];
      f.date = parse_date(m[2].str());
      f.levels = std::stoi(m[5]);
      f.format = DayFormat::Csv;
      f.message = entry.path();
      auto ob = name;
      ob.replace(ob.find("_message_"), 9, "_orderbook_");
      f.orderbook = dir / ob;
      if (!fs::exists(f.orderbook)) fail(Errc::Io, "missing orderbook file for " + name);
    } else if (std::regex_match(name, m, bin_re)) {
      f.stock = m[1];
      f.date = parse_date(m[2].str());
      f.format = DayFormat::Bin;
      f.orderbook = entry.path();
    } else {
      continue;
    }
    if (!stocks.empty() && std::find(stocks.begin(), stocks.end(), f.stock) == stocks.end()) continue;
    out.push_back(std::move(f));
  }
  std::sort(out.begin(), out.end(), [](const DayFile &a, const DayFile &b) {
    return std::tie(a.stock, a.date) < std::tie(b.stock, b.date);
  });
  return out;
}

inline DaySeries load_day(const DayFile &f) {
  DaySeries d;
  if (f.format == DayFormat::Csv) {
    d = parse_day(f.message.string(), f.orderbook.string(), f.levels);
  } else {
    std::ifstream in(f.orderbook, std::ios::binary);
    if (!in) fail(Errc::Io, "cannot open " + f.orderbook.string());
    d = read_day_binary(in);
  }
  d.stock = f.stock;
  d.date = f.date;
  return d;
}

inline std::map<std::string, std::vector<DayFile>> group_by_stock(const std::vector<DayFile> &files) {
  std::map<std::string, std::vector<DayFile>> out;
  for (const auto &f : files) out[f.stock].push_back(f);
  return out;
}

// ---------------------------------------------------------------------------
// Small IO helpers

inline void ensure_dir(const fs::path &p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(Errc::Io, "cannot create " + p.string() + ": " + ec.message());
}

template <class Writer> void write_file(const fs::path &p, Writer &&w, bool binary = false) {
  std::ofstream os(p, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) fail(Errc::Io, "cannot write " + p.string());
  w(os);
  if (!os) fail(Errc::Io, "write failed for " + p.string());
}

inline void write_json(const fs::path &p, const json &j) {
  write_file(p, [&](std::ostream &os) { os << j.dump(2) << '\n'; });
}

inline json read_json(const fs::path &p) {
  std::ifstream in(p);
  if (!in) fail(Errc::Io, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    fail(Errc::MalformedRow, p.string() + ": " + e.what());
  }
}

inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string data_root_or(const std::string &flag, const RunConfig &cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.data_root.empty()) return cfg.data_root;
  if (const char *env = std::getenv("LOBKIT_DATA_ROOT")) return env;
  fail(Errc::InvalidArgument, "no data directory: pass --data, set data_root in the config or LOBKIT_DATA_ROOT");
}

// ---------------------------------------------------------------------------
// Normalized day files ("LOBKNRM1"): magic | u32 stock_len | stock | i32 yyyymmdd |
// f64 tick | u64 rows | u32 cols | f32 values[rows*cols] | i64 mid_sums[rows]

inline constexpr char kNormMagic[8] = {'L', 'O', 'B', 'K', 'N', 'R', 'M', '1'};

inline void write_normalized(std::ostream &os, const NormalizedDay &d) {
  using lobkit::detail::put_le;
  os.write(kNormMagic, 8);
  put_le(os, static_cast<std::uint32_t>(d.stock.size()));
  os.write(d.stock.data(), static_cast<std::streamsize>(d.stock.size()));
  put_le(os, date_to_int(d.date));
  put_le(os, d.tick_size);
  put_le(os, static_cast<std::uint64_t>(d.rows));
  put_le(os, static_cast<std::uint32_t>(d.cols));
  for (float v : d.values) put_le(os, v);
  for (Price p : d.mid_sums) put_le(os, p);
}

inline NormalizedDay read_normalized(std::istream &is) {
  using lobkit::detail::get_le;
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kNormMagic, 8) != 0) fail(Errc::MalformedRow, "not a normalized day file");
  NormalizedDay d;
  d.stock.resize(get_le<std::uint32_t>(is));
  if (!d.stock.empty() && !is.read(d.stock.data(), static_cast<std::streamsize>(d.stock.size())))
    fail(Errc::MalformedRow, "truncated normalized day");
  d.date = date_from_int(get_le<std::int32_t>(is));
  d.tick_size = get_le<double>(is);
  d.rows = get_le<std::uint64_t>(is);
  d.cols = get_le<std::uint32_t>(is);
  d.values.resize(d.rows * d.cols);
  for (auto &v : d.values) v = get_le<float>(is);
  d.mid_sums.resize(d.rows);
  for (auto &p : d.mid_sums) p = get_le<Price>(is);
  return d;
}

inline std::string day_key(const std::string &stock, Date d) { return stock + "_" + format_date(d); }

inline std::vector<Label> read_labels_file(const fs::path &p) {
  std::ifstream in(p);
  if (!in) fail(Errc::Io, "cannot open " + p.string());
  auto t = read_targets_csv(in);
  for (std::size_t i = 0; i < t.index.size(); ++i)
    if (t.index[i] != static_cast<std::int64_t>(i)) fail(Errc::MalformedRow, p.string() + ": label indices must be 0..n-1");
  return t.labels;
}

// ---------------------------------------------------------------------------
// Subcommands

struct Context {
  RunConfig cfg;
  std::ostream *out = &std::cout;
  std::ostream *err = &std::cerr;
};

struct SynthArgs {
  std::string regime = "large";
  int days = 1;
  std::uint64_t seed = 1;
  std::string stock = "SYN";
  std::string start = "2019-01-02";
  double rate = 5.0;
  double mid = 100.0;
  double crossed = 0.0;
  double duplicates = 0.0;
  std::uint64_t max_events = 0;
  std::string session_start = "09:30:00";
};

inline TimeNs parse_clock(const std::string &s) {
  int h = 0, m = 0, sec = 0;
  if (std::sscanf(s.c_str(), "%d:%d:%d", &h, &m, &sec) != 3 || h < 0 || h > 23 || m < 0 || m > 59 || sec < 0 || sec > 59)
    fail(Errc::InvalidConfig, "bad clock time '" + s + "' (HH:MM:SS)");
  return hms(h, m, sec);
}

inline void cmd_synth(const Context &ctx, const SynthArgs &a) {
  GeneratorConfig g;
  g.regime = parse_regime(a.regime);
  g.seed = a.seed;
  g.stock = a.stock;
  g.date = parse_date(a.start);
  g.event_rate = a.rate;
  g.initial_mid = a.mid;
  g.crossed_fraction = a.crossed;
  g.duplicate_fraction = a.duplicates;
  g.max_events = a.max_events;
  g.session_start = parse_clock(a.session_start);
  g.validate();
  const fs::path out = ctx.cfg.out_dir;
  ensure_dir(out);
  const auto days = generate_days(g, a.days);
  for (const auto &[c, day] : days) {
    write_file(out / lobster_file_name(c.stock, c.date, "message", c.levels),
               [&](std::ostream &os) { os << day.messages_csv; });
    write_file(out / lobster_file_name(c.stock, c.date, "orderbook", c.levels),
               [&](std::ostream &os) { os << day.orderbook_csv; });
    auto j = day.defects.to_json();
    j["stock"] = c.stock;
    j["date"] = format_date(c.date);
    j["seed"] = c.seed;
    j["regime"] = std::string(regime_name(c.regime));
    j["rows"] = day.rows;
    j["events"] = day.real_events;
    write_json(out / (day_key(c.stock, c.date) + "_defects.json"), j);
  }
  *ctx.out << "synth: wrote " << days.size() << " day(s) to " << out.string() << '\n';
}

struct CleanArgs {
  std::string data;
  std::string format = "csv";
  int levels = kDefaultLevels;
};

inline void cmd_clean(const Context &ctx, const CleanArgs &a) {
  const auto files = discover_days(data_root_or(a.data, ctx.cfg), ctx.cfg.stocks);
  if (files.empty()) fail(Errc::EmptyInput, "no day files found");
  const fs::path out = ctx.cfg.out_dir;
  ensure_dir(out);
  auto results = parallel_map(files.size(), ctx.cfg.jobs(), [&](std::size_t i) {
    auto f = files[i];
    if (f.format == DayFormat::Csv) f.levels = a.levels;
    const auto raw = load_day(f);
    CleaningStats st;
    const auto clean = clean_day(raw, &st);
    if (a.format == "bin") {
      write_file(out / (day_key(clean.stock, clean.date) + ".lobk"),
                 [&](std::ostream &os) { write_day_binary(os, clean); }, true);
    } else {
      const int L = clean.snapshots.front().levels();
      write_file(out / lobster_file_name(clean.stock, clean.date, "message", L),
                 [&](std::ostream &os) { write_messages_csv(os, clean); });
      write_file(out / lobster_file_name(clean.stock, clean.date, "orderbook", L),
                 [&](std::ostream &os) { write_orderbook_csv(os, clean); });
    }
    return json{{"stock", clean.stock},
                {"date", format_date(clean.date)},
                {"raw_rows", raw.size()},
                {"clean_rows", clean.size()},
                {"crossed_removed", st.crossed_removed},
                {"collapsed", st.collapsed},
                {"trimmed", st.trimmed}};
  });
  write_json(out / "cleaning_summary.json", json{{"kind", "cleaning"}, {"days", results}});
  *ctx.out << "clean: " << results.size() << " day(s) -> " << out.string() << '\n';
}

struct StatsArgs {
  std::string data;
  std::vector<int> years;
  double theta = kNasdaqTick;
};

inline json histogram_json(const Histogram &h) {
  json j = json::object();
  for (const auto &[k, p] : h.mass) j[std::to_string(k)] = p;
  return j;
}

inline json tail_json(const TailFunction &f, int sign) {
  json j = json::array();
  for (std::size_t i = 0; i < f.support.size(); ++i) j.push_back({sign * f.support[i], f.tail[i]});
  return j;
}

inline json report_json(const MicrostructureReport &r) {
  json years = json::array();
  for (const auto &y : r.years) {
    json hp = json::array();
    for (const auto &p : y.horizon_time_probs)
      hp.push_back({{"horizon", p.horizon},
                    {"below_1s", p.below_1s},
                    {"from_1s_to_10s", p.from_1s_to_10s},
                    {"at_least_10s", p.at_least_10s},
                    {"samples", p.samples}});
    years.push_back({{"year", y.year},
                     {"mean_price", y.mean_price},
                     {"mean_spread", y.mean_spread},
                     {"spread_pdf", histogram_json(y.spread_pdf)},
                     {"best_volume_ccdf", {{"ask", tail_json(y.best_volume_ccdf.ask, -1)},
                                           {"bid", tail_json(y.best_volume_ccdf.bid, 1)}}},
                     {"depth_pdf_ask", histogram_json(y.depth.ask)},
                     {"depth_pdf_bid", histogram_json(y.depth.bid)},
                     {"ir", y.ir},
                     {"n_updates", y.n_updates},
                     {"n_price_changes", y.n_price_changes},
                     {"horizon_time_probs", hp}});
  }
  json per_year = json::array();
  for (auto c : r.tick_class.per_year) per_year.push_back(std::string(tick_class_name(c)));
  return {{"stock", r.stock},
          {"tick_class", std::string(tick_class_name(r.tick_class.value))},
          {"tick_class_per_year", per_year},
          {"no_majority", r.tick_class.no_majority},
          {"years", years}};
}

inline void cmd_stats(const Context &ctx, const StatsArgs &a) {
  const auto files = discover_days(data_root_or(a.data, ctx.cfg), ctx.cfg.stocks);
  if (files.empty()) fail(Errc::EmptyInput, "no day files found");
  const fs::path out = ctx.cfg.out_dir;
  ensure_dir(out);
  std::vector<MicrostructureReport> reports;
  for (const auto &[stock, stock_files] : group_by_stock(files)) {
    std::vector<DayFile> selected;
    for (const auto &f : stock_files)
      if (a.years.empty() || std::find(a.years.begin(), a.years.end(), static_cast<int>(f.date.year())) != a.years.end())
        selected.push_back(f);
    if (selected.empty()) continue;
    auto days = parallel_map(selected.size(), ctx.cfg.jobs(), [&](std::size_t i) {
      auto d = load_day(selected[i]);
      d.tick_size = a.theta;
      return d;
    });
    std::map<int, std::vector<DaySeries>> by_year;
    for (auto &d : days) by_year[static_cast<int>(d.date.year())].push_back(std::move(d));
    reports.push_back(build_report(stock, by_year, a.theta, ctx.cfg.horizons));
  }
  if (reports.empty()) fail(Errc::EmptyInput, "no days in the requested years");

  json stocks = json::array();
  for (const auto &r : reports) stocks.push_back(report_json(r));
  write_json(out / "stats.json", json{{"kind", "microstructure"}, {"theta", a.theta}, {"stocks", stocks}});

  write_file(out / "spread_pdf.csv", [&](std::ostream &os) {
    os << "stock,year,spread_ticks,probability\n";
    for (const auto &r : reports)
      for (const auto &y : r.years)
        for (const auto &[k, p] : y.spread_pdf.mass) os << r.stock << ',' << y.year << ',' << k << ',' << fmt_real(p) << '\n';
  });
  write_file(out / "volume_ccdf.csv", [&](std::ostream &os) {
    os << "stock,year,side,x,ccdf\n";
    for (const auto &r : reports)
      for (const auto &y : r.years) {
        const auto &ask = y.best_volume_ccdf.ask;
        const auto &bid = y.best_volume_ccdf.bid;
        for (std::size_t i = 0; i < ask.support.size(); ++i)
          os << r.stock << ',' << y.year << ",ask," << -ask.support[i] << ',' << fmt_real(ask.tail[i]) << '\n';
        for (std::size_t i = 0; i < bid.support.size(); ++i)
          os << r.stock << ',' << y.year << ",bid," << bid.support[i] << ',' << fmt_real(bid.tail[i]) << '\n';
      }
  });
  write_file(out / "depth_pdf.csv", [&](std::ostream &os) {
    os << "stock,year,side,xi,probability\n";
    for (const auto &r : reports)
      for (const auto &y : r.years) {
        for (const auto &[k, p] : y.depth.ask.mass) os << r.stock << ',' << y.year << ",ask," << k << ',' << fmt_real(p) << '\n';
        for (const auto &[k, p] : y.depth.bid.mass) os << r.stock << ',' << y.year << ",bid," << k << ',' << fmt_real(p) << '\n';
      }
  });
  write_file(out / "horizon_probs.csv", [&](std::ostream &os) {
    os << "stock,year,horizon,p_below_1s,p_1s_to_10s,p_at_least_10s,samples\n";
    for (const auto &r : reports)
      for (const auto &y : r.years)
        for (const auto &p : y.horizon_time_probs)
          os << r.stock << ',' << y.year << ',' << p.horizon << ',' << fmt_real(p.below_1s) << ','
             << fmt_real(p.from_1s_to_10s) << ',' << fmt_real(p.at_least_10s) << ',' << p.samples << '\n';
  });
  write_file(out / "ir.csv", [&](std::ostream &os) {
    os << "stock,year,n_updates,n_price_changes,ir\n";
    for (const auto &r : reports)
      for (const auto &y : r.years)
        os << r.stock << ',' << y.year << ',' << y.n_updates << ',' << y.n_price_changes << ',' << fmt_real(y.ir) << '\n';
  });
  *ctx.out << "stats: " << reports.size() << " stock(s) -> " << out.string() << '\n';
}

struct LabelArgs {
  std::string data;
  std::vector<int> horizons;
  double theta = kNasdaqTick;
};

inline fs::path labels_path(const fs::path &dir, const std::string &stock, Date d, int h) {
  return dir / (day_key(stock, d) + "_labels_H" + std::to_string(h) + ".csv");
}

inline void cmd_label(const Context &ctx, const LabelArgs &a) {
  const auto horizons = a.horizons.empty() ? ctx.cfg.horizons : a.horizons;
  const auto files = discover_days(data_root_or(a.data, ctx.cfg), ctx.cfg.stocks);
  if (files.empty()) fail(Errc::EmptyInput, "no day files found");
  const fs::path out = ctx.cfg.out_dir;
  ensure_dir(out);
  auto per_day = parallel_map(files.size(), ctx.cfg.jobs(), [&](std::size_t i) {
    const auto day = load_day(files[i]);
    json counts = json::object();
    for (int h : horizons) {
      const auto labels = label_events(day, h, a.theta);
      TargetStream t;
      t.labels = labels;
      t.index.resize(labels.size());
      for (std::size_t k = 0; k < labels.size(); ++k) t.index[k] = static_cast<std::int64_t>(k);
      write_file(labels_path(out, day.stock, day.date, h), [&](std::ostream &os) { write_targets_csv(os, t); });
      const auto c = class_distribution(labels);
      counts[std::to_string(h)] = {{"down", c.down}, {"stable", c.stable}, {"up", c.up}};
    }
    return json{{"stock", day.stock}, {"date", format_date(day.date)}, {"class_distribution", counts}};
  });
  write_json(out / "labels_summary.json", json{{"kind", "labels"}, {"theta", a.theta}, {"horizons", horizons}, {"days", per_day}});
  *ctx.out << "label: " << per_day.size() << " day(s) x " << horizons.size() << " horizon(s) -> " << out.string() << '\n';
}

struct NormalizeArgs {
  std::string data;
  int window_days = kDefaultNormWindowDays;
};

inline void cmd_normalize(const Context &ctx, const NormalizeArgs &a) {
  const auto files = discover_days(data_root_or(a.data, ctx.cfg), ctx.cfg.stocks);
  if (files.empty()) fail(Errc::EmptyInput, "no day files found");
  const fs::path out = ctx.cfg.out_dir;
  ensure_dir(out);
  json summary = json::array();
  for (const auto &[stock, stock_files] : group_by_stock(files)) {
    auto days = parallel_map(stock_files.size(), ctx.cfg.jobs(), [&](std::size_t i) { return load_day(stock_files[i]); });
    const auto normalized = rolling_normalize(days, a.window_days);
    for (const auto &nd : normalized) {
      write_file(out / (day_key(nd.stock, nd.date) + ".norm"), [&](std::ostream &os) { write_normalized(os, nd); }, true);
      json src = json::array();
      for (auto d : nd.state.source_days) src.push_back(format_date(d));
      summary.push_back({{"stock", nd.stock},
                         {"date", format_date(nd.date)},
                         {"rows", nd.rows},
                         {"source_days", src},
                         {"mean", nd.state.mean},
                         {"stddev", nd.state.stddev}});
    }
  }
  write_json(out / "normalize_summary.json", json{{"kind", "normalization"}, {"window_days", a.window_days}, {"days", summary}});
  *ctx.out << "normalize: " << summary.size() << " day(s) -> " << out.string() << '\n';
}

struct SampleArgs {
  std::string norm_dir;
  std::string labels_dir;
  int horizon = 10;
  std::size_t cap = kDefaultSampleCap;
  std::optional<std::uint64_t> seed;
  std::string calendar;
};

inline void cmd_sample(const Context &ctx, const SampleArgs &a) {
  SplitCalendar cal;
  if (!a.calendar.empty())
    cal = calendar_from_json(read_json(a.calendar));
  else if (ctx.cfg.calendar)
    cal = *ctx.cfg.calendar;
  else
    fail(Errc::InvalidConfig, "sample needs a split calendar (--calendar or config)");
  const std::uint64_t seed = a.seed.value_or(ctx.cfg.seed);
  const fs::path out = ctx.cfg.out_dir;
  ensure_dir(out);

  std::vector<fs::path> norm_files;
  if (!fs::is_directory(a.norm_dir)) fail(Errc::Io, "not a directory: " + a.norm_dir);
  for (const auto &e : fs::directory_iterator(a.norm_dir))
    if (e.path().extension() == ".norm") norm_files.push_back(e.path());
  std::sort(norm_files.begin(), norm_files.end());
  if (norm_files.empty()) fail(Errc::EmptyInput, "no normalized days in " + a.norm_dir);

  std::map<Split, std::ofstream> sinks;
  std::map<Split, std::vector<LabeledWindow>> meta; // features dropped, for the sidecar
  std::uint32_t features = 0;
  json days = json::array();
  for (const auto &p : norm_files) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(Errc::Io, "cannot open " + p.string());
    const auto nd = read_normalized(in);
    if (!ctx.cfg.stocks.empty() &&
        std::find(ctx.cfg.stocks.begin(), ctx.cfg.stocks.end(), nd.stock) == ctx.cfg.stocks.end())
      continue;
    const auto split = cal.split_of(nd.date);
    if (split == Split::Excluded) continue;
    const auto labels = read_labels_file(labels_path(a.labels_dir, nd.stock, nd.date, a.horizon));
    if (labels.size() + static_cast<std::size_t>(a.horizon) != nd.rows)
      fail(Errc::LengthMismatch, day_key(nd.stock, nd.date) + ": labels do not match the normalized day");
    std::vector<std::size_t> selected;
    bool warn = false;
    if (split == Split::Train) {
      const auto sel = balanced_sample(labels, a.cap, seed ^ (static_cast<std::uint64_t>(date_to_int(nd.date)) * 0x9E3779B97F4A7C15ull));
      selected = sel.indices;
      warn = sel.empty_class;
      if (warn) *ctx.err << "warning: " << day_key(nd.stock, nd.date) << " has an empty class; no training windows\n";
    } else {
      selected = sequential_indices(labels);
    }
    auto windows = build_windows(nd, selected, a.horizon, labels);
    if (!sinks.count(split)) {
      auto &os = sinks[split];
      os.open(out / (std::string(split_name(split)) + ".win"), std::ios::binary | std::ios::trunc);
      if (!os) fail(Errc::Io, "cannot write window file");
      features = static_cast<std::uint32_t>(nd.cols * kWindowLength);
      write_windows_header(os, features);
    }
    for (auto &w : windows) {
      write_window_record(sinks[split], w);
      w.features.clear();
      w.features.shrink_to_fit();
      meta[split].push_back(std::move(w));
    }
    days.push_back({{"stock", nd.stock},
                    {"date", format_date(nd.date)},
                    {"split", std::string(split_name(split))},
                    {"windows", selected.size()},
                    {"empty_class", warn}});
  }
  for (auto &[split, os] : sinks) {
    os.close();
    auto side = windows_sidecar(meta[split]);
    side["features_per_window"] = features;
    side["horizon"] = a.horizon;
    side["split"] = std::string(split_name(split));
    write_json(out / (std::string(split_name(split)) + ".json"), side);
  }
  write_json(out / "sample_summary.json", json{{"kind", "sampling"}, {"cap", a.cap}, {"seed", seed}, {"horizon", a.horizon}, {"days", days}});
  *ctx.out << "sample: " << days.size() << " day(s) -> " << out.string() << '\n';
}

inline std::vector<LabeledWindow> load_windows(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path);
  return read_windows_binary(in);
}

struct TrainArgs {
  std::string windows;
  int epochs = 10;
  double lr = 0.01;
  std::optional<std::uint64_t> seed;
  double l2 = 0.0;
  std::string model = "model.lobkm";
};

inline void cmd_train(const Context &ctx, const TrainArgs &a) {
  const auto windows = load_windows(a.windows);
  TrainOptions opt;
  opt.epochs = a.epochs;
  opt.learning_rate = a.lr;
  opt.seed = a.seed.value_or(ctx.cfg.seed);
  opt.l2 = a.l2;
  const auto model = train(windows, opt);
  fs::path target = a.model;
  if (target.is_relative() && !target.has_parent_path()) target = fs::path(ctx.cfg.out_dir) / target;
  ensure_dir(target.parent_path().empty() ? fs::path(".") : target.parent_path());
  write_file(target, [&](std::ostream &os) { save_model(os, model); }, true);
  *ctx.out << "train-baseline: " << windows.size() << " windows, final loss " << fmt_real(model.meta.final_loss)
           << " -> " << target.string() << '\n';
}

struct PredictArgs {
  std::string model;
  std::string windows;
  std::string predictions = "predictions.csv";
  std::string targets = "targets.csv";
};

inline fs::path in_out_dir(const Context &ctx, const std::string &p) {
  fs::path target = p;
  if (target.is_relative() && !target.has_parent_path()) target = fs::path(ctx.cfg.out_dir) / target;
  if (!target.parent_path().empty()) ensure_dir(target.parent_path());
  return target;
}

inline void cmd_predict(const Context &ctx, const PredictArgs &a) {
  std::ifstream in(a.model, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + a.model);
  const auto model = load_model(in);
  const auto windows = load_windows(a.windows);
  const auto forecasts = predict_stream(model, windows);
  write_file(in_out_dir(ctx, a.predictions), [&](std::ostream &os) { write_predictions_csv(os, forecasts); });
  TargetStream t;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    t.index.push_back(static_cast<std::int64_t>(i));
    t.labels.push_back(windows[i].label);
    t.days.push_back(date_to_int(windows[i].date));
  }
  write_file(in_out_dir(ctx, a.targets), [&](std::ostream &os) { write_targets_csv(os, t); });
  *ctx.out << "predict: " << forecasts.size() << " forecasts\n";
}

struct EvaluateArgs {
  std::string targets;
  std::string predictions;
  std::string thresholds;
  std::string report = "evaluation.json";
  std::string stock;
  int horizon = 0;
};

inline void cmd_evaluate(const Context &ctx, const EvaluateArgs &a) {
  std::ifstream tin(a.targets), pin(a.predictions);
  if (!tin) fail(Errc::Io, "cannot open " + a.targets);
  if (!pin) fail(Errc::Io, "cannot open " + a.predictions);
  const auto targets = read_targets_csv(tin);
  const auto forecasts = read_predictions_csv(pin);
  if (targets.labels.size() != forecasts.size())
    fail(Errc::LengthMismatch, "targets have " + std::to_string(targets.labels.size()) + " rows, predictions " +
                                   std::to_string(forecasts.size()));
  for (std::size_t i = 0; i < forecasts.size(); ++i)
    if (forecasts[i].index != targets.index[i])
      fail(Errc::LengthMismatch, "target and prediction indices diverge at row " + std::to_string(i));
  const auto grid = a.thresholds.empty() ? ctx.cfg.thresholds : parse_threshold_grid(a.thresholds);
  const auto rep = evaluate(targets.labels, forecasts, grid, targets.days);
  auto j = to_json(rep);
  j["kind"] = "evaluation";
  j["stock"] = a.stock;
  j["horizon"] = a.horizon;
  const auto path = in_out_dir(ctx, a.report);
  write_json(path, j);
  auto csv = path;
  csv.replace_extension(".csv");
  write_file(csv, [&](std::ostream &os) {
    os << "threshold,remaining_fraction,PT,TT,CT,p_T,mcc,f1,accuracy,stars\n";
    for (const auto &e : rep.sweep) {
      auto opt = [](const std::optional<double> &v) { return v ? fmt_real(*v) : std::string("/"); };
      os << fmt_real(e.threshold) << ',' << fmt_real(e.remaining_fraction) << ',' << e.transactions.pt << ','
         << e.transactions.tt << ',' << e.transactions.ct << ',' << fmt_real(e.transactions.p_t) << ',' << opt(e.mcc)
         << ',' << opt(e.f1_macro) << ',' << opt(e.accuracy) << ',' << (e.significance ? e.significance->stars : "")
         << '\n';
    }
  });
  *ctx.out << "evaluate: " << rep.n << " forecasts over " << grid.size() << " threshold(s) -> " << path.string() << '\n';
}

struct ReportArgs {
  std::vector<std::string> inputs;
};

inline void cmd_report(const Context &ctx, const ReportArgs &a) {
  std::vector<json> stats, evals;
  std::vector<fs::path> paths;
  for (const auto &in : a.inputs) {
    if (fs::is_directory(in)) {
      for (const auto &e : fs::recursive_directory_iterator(in))
        if (e.path().extension() == ".json") paths.push_back(e.path());
    } else {
      paths.push_back(in);
    }
  }
  std::sort(paths.begin(), paths.end());
  for (const auto &p : paths) {
    const auto j = read_json(p);
    if (!j.is_object() || !j.contains("kind")) continue;
    if (j["kind"] == "microstructure") stats.push_back(j);
    if (j["kind"] == "evaluation") evals.push_back(j);
  }
  if (stats.empty() && evals.empty()) fail(Errc::EmptyInput, "no stats or evaluation JSON among the inputs");
  const fs::path out = ctx.cfg.out_dir;
  ensure_dir(out);

  std::map<std::string, std::string> klass;
  std::set<int> years;
  for (const auto &s : stats)
    for (const auto &st : s["stocks"]) {
      klass[st["stock"]] = st["tick_class"];
      for (const auto &y : st["years"]) years.insert(y["year"].get<int>());
    }
  if (!stats.empty()) {
    write_file(out / "table6.csv", [&](std::ostream &os) {
      os << "ticker";
      for (int y : years) os << ",mean_price_" << y << ",mean_spread_" << y;
      os << ",size\n";
      for (const auto &s : stats)
        for (const auto &st : s["stocks"]) {
          os << st["stock"].get<std::string>();
          for (int y : years) {
            const json *row = nullptr;
            for (const auto &yy : st["years"])
              if (yy["year"].get<int>() == y) row = &yy;
            if (row)
              os << ',' << fmt_real((*row)["mean_price"].get<double>()) << ',' << fmt_real((*row)["mean_spread"].get<double>());
            else
              os << ",,";
          }
          os << ',' << st["tick_class"].get<std::string>() << '\n';
        }
    });
    write_file(out / "table8.csv", [&](std::ostream &os) {
      os << "ticker,year,n_updates,n_price_changes,ir\n";
      for (const auto &s : stats)
        for (const auto &st : s["stocks"])
          for (const auto &y : st["years"])
            os << st["stock"].get<std::string>() << ',' << y["year"].get<int>() << ',' << y["n_updates"].get<std::uint64_t>()
               << ',' << y["n_price_changes"].get<std::uint64_t>() << ',' << fmt_real(y["ir"].get<double>()) << '\n';
    });
    write_file(out / "table5.csv", [&](std::ostream &os) {
      os << "ticker,horizon,p_below_1s,p_1s_to_10s,p_at_least_10s\n";
      for (const auto &s : stats)
        for (const auto &st : s["stocks"]) {
          std::map<int, std::array<double, 4>> acc;
          for (const auto &y : st["years"])
            for (const auto &p : y["horizon_time_probs"]) {
              auto &a4 = acc[p["horizon"].get<int>()];
              a4[0] += p["below_1s"].get<double>();
              a4[1] += p["from_1s_to_10s"].get<double>();
              a4[2] += p["at_least_10s"].get<double>();
              a4[3] += 1.0;
            }
          for (const auto &[h, a4] : acc)
            os << st["stock"].get<std::string>() << ',' << h << ',' << fmt_real(a4[0] / a4[3]) << ','
               << fmt_real(a4[1] / a4[3]) << ',' << fmt_real(a4[2] / a4[3]) << '\n';
        }
    });
  }
  if (!evals.empty()) {
    auto num = [](const json &v) { return v.is_null() ? std::string("/") : fmt_real(v.get<double>()); };
    write_file(out / "table7.csv", [&](std::ostream &os) {
      os << "ticker,horizon,threshold,PT,p_T,mcc,f1\n";
      for (const auto &e : evals)
        for (const auto &s : e["sweep"])
          os << e["stock"].get<std::string>() << ',' << e["horizon"].get<int>() << ',' << fmt_real(s["threshold"].get<double>())
             << ',' << s["PT"].get<std::uint64_t>() << ',' << fmt_real(s["p_T"].get<double>()) << ',' << num(s["mcc"])
             << ',' << num(s["f1_macro"]) << '\n';
    });
    for (const std::string metric : {"mcc", "f1_macro", "accuracy", "p_T"}) {
      write_file(out / ("sweep_" + metric + ".csv"), [&](std::ostream &os) {
        os << "ticker,tick_class,horizon,threshold,value,remaining_fraction\n";
        for (const auto &e : evals) {
          const auto stock = e["stock"].get<std::string>();
          const auto cls = klass.count(stock) ? klass[stock] : std::string("unknown");
          for (const auto &s : e["sweep"])
            os << stock << ',' << cls << ',' << e["horizon"].get<int>() << ',' << fmt_real(s["threshold"].get<double>())
               << ',' << num(s[metric]) << ',' << fmt_real(s["remaining_fraction"].get<double>()) << '\n';
        }
      });
      // Class-level mean and population std across stocks, the curves of the
      // averaged sweep plots.
      write_file(out / ("sweep_" + metric + "_by_class.csv"), [&](std::ostream &os) {
        os << "tick_class,horizon,threshold,mean,std,mean_remaining_fraction,stocks\n";
        std::map<std::tuple<std::string, int, double>, std::vector<std::pair<double, double>>> groups;
        for (const auto &e : evals) {
          const auto stock = e["stock"].get<std::string>();
          const auto cls = klass.count(stock) ? klass[stock] : std::string("unknown");
          for (const auto &s : e["sweep"])
            if (!s[metric].is_null())
              groups[{cls, e["horizon"].get<int>(), s["threshold"].get<double>()}].push_back(
                  {s[metric].get<double>(), s["remaining_fraction"].get<double>()});
        }
        for (const auto &[key, vals] : groups) {
          double m = 0.0, r = 0.0, v = 0.0;
          for (const auto &[x, rem] : vals) {
            m += x;
            r += rem;
          }
          m /= static_cast<double>(vals.size());
          r /= static_cast<double>(vals.size());
          for (const auto &[x, rem] : vals) v += (x - m) * (x - m);
          v /= static_cast<double>(vals.size());
          os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << fmt_real(std::get<2>(key)) << ',' << fmt_real(m)
             << ',' << fmt_real(std::sqrt(v)) << ',' << fmt_real(r) << ',' << vals.size() << '\n';
        }
      });
    }
  }
  *ctx.out << "report: " << stats.size() << " stats file(s), " << evals.size() << " evaluation file(s) -> "
           << out.string() << '\n';
}

// ---------------------------------------------------------------------------
// Entry point

/// Exit status: 0 success, 1 data error, 2 usage error. Diagnostics go to `err`.
inline int run(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;

  CLI::App app{"lobkit: limit order book data processing and forecast evaluation"};
  app.require_subcommand(1);
  std::string config_path, out_dir, stocks_csv, horizons_csv;
  unsigned jobs = 0;
  std::optional<std::uint64_t> global_seed;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--jobs", jobs, "worker threads (default: all cores)");
  app.add_option("--stocks", stocks_csv, "comma-separated tickers to process");

  SynthArgs synth;
  auto *s_synth = app.add_subcommand("synth", "generate synthetic LOBSTER-format days");
  s_synth->add_option("--regime", synth.regime, "small|medium|large")->check(CLI::IsMember({"small", "medium", "large"}));
  s_synth->add_option("--days", synth.days)->check(CLI::PositiveNumber);
  s_synth->add_option("--seed", synth.seed);
  s_synth->add_option("--stock", synth.stock);
  s_synth->add_option("--start", synth.start, "first date YYYY-MM-DD");
  s_synth->add_option("--rate", synth.rate, "events per second");
  s_synth->add_option("--mid", synth.mid, "initial mid price in dollars");
  s_synth->add_option("--crossed-fraction", synth.crossed);
  s_synth->add_option("--duplicate-fraction", synth.duplicates);
  s_synth->add_option("--max-events", synth.max_events, "cap on real events per day (0: whole session)");
  s_synth->add_option("--session-start", synth.session_start, "first event clock time HH:MM:SS");

  CleanArgs clean;
  auto *s_clean = app.add_subcommand("clean", "clean raw message/orderbook pairs");
  s_clean->add_option("--data", clean.data, "raw data directory");
  s_clean->add_option("--out-format", clean.format)->check(CLI::IsMember({"csv", "bin"}));
  s_clean->add_option("--levels", clean.levels)->check(CLI::PositiveNumber);

  StatsArgs stats;
  auto *s_stats = app.add_subcommand("stats", "microstructure statistics");
  s_stats->add_option("--data", stats.data, "cleaned data directory");
  s_stats->add_option("--stock", stocks_csv, "ticker(s), comma-separated");
  s_stats->add_option("--years", stats.years)->expected(0, -1);
  s_stats->add_option("--theta", stats.theta, "tick size in dollars");
  s_stats->add_option("--horizons", horizons_csv, "comma-separated horizons");

  LabelArgs label;
  auto *s_label = app.add_subcommand("label", "label mid-price moves at given horizons");
  s_label->add_option("--data", label.data, "cleaned data directory");
  s_label->add_option("--horizon", label.horizons)->expected(0, -1)->check(CLI::PositiveNumber);
  s_label->add_option("--theta", label.theta);
  s_label->add_option("--stock", stocks_csv);

  NormalizeArgs norm;
  auto *s_norm = app.add_subcommand("normalize", "rolling z-score normalization");
  s_norm->add_option("--data", norm.data, "cleaned data directory");
  s_norm->add_option("--window-days", norm.window_days)->check(CLI::PositiveNumber);
  s_norm->add_option("--stock", stocks_csv);

  SampleArgs sample;
  std::uint64_t sample_seed = 0;
  auto *s_sample = app.add_subcommand("sample", "balanced training windows, sequential validation/test windows");
  s_sample->add_option("--norm", sample.norm_dir)->required();
  s_sample->add_option("--labels", sample.labels_dir)->required();
  s_sample->add_option("--horizon", sample.horizon)->check(CLI::PositiveNumber);
  s_sample->add_option("--cap", sample.cap)->check(CLI::PositiveNumber);
  auto *o_sample_seed = s_sample->add_option("--seed", sample_seed);
  s_sample->add_option("--calendar", sample.calendar, "split calendar JSON");

  TrainArgs trn;
  std::uint64_t train_seed = 0;
  auto *s_train = app.add_subcommand("train-baseline", "train the multinomial logistic baseline");
  s_train->add_option("--windows", trn.windows)->required();
  s_train->add_option("--epochs", trn.epochs)->check(CLI::NonNegativeNumber);
  s_train->add_option("--lr", trn.lr)->check(CLI::PositiveNumber);
  auto *o_train_seed = s_train->add_option("--seed", train_seed);
  s_train->add_option("--l2", trn.l2)->check(CLI::NonNegativeNumber);
  s_train->add_option("--model", trn.model, "checkpoint path");

  PredictArgs pred;
  auto *s_pred = app.add_subcommand("predict", "write a prediction file from a checkpoint");
  s_pred->add_option("--model", pred.model)->required();
  s_pred->add_option("--windows", pred.windows)->required();
  s_pred->add_option("--predictions", pred.predictions);
  s_pred->add_option("--targets", pred.targets, "target file written alongside the predictions");

  EvaluateArgs ev;
  auto *s_eval = app.add_subcommand("evaluate", "score predictions against targets");
  s_eval->add_option("--targets", ev.targets)->required();
  s_eval->add_option("--predictions", ev.predictions)->required();
  s_eval->add_option("--thresholds", ev.thresholds, "lo:hi:step or comma list");
  s_eval->add_option("--report", ev.report, "report JSON path");
  s_eval->add_option("--stock", ev.stock);
  s_eval->add_option("--horizon", ev.horizon);

  ReportArgs rep;
  auto *s_report = app.add_subcommand("report", "collate stats and evaluation JSON into tables");
  s_report->add_option("--inputs", rep.inputs)->required()->expected(1, -1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "lobkit: " << e.what() << '\n';
    return 2;
  }

  try {
    if (!config_path.empty()) ctx.cfg = load_run_config(config_path);
    if (!out_dir.empty()) ctx.cfg.out_dir = out_dir;
    if (jobs) ctx.cfg.parallelism = jobs;
    if (!stocks_csv.empty()) {
      ctx.cfg.stocks.clear();
      std::stringstream ss(stocks_csv);
      for (std::string s; std::getline(ss, s, ',');)
        if (!s.empty()) ctx.cfg.stocks.push_back(s);
    }
    if (!horizons_csv.empty()) {
      ctx.cfg.horizons.clear();
      std::stringstream ss(horizons_csv);
      for (std::string s; std::getline(ss, s, ',');) ctx.cfg.horizons.push_back(std::stoi(s));
    }
    ctx.cfg.validate();
    if (o_sample_seed->count()) sample.seed = sample_seed;
    if (o_train_seed->count()) trn.seed = train_seed;
    (void)global_seed;

    if (*s_synth) cmd_synth(ctx, synth);
    else if (*s_clean) cmd_clean(ctx, clean);
    else if (*s_stats) cmd_stats(ctx, stats);
    else if (*s_label) cmd_label(ctx, label);
    else if (*s_norm) cmd_normalize(ctx, norm);
    else if (*s_sample) cmd_sample(ctx, sample);
    else if (*s_train) cmd_train(ctx, trn);
    else if (*s_pred) cmd_predict(ctx, pred);
    else if (*s_eval) cmd_evaluate(ctx, ev);
    else if (*s_report) cmd_report(ctx, rep);
  } catch (const Error &e) {
    err << "lobkit: " << e.what() << '\n';
    return e.code() == Errc::InvalidConfig ? 2 : 1;
  } catch (const std::exception &e) {
    err << "lobkit: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

} // namespace lobkit::cli
