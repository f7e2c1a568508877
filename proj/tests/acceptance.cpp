// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include "lobkit/baseline_model.hpp"
#include "lobkit/cli.hpp"
#include "lobkit/microstructure.hpp"
#include "lobkit/synthgen.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

using namespace lobkit;
using namespace lobkit::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool cond, const std::string &what) {
    if (!cond && pass) detail = what;
    pass = pass && cond;
  }
};

constexpr Label D = Label::Down, S = Label::Stable, U = Label::Up;

Outcome ir_reproduction() {
  Outcome o;
  const double a = information_richness(9.58e7, 5.91e5), b = information_richness(1.25e7, 2.89e6);
  o.check(std::abs(a - 5.09) <= 0.01, "BAC 2017 IR " + std::to_string(a));
  o.check(std::abs(b - 1.46) <= 0.01, "CHTR 2017 IR " + std::to_string(b));
  if (o.pass) o.detail = "IR = " + std::to_string(a) + ", " + std::to_string(b);
  return o;
}

Outcome tick_classification() {
  Outcome o;
  int hits = 0;
  for (const auto &row : kTable6) {
    const auto c = classify_tick_size(std::span<const double>(row.spreads, 3), 0.01);
    const bool ok = tick_class_name(c.value) == row.expected;
    hits += ok;
    o.check(ok, std::string(row.ticker) + " classified " + std::string(tick_class_name(c.value)));
  }
  if (o.pass) o.detail = std::to_string(hits) + "/15 stocks";
  return o;
}

Outcome transaction_semantics() {
  Outcome o;
  const auto x = extract_transactions(std::vector<Label>{D, S, U, S, D});
  o.check(x.opened == 3 && x.closed == 2 && x.transactions.size() == 2, "Fig. 7 counts");
  Rng rng(101);
  const auto t = random_labels(rng, 400);
  for (double th : default_threshold_grid())
    o.check(transaction_metrics(t, one_hot_forecasts(t), th).p_t == 1.0, "identical streams p_T != 1");
  const std::vector<Label> tgt{D, S, U, S, D, S, U}, prd{S, D, S, U, S, D, S};
  const auto m = transaction_metrics(tgt, one_hot_forecasts(prd), 0.3);
  o.check(m.ct == 0 && m.p_t == 0.0 && m.pt > 0 && m.tt > 0, "disjoint sets p_T != 0");
  if (o.pass) o.detail = "3 opened, 2 closed, 2 transactions; p_T = 1 identical, 0 disjoint";
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  Rng rng(202);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.below(500);
    const auto t = random_labels(rng, n);
    auto p = t;
    const double noise = rng.uniform();
    for (auto &x : p)
      if (rng.bernoulli(noise)) x = label_from_index(static_cast<int>(rng.below(3)));
    const auto cm = confusion_matrix(t, p);
    const auto br = tally(t, p);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) o.check(cm(i, j) == br[i][j], "confusion cell mismatch");
    const auto fa = f1_and_accuracy(cm);
    const auto bf = brute_f1_accuracy(t, p);
    const double dm = std::abs(mcc(cm) - pearson_one_hot_mcc(t, p));
    const double df = std::abs(fa.f1_macro - bf.f1_macro), da = std::abs(fa.accuracy - bf.accuracy);
    const double dp = std::abs(transaction_metrics(t, one_hot_forecasts(p), 0.3).p_t -
                               jaccard(simulate_action_table(t).tx, simulate_action_table(p).tx));
    worst = std::max({worst, dm, df, da, dp});
  }
  o.check(worst <= 1e-10, "max deviation " + std::to_string(worst));
  if (o.pass) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "1000 streams, max |deviation| = %.3g", worst);
    o.detail = buf;
  }
  return o;
}

Outcome jaccard_identity() {
  Outcome o;
  Rng rng(303);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.below(300);
    const auto t = random_labels(rng, n), p = random_labels(rng, n);
    const auto tx = extract_transactions(t).transactions, px = extract_transactions(p).transactions;
    const auto m = transaction_metrics_from(tx, px);
    const auto ts = simulate_action_table(t).tx, ps = simulate_action_table(p).tx;
    std::size_t inter = 0;
    for (const auto &e : ts) inter += ps.count(e);
    auto uni = ts;
    uni.insert(ps.begin(), ps.end());
    o.check(m.ct == inter && m.pt + m.tt - m.ct == uni.size(), "CT or union size differs from enumeration");
    o.check(m.p_t == (uni.empty() ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni.size())),
            "p_T differs from Jaccard");
  }
  if (o.pass) o.detail = "1000 pairs, exact";
  return o;
}

Outcome pipeline_invariants() {
  Outcome o;
  GeneratorConfig cfg;
  cfg.stock = "INV";
  cfg.max_events = 3000;
  cfg.session_start = hms(9, 38, 0);
  cfg.crossed_fraction = 0.02;
  cfg.duplicate_fraction = 0.02;
  std::vector<DaySeries> days;
  for (auto &[c, g] : generate_days(cfg, 20)) {
    const auto raw = to_day_series(g, c);
    auto once = clean_day(raw);
    o.check(clean_day(once) == once, "clean_day not idempotent on " + format_date(c.date));
    days.push_back(std::move(once));
  }
  const auto normalized = rolling_normalize(days, 5);
  o.check(normalized.size() == 15, "expected 15 normalized days");

  // No leakage: perturbing a day and everything after it leaves the earlier
  // normalized days untouched, and each day's own statistics only move when
  // one of its five source days changes.
  auto perturbed = days;
  for (std::size_t d = 12; d < perturbed.size(); ++d)
    for (auto &s : perturbed[d].snapshots) s.asks[0]->volume += 777;
  const auto again = rolling_normalize(perturbed, 5);
  for (std::size_t k = 0; k < normalized.size(); ++k) {
    const std::size_t day_idx = k + 5;
    if (day_idx <= 12) {
      o.check(again[k].state.mean == normalized[k].state.mean, "stats leaked from a later day");
      if (day_idx < 12) o.check(again[k].values == normalized[k].values, "values leaked from a later day");
    }
  }

  // Labels of every emitted window re-derived from raw mids.
  std::size_t windows = 0;
  for (std::size_t k = 0; k < normalized.size(); ++k) {
    const auto &day = days[k + 5];
    const auto labels = label_events(day, 10, 0.01);
    const auto sel_a = balanced_sample(labels, 200, 42 + k);
    const auto sel_b = balanced_sample(labels, 200, 42 + k);
    o.check(sel_a.indices == sel_b.indices, "balanced_sample not deterministic");
    if (!sel_a.empty_class) {
      std::vector<Label> picked;
      for (auto i : sel_a.indices) picked.push_back(labels[i]);
      const auto c = class_distribution(picked);
      o.check(c.down == c.stable && c.stable == c.up, "unequal class counts after sampling");
    }
    for (const auto &w : build_windows(normalized[k], sequential_indices(labels), 10, labels)) {
      const double diff = (static_cast<double>(mid_sum(day.snapshots[w.end_index + 10])) -
                           static_cast<double>(mid_sum(day.snapshots[w.end_index]))) / 20000.0;
      const Label expect = diff <= -0.01 + 1e-12 ? D : diff >= 0.01 - 1e-12 ? U : S;
      o.check(w.label == expect, "window label disagrees with the mid-price rule");
      ++windows;
    }
  }

  // Threshold monotonicity on a noisy forecast stream.
  Rng rng(404);
  const auto t = random_labels(rng, 5000);
  std::vector<ForecastRecord> f(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::array<double, 3> p{rng.uniform(), rng.uniform(), rng.uniform()};
    p[class_index(t[i])] += rng.uniform();
    const double sum = p[0] + p[1] + p[2];
    for (auto &v : p) v /= sum;
    f[i] = {static_cast<std::int64_t>(i), p};
  }
  const auto rep = evaluate(t, f, default_threshold_grid());
  for (std::size_t k = 1; k < rep.sweep.size(); ++k) {
    o.check(rep.sweep[k].remaining_fraction <= rep.sweep[k - 1].remaining_fraction, "remaining_fraction increased");
    o.check(rep.sweep[k].transactions.tt <= rep.sweep[k - 1].transactions.tt, "TT increased");
  }
  if (o.pass) o.detail = "20 days, " + std::to_string(windows) + " windows re-derived";
  return o;
}

struct RegimeSummary {
  double mean_spread_ticks, spread_var, ir;
  std::int64_t mode, depth_peak_ask, depth_peak_bid;
};

RegimeSummary regime_summary(Regime r) {
  GeneratorConfig cfg;
  cfg.regime = r;
  cfg.seed = 77;
  cfg.max_events = 60000;
  cfg.session_start = hms(9, 40, 0);
  std::vector<DaySeries> days;
  for (auto &[c, g] : generate_days(cfg, 2)) days.push_back(clean_day(to_day_series(g, c)));
  const auto h = spread_pdf_ticks(days, 0.01);
  const auto depth = depth_pdf(days, 0.01);
  std::uint64_t updates = 0;
  for (const auto &d : days) updates += d.size();
  return {h.mean(), h.variance(),
          information_richness(static_cast<double>(updates), static_cast<double>(count_price_changes(days))), h.mode(),
          depth.ask.mode(), depth.bid.mode()};
}

Outcome regime_separation() {
  Outcome o;
  const auto large = regime_summary(Regime::LargeTick), small = regime_summary(Regime::SmallTick);
  o.check(large.mode <= 2, "large-tick spread mode " + std::to_string(large.mode));
  o.check(large.depth_peak_ask >= 9 && large.depth_peak_ask <= 10 && large.depth_peak_bid >= 9 &&
              large.depth_peak_bid <= 10,
          "large-tick depth peak outside 9-10");
  o.check(large.ir > small.ir, "large-tick IR not above small-tick IR");
  o.check(small.spread_var > large.spread_var && small.mean_spread_ticks > large.mean_spread_ticks,
          "small-tick spread PDF not broader");
  char buf[200];
  std::snprintf(buf, sizeof buf, "large: mode %lld, depth peak %lld/%lld, IR %.3f; small: mean spread %.2f ticks, IR %.3f",
                static_cast<long long>(large.mode), static_cast<long long>(large.depth_peak_ask),
                static_cast<long long>(large.depth_peak_bid), large.ir, small.mean_spread_ticks, small.ir);
  if (o.pass) o.detail = buf;
  return o;
}

Outcome horizon_time_oracle() {
  Outcome o;
  GeneratorConfig cfg;
  cfg.event_rate = 10.0;
  cfg.seed = 88;
  cfg.max_events = 100'100;
  const auto day = to_day_series(generate_day(cfg), cfg);
  const std::vector<DaySeries> days{day};
  const std::vector<int> hs{10, 50, 100};
  double worst = 0;
  for (const auto &p : horizon_time_probabilities(days, hs)) {
    const double a = gamma_cdf_integer_shape(p.horizon, cfg.event_rate, 1.0);
    const double b = gamma_cdf_integer_shape(p.horizon, cfg.event_rate, 10.0);
    worst = std::max({worst, std::abs(p.below_1s - a), std::abs(p.from_1s_to_10s - (b - a)),
                      std::abs(p.at_least_10s - (1 - b))});
    o.check(p.samples >= 100000, "fewer than 1e5 samples");
    o.check(std::abs(p.below_1s + p.from_1s_to_10s + p.at_least_10s - 1.0) <= 1e-9, "triple does not sum to 1");
  }
  o.check(worst <= 0.02, "max deviation " + std::to_string(worst));
  if (o.pass) o.detail = "max deviation from Gamma tail " + std::to_string(worst);
  return o;
}

std::vector<LabeledWindow> separable_blobs(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledWindow> out;
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      LabeledWindow w;
      w.label = label_from_index(k);
      w.features.resize(12);
      for (std::size_t j = 0; j < 12; ++j)
        w.features[j] = static_cast<float>((j % 3 == static_cast<std::size_t>(k) ? 2.5 : 0.0) + 0.5 * rng.normal());
      out.push_back(std::move(w));
    }
  return out;
}

double model_mcc(const LinearModel &m, const std::vector<LabeledWindow> &w) {
  std::vector<Label> t, p;
  for (const auto &x : w) {
    t.push_back(x.label);
    p.push_back(argmax_label(predict(m, x.features)));
  }
  return mcc(confusion_matrix(t, p));
}

int run_cli(std::vector<std::string> args, std::string &err) {
  args.insert(args.begin(), "lobkit");
  std::vector<const char *> argv;
  for (auto &a : args) argv.push_back(a.c_str());
  std::ostringstream out, e;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, e);
  err = e.str();
  return code;
}

Outcome baseline_end_to_end() {
  Outcome o;
  // End-to-end CLI run.
  const auto root = fs::temp_directory_path() / "lobkit_acceptance_e2e";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto s = [&](const char *sub) { return (root / sub).string(); };
  {
    std::ofstream(root / "cal.json") << R"({"train": {"from": "2019-01-09", "to": "2019-01-14"},
      "validation": ["2019-01-11"], "test": {"from": "2019-01-15", "to": "2019-01-16"}, "holidays": []})";
  }
  const std::vector<std::vector<std::string>> steps = {
      {"--out", s("raw"), "synth", "--regime", "large", "--stock", "E2E", "--days", "11", "--seed", "9",
       "--max-events", "5000", "--session-start", "09:40:00"},
      {"--out", s("clean"), "clean", "--data", s("raw"), "--out-format", "bin"},
      {"--out", s("stats"), "stats", "--data", s("clean")},
      {"--out", s("labels"), "label", "--data", s("clean"), "--horizon", "10", "--horizon", "50"},
      {"--out", s("norm"), "normalize", "--data", s("clean")},
      {"--out", s("win"), "sample", "--norm", s("norm"), "--labels", s("labels"), "--horizon", "50", "--cap", "500",
       "--seed", "3", "--calendar", (root / "cal.json").string()},
      {"--out", s("model"), "train-baseline", "--windows", s("win/train.win"), "--epochs", "3", "--seed", "3"},
      {"--out", s("pred"), "predict", "--model", s("model/model.lobkm"), "--windows", s("win/test.win")},
      {"--out", s("eval"), "evaluate", "--targets", s("pred/targets.csv"), "--predictions", s("pred/predictions.csv"),
       "--thresholds", "0.3:0.9:0.1", "--stock", "E2E", "--horizon", "50"},
      {"--out", s("report"), "report", "--inputs", s("stats"), s("eval")},
  };
  for (const auto &st : steps) {
    std::string err;
    const int code = run_cli(st, err);
    o.check(code == 0, "`lobkit " + st[2] + "` exited " + std::to_string(code) + ": " + err);
    if (code != 0) return o;
  }
  o.check(fs::exists(root / "report" / "table7.csv") && fs::exists(root / "report" / "sweep_mcc.csv"),
          "report incomplete");

  // Gradient check.
  const auto small = separable_blobs(4, 5);
  LinearModel m(12);
  Rng rng(6);
  for (auto &w : m.weights) w = 0.2 * rng.normal();
  std::vector<std::size_t> batch(small.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  const auto g = loss_and_gradient(m, small, batch, 0.0);
  double worst = 0;
  for (std::size_t j = 0; j < m.weights.size(); ++j) {
    auto a = m, b = m;
    a.weights[j] += 1e-6;
    b.weights[j] -= 1e-6;
    const double fd = (loss_and_gradient(a, small, batch).loss - loss_and_gradient(b, small, batch).loss) / 2e-6;
    worst = std::max(worst, std::abs(g.grad_weights[j] - fd) / std::max(1e-8, std::abs(fd)));
  }
  o.check(worst <= 1e-4, "gradient relative error " + std::to_string(worst));

  // Separable fixture and label-shuffled control.
  const auto train_set = separable_blobs(300, 7), test_set = separable_blobs(300, 8);
  TrainOptions opt;
  opt.epochs = 10;
  opt.learning_rate = 0.05;
  opt.seed = 1;
  const double sep = model_mcc(train(train_set, opt), test_set);
  // Labels are permuted in both the training and the scored set, so any
  // agreement above chance would mean labels leak into features or training.
  Rng sh(9);
  const auto permuted = [&](std::vector<LabeledWindow> w) {
    std::vector<Label> labels;
    for (const auto &x : w) labels.push_back(x.label);
    sh.shuffle(std::span<Label>(labels));
    for (std::size_t i = 0; i < w.size(); ++i) w[i].label = labels[i];
    return w;
  };
  const double ctl = model_mcc(train(permuted(train_set), opt), permuted(separable_blobs(3000, 10)));
  o.check(sep > 0.9, "separable MCC " + std::to_string(sep));
  o.check(std::abs(ctl) < 0.05, "shuffled-control MCC " + std::to_string(ctl));
  char buf[160];
  std::snprintf(buf, sizeof buf, "CLI exit 0; gradient rel. err %.2g; MCC separable %.3f, shuffled %.3f", worst, sep, ctl);
  if (o.pass) o.detail = buf;
  return o;
}

Outcome metric_divergence() {
  Outcome o;
  // High accuracy, no practicable transaction: every signal arrives one step late.
  std::vector<Label> t, p;
  for (int block = 0; block < 20; ++block) {
    const Label sig = block % 2 ? U : D;
    for (int i = 0; i < 10; ++i) {
      t.push_back(i == 0 ? sig : S);
      p.push_back(i == 1 ? sig : S);
    }
  }
  const auto a1 = f1_and_accuracy(confusion_matrix(t, p)).accuracy;
  const auto m1 = transaction_metrics(t, one_hot_forecasts(p), 0.3);
  o.check(a1 >= 0.8 && m1.p_t == 0.0, "fixture A: accuracy " + std::to_string(a1) + ", p_T " + std::to_string(m1.p_t));

  // Low accuracy, identical transactions: Stable targets predicted as the held direction.
  std::vector<Label> t2, p2;
  for (int block = 0; block < 20; ++block) {
    const Label sig = block % 2 ? U : D;
    for (int i = 0; i < 4; ++i) {
      t2.push_back(i == 0 ? sig : S);
      p2.push_back(sig);
    }
  }
  const auto a2 = f1_and_accuracy(confusion_matrix(t2, p2)).accuracy;
  const auto m2 = transaction_metrics(t2, one_hot_forecasts(p2), 0.3);
  o.check(a2 <= 0.5 && m2.p_t >= 0.5, "fixture B: accuracy " + std::to_string(a2) + ", p_T " + std::to_string(m2.p_t));
  char buf[128];
  std::snprintf(buf, sizeof buf, "A: accuracy %.2f, p_T %.2f; B: accuracy %.2f, p_T %.2f", a1, m1.p_t, a2, m2.p_t);
  if (o.pass) o.detail = buf;
  return o;
}

} // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
      {"information richness reproduction", ir_reproduction},
      {"tick classification of 15 stocks", tick_classification},
      {"transaction semantics", transaction_semantics},
      {"metric oracles", metric_oracles},
      {"Jaccard identity", jaccard_identity},
      {"pipeline invariants", pipeline_invariants},
      {"regime separation", regime_separation},
      {"horizon-time oracle", horizon_time_oracle},
      {"baseline end to end", baseline_end_to_end},
      {"metric divergence fixtures", metric_divergence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2zu %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
