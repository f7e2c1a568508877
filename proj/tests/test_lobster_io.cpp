#include "lobkit/lobster_io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace lobkit;
using namespace lobkit::testing;

namespace {

std::string orderbook_line(Price a1, Volume av1, Price b1, Volume bv1) {
  return std::to_string(a1) + "," + std::to_string(av1) + "," + std::to_string(b1) + "," + std::to_string(bv1);
}

DaySeries parse_strings(const std::string &msg, const std::string &ob, int levels = 1) {
  std::istringstream m(msg), o(ob);
  return parse_day(m, o, levels);
}

template <class F> Errc error_code_of(F &&f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  ADD_FAILURE() << "no lobkit::Error thrown";
  return Errc::InvalidArgument;
}

} // namespace

TEST(ParseDay, TwoRowPair) {
  const auto d = parse_strings("34200.000000001,1,11,100,1000100,-1\n34200.5,3,11,100,1000100,-1\n",
                               orderbook_line(1000100, 100, 999900, 50) + "\n" +
                                   orderbook_line(1000200, 10, 999900, 50) + "\n");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.events.size(), 2u);
  EXPECT_EQ(d.snapshots[0].time_ns, 34200 * kNsPerSecond + 1);
  EXPECT_EQ(d.snapshots[1].time_ns, 34200 * kNsPerSecond + 500'000'000);
  EXPECT_EQ(d.events[1].event_type, EventType::Deletion);
  EXPECT_EQ(d.events[0].direction, Direction::Sell);
  EXPECT_EQ(d.snapshots[1].best_ask()->price, 1000200);
}

TEST(ParseDay, BidSentinelDecodesToAbsentLevel) {
  const auto s = parse_orderbook_row("1000100,100,-9999999999,0", 1, "ob", 1);
  ASSERT_TRUE(s.best_ask().has_value());
  EXPECT_EQ(s.best_ask()->price, 1000100);
  EXPECT_FALSE(s.best_bid().has_value());
}

TEST(ParseDay, AskSentinelDecodesToAbsentLevel) {
  const auto s = parse_orderbook_row("9999999999,0,999900,7", 1, "ob", 1);
  EXPECT_FALSE(s.best_ask().has_value());
  EXPECT_EQ(s.best_bid()->volume, 7);
}

TEST(ParseDay, FiveColumnMessageIsMalformed) {
  EXPECT_EQ(error_code_of([] { parse_message_row("34200.1,1,11,100,1000100", "m", 1); }), Errc::MalformedRow);
}

TEST(ParseDay, RejectsBadFields) {
  EXPECT_EQ(error_code_of([] { parse_message_row("34200.1,9,11,100,1000100,1", "m", 1); }), Errc::MalformedRow);
  EXPECT_EQ(error_code_of([] { parse_message_row("34200.1,1,11,100,1000100,0", "m", 1); }), Errc::MalformedRow);
  EXPECT_EQ(error_code_of([] { parse_message_row("x,1,11,100,1000100,1", "m", 1); }), Errc::MalformedRow);
  EXPECT_EQ(error_code_of([] { parse_orderbook_row("1000100,100,999900", 1, "ob", 1); }), Errc::MalformedRow);
}

TEST(ParseDay, RowCountMismatch) {
  EXPECT_EQ(error_code_of([] {
              parse_strings("34200.1,1,11,100,1000100,-1\n34200.2,1,12,100,1000100,-1\n",
                            orderbook_line(1000100, 100, 999900, 50) + "\n");
            }),
            Errc::RowCountMismatch);
}

TEST(ParseDay, NonMonotoneTime) {
  EXPECT_EQ(error_code_of([] {
              parse_strings("34200.2,1,11,100,1000100,-1\n34200.1,1,12,100,1000100,-1\n",
                            orderbook_line(1000100, 100, 999900, 50) + "\n" + orderbook_line(1000100, 200, 999900, 50) +
                                "\n");
            }),
            Errc::NonMonotoneTime);
}

TEST(ParseDay, TimestampParsingIsExact) {
  TimeNs t = 0;
  ASSERT_TRUE(detail::parse_time_ns("34200.123456789", t));
  EXPECT_EQ(t, 34200'123'456'789LL);
  ASSERT_TRUE(detail::parse_time_ns("57599.9", t));
  EXPECT_EQ(t, 57599'900'000'000LL);
  EXPECT_FALSE(detail::parse_time_ns("1.1234567891", t));
  EXPECT_EQ(detail::format_time_ns(34200'000'000'001LL), "34200.000000001");
}

TEST(Quotes, MidPrice) {
  const auto a = dense_snapshot(0, 1000200, 1000000);
  EXPECT_DOUBLE_EQ(mid_price(a), 100.01);
  const auto b = dense_snapshot(0, 3437900, 3435100);
  EXPECT_NEAR(mid_price(b), 343.65, 1e-12);
}

TEST(Quotes, EmptyBidSideIsMissingBest) {
  auto s = dense_snapshot(0, 1000200, 1000000);
  for (auto &l : s.bids) l.reset();
  EXPECT_EQ(error_code_of([&] { mid_price(s); }), Errc::MissingBest);
}

TEST(Quotes, Spread) {
  EXPECT_NEAR(spread(dense_snapshot(0, 1000200, 1000000)), 0.02, 1e-12);
  EXPECT_NEAR(spread(dense_snapshot(0, 1000100, 1000000)), 0.01, 1e-12);
  EXPECT_EQ(error_code_of([] { spread(dense_snapshot(0, 1000000, 1000100)); }), Errc::CrossedQuote);
  EXPECT_EQ(error_code_of([] { spread(dense_snapshot(0, 1000000, 1000000)); }), Errc::CrossedQuote);
}

TEST(Clean, LockedSnapshotRemoved) {
  auto d = day_from({dense_snapshot(hms(10, 0, 0), 1000100, 1000000), dense_snapshot(hms(10, 0, 1), 1000000, 1000000),
                     dense_snapshot(hms(10, 0, 2), 1000200, 1000000)});
  CleaningStats st;
  const auto c = clean_day(d, &st);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(st.crossed_removed, 1u);
  EXPECT_EQ(c.snapshots[1].time_ns, hms(10, 0, 2));
  EXPECT_EQ(c.events.size(), c.snapshots.size());
}

TEST(Clean, EqualTimestampsCollapseToLast) {
  const TimeNs t = hms(11, 0, 0);
  auto d = day_from({dense_snapshot(t, 1000100, 999900), dense_snapshot(t, 1000200, 1000000),
                     dense_snapshot(t, 1000300, 1000100)});
  const auto c = clean_day(d);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(mid_sum(c.snapshots[0]), 1000300 + 1000100);
  EXPECT_EQ(c.events[0].order_id, 3);
}

TEST(Clean, SessionTrimBoundaries) {
  auto d = day_from({dense_snapshot(hms(9, 39, 59) + 999'000'000, 1000100, 1000000),
                     dense_snapshot(hms(9, 40, 0), 1000100, 1000000), dense_snapshot(hms(15, 50, 0), 1000100, 1000000),
                     dense_snapshot(hms(15, 50, 0) + 1, 1000100, 1000000)});
  CleaningStats st;
  const auto c = clean_day(d, &st);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.snapshots.front().time_ns, hms(9, 40, 0));
  EXPECT_EQ(c.snapshots.back().time_ns, hms(15, 50, 0));
  EXPECT_EQ(st.trimmed, 2u);
}

TEST(Clean, OneSidedSnapshotRemoved) {
  auto s = dense_snapshot(hms(10, 0, 1), 1000100, 1000000);
  for (auto &l : s.bids) l.reset();
  auto d = day_from({dense_snapshot(hms(10, 0, 0), 1000100, 1000000), s});
  EXPECT_EQ(clean_day(d).size(), 1u);
}

TEST(Clean, NothingSurvivesIsEmptyDay) {
  auto d = day_from({dense_snapshot(hms(9, 35, 0), 1000100, 1000000)});
  EXPECT_EQ(error_code_of([&] { clean_day(d); }), Errc::EmptyDay);
}

TEST(Clean, Idempotent) {
  Rng rng(5);
  std::vector<LobSnapshot> snaps;
  TimeNs t = hms(9, 35, 0);
  for (int i = 0; i < 3000; ++i) {
    t += static_cast<TimeNs>(rng.below(3)) * 1'000'000'000; // frequent equal timestamps
    const Price bid = 1000000 + 100 * static_cast<Price>(rng.below(5));
    const Price ask = bid + 100 * (static_cast<Price>(rng.below(4)) - 1); // may cross or lock
    snaps.push_back(dense_snapshot(t, ask, bid));
  }
  const auto once = clean_day(day_from(snaps));
  const auto twice = clean_day(once);
  EXPECT_EQ(once, twice);
  for (const auto &s : once.snapshots) EXPECT_GE(spread_units(s), 100);
  for (std::size_t i = 1; i < once.size(); ++i) EXPECT_LT(once.snapshots[i - 1].time_ns, once.snapshots[i].time_ns);
}

TEST(Writers, CsvRoundTrip) {
  auto d = day_from({dense_snapshot(hms(10, 0, 0), 1000100, 1000000, 3),
                     dense_snapshot(hms(10, 0, 0) + 17, 1000200, 1000000, 3)});
  d.snapshots[1].bids[2].reset();
  std::ostringstream m, o;
  write_messages_csv(m, d);
  write_orderbook_csv(o, d);
  auto back = parse_strings(m.str(), o.str(), 3);
  back.stock = d.stock;
  back.date = d.date;
  EXPECT_EQ(back, d);
}

TEST(Writers, BinaryRoundTrip) {
  auto d = day_from({dense_snapshot(hms(10, 0, 0), 1000100, 1000000), dense_snapshot(hms(10, 0, 1), 1000300, 1000000)});
  d.snapshots[0].asks[9].reset();
  d.tick_size = 0.05;
  std::stringstream ss;
  write_day_binary(ss, d);
  EXPECT_EQ(read_day_binary(ss), d);
}

TEST(Writers, FileName) {
  EXPECT_EQ(lobster_file_name("AAPL", parse_date("2019-01-02"), "message", 10),
            "AAPL_2019-01-02_34200000_57600000_message_10.csv");
}

TEST(Dates, WeekendDetection) {
  EXPECT_TRUE(is_weekend(parse_date("2019-01-05")));
  EXPECT_FALSE(is_weekend(parse_date("2019-01-07")));
  EXPECT_EQ(format_date(parse_date("2017-12-31")), "2017-12-31");
}
