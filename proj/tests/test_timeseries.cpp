#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "support.hpp"
#include "ugcimpact/error.hpp"
#include "ugcimpact/timeseries.hpp"

using namespace ugcimpact;
using testing::monday;

namespace {

RateSeries weekly(const std::string& loc, Date start, std::vector<double> v) {
  const DateIndex idx(start, 7, v.size());
  return RateSeries(loc, idx, std::move(v));
}

std::vector<double> ramp(std::size_t n, double from = 1.0) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = from + static_cast<double>(i);
  return v;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("dates parse strictly and round-trip") {
  CHECK(format_date(parse_date("2011-01-03")) == "2011-01-03");
  CHECK(parse_date("2012-02-29") == testing::day(2012, 2, 29));
  for (const char* bad : {"2011-1-03", "2011-02-30", "2011-01-03T00:00", "", "20110103", "2013-02-29"}) {
    CAPTURE(bad);
    CHECK(code_of([&] { parse_date(bad); }) == ErrorCode::ParseError);
  }
}

TEST_CASE("date index invariants") {
  CHECK(code_of([] { DateIndex(monday(), 7, 0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { DateIndex(monday(), 0, 3); }) == ErrorCode::InvalidArgument);
  const DateIndex w(monday(), 7, 10);
  CHECK(w.at(2) == testing::day(2011, 1, 17));
  CHECK(w.end() == testing::day(2011, 3, 14));
  CHECK(w.position(testing::day(2011, 1, 17)) == 2u);
  CHECK_FALSE(w.position(testing::day(2011, 1, 18)).has_value());
  CHECK(w.alignable_with(DateIndex(testing::day(2011, 2, 14), 7, 3)));
  CHECK_FALSE(w.alignable_with(DateIndex(testing::day(2011, 2, 15), 7, 3)));
  CHECK_FALSE(w.alignable_with(DateIndex(monday(), 1, 3)));
}

TEST_CASE("rate series rejects negative and non-finite values") {
  CHECK(code_of([] { weekly("a", monday(), {1.0, -0.5}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { weekly("a", monday(), {1.0, NAN}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { RateSeries("a", DateIndex(monday(), 7, 3), {1.0, 2.0}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("align") {
  SUBCASE("weeks 1-10 against weeks 6-15 gives weeks 6-10") {
    const auto a = weekly("a", monday(), ramp(10, 1.0));
    const auto b = weekly("b", DateIndex(monday(), 7, 10).at(5), ramp(10, 100.0));
    const auto r = align(a, b);
    CHECK(r.index.start == a.index().at(5));
    CHECK(r.a == std::vector<double>{6, 7, 8, 9, 10});
    CHECK(r.b == std::vector<double>{100, 101, 102, 103, 104});
  }
  SUBCASE("identical series give full copies and align is idempotent") {
    const auto a = weekly("a", monday(), ramp(8));
    const auto r = align(a, a);
    CHECK(r.a == a.values());
    CHECK(r.b == a.values());
    const auto again = align(RateSeries("x", r.index, r.a), RateSeries("y", r.index, r.b));
    CHECK(again.a == r.a);
    CHECK(again.b == r.b);
    CHECK(again.index == r.index);
  }
  SUBCASE("daily against weekly is not alignable") {
    const auto a = weekly("a", monday(), ramp(8));
    const RateSeries d("d", DateIndex(monday(), 1, 30), ramp(30));
    CHECK(code_of([&] { align(a, d); }) == ErrorCode::NonAlignable);
  }
  SUBCASE("disjoint ranges") {
    const auto a = weekly("a", monday(), ramp(4));
    const auto b = weekly("b", DateIndex(monday(), 7, 10).at(6), ramp(4));
    CHECK(code_of([&] { align(a, b); }) == ErrorCode::EmptyOverlap);
  }
}

TEST_CASE("slice") {
  const auto s = weekly("a", monday(), ramp(52));
  const DateIndex& idx = s.index();
  SUBCASE("weeks 40-52 hold 12 points") {
    const auto out = slice(s, DateRange{idx.at(39), idx.at(51)});
    CHECK(out.size() == 12);
    CHECK(out.values().front() == 40.0);
  }
  SUBCASE("whole index is the identity") {
    const auto out = slice(s, StudyPeriod{PeriodKind::pre_intervention, {idx.start, idx.end()}});
    CHECK(out.values() == s.values());
    CHECK(out.index() == s.index());
  }
  SUBCASE("disjoint period") {
    CHECK(code_of([&] { slice(s, DateRange{idx.end(), idx.end() + std::chrono::days{70}}); }) == ErrorCode::EmptyOverlap);
  }
  SUBCASE("nested slices equal the inner slice") {
    const DateRange outer{idx.at(5) + std::chrono::days{2}, idx.at(40)};
    const DateRange inner{idx.at(10), idx.at(20) + std::chrono::days{3}};
    const auto twice = slice(slice(s, outer), inner);
    const auto once = slice(s, inner);
    CHECK(twice.values() == once.values());
    CHECK(twice.index() == once.index());
  }
}

TEST_CASE("pearson examples") {
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
  // Hand evaluation: deviations (-1.5,-.5,.5,1.5) and (-1.5,.5,-.5,1.5); sum of products 4, sums of squares 5 and 5.
  CHECK(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(code_of([] { pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}); }) == ErrorCode::DegenerateInput);
  CHECK(code_of([] { pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }) == ErrorCode::DegenerateInput);
  CHECK(code_of([] { pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("pearson properties on random data") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = testing::normals(rng, 5 + trial % 40);
    auto b = testing::normals(rng, a.size());
    for (std::size_t i = 0; i < a.size(); ++i) b[i] += 0.5 * a[i];
    const double r = pearson(a, b);
    CHECK(std::abs(r) <= 1.0 + 1e-12);
    CHECK(pearson(b, a) == doctest::Approx(r).epsilon(1e-14));
    double alpha = coef(rng), gamma = coef(rng);
    if (std::abs(alpha) < 0.1) alpha = 0.7;
    if (std::abs(gamma) < 0.1) gamma = -0.4;
    const double beta = coef(rng), delta = coef(rng);
    std::vector<double> ta(a.size()), tb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ta[i] = alpha * a[i] + beta;
      tb[i] = gamma * b[i] + delta;
    }
    const double sign = (alpha * gamma > 0) ? 1.0 : -1.0;
    CHECK(std::abs(pearson(ta, tb) - sign * r) < 1e-10);
  }
}

TEST_CASE("means") {
  CHECK(mean_over(weekly("a", monday(), {10, 20, 30})) == 20.0);
  CHECK(mean_over(weekly("a", monday(), {7})) == 7.0);
  CHECK(mean_over(weekly("a", monday(), {0, 0, 0})) == 0.0);
}

TEST_CASE("study periods must be ordered and non-empty") {
  const StudyPeriod pre{PeriodKind::pre_intervention, {testing::day(2011, 1, 3), testing::day(2012, 1, 2)}};
  const StudyPeriod iv{PeriodKind::intervention, {testing::day(2012, 1, 2), testing::day(2012, 6, 4)}};
  CHECK_NOTHROW(validate_study_periods(pre, iv));
  CHECK(code_of([&] { validate_study_periods(iv, pre); }) == ErrorCode::PeriodOrderError);
  const StudyPeriod empty{PeriodKind::intervention, {testing::day(2012, 1, 2), testing::day(2012, 1, 2)}};
  CHECK(code_of([&] { validate_study_periods(pre, empty); }) == ErrorCode::PeriodOrderError);
  const StudyPeriod overlap{PeriodKind::intervention, {testing::day(2011, 12, 26), testing::day(2012, 6, 4)}};
  CHECK(code_of([&] { validate_study_periods(pre, overlap); }) == ErrorCode::PeriodOrderError);
}

TEST_CASE("location sets") {
  const LocationSet t(LocationRole::target, {"b", "a", "b"});
  CHECK(t.members == std::vector<std::string>{"a", "b"});
  CHECK(code_of([] { LocationSet(LocationRole::control, {}); }) == ErrorCode::InvalidArgument);
  const LocationSet c(LocationRole::control, {"c", "a"});
  CHECK(code_of([&] { validate_disjoint(t, c); }) == ErrorCode::InvalidArgument);
  CHECK_NOTHROW(validate_disjoint(t, LocationSet(LocationRole::control, {"c"})));
}

TEST_CASE("rate csv ingestion is strict") {
  SUBCASE("round trip") {
    std::map<std::string, RateSeries> rates;
    rates.emplace("north", weekly("north", monday(), {1.5, 2.25, 0.0}));
    rates.emplace("south, east", weekly("south, east", monday(), {3.0, 4.0, 5.125}));
    std::ostringstream out;
    write_rates_csv(out, rates);
    std::istringstream in(out.str());
    const auto back = read_rates_csv(in);
    REQUIRE(back.size() == 2);
    CHECK(back.at("north").values() == rates.at("north").values());
    CHECK(back.at("south, east").values() == rates.at("south, east").values());
  }
  SUBCASE("rows may arrive in any order") {
    std::istringstream in("location,rate,date\nx,2,2011-01-10\nx,1,2011-01-03\n");
    const auto r = read_rates_csv(in);
    CHECK(r.at("x").values() == std::vector<double>{1, 2});
  }
  auto fails = [](const std::string& text) {
    std::istringstream in(text);
    return code_of([&] { read_rates_csv(in); });
  };
  CHECK(fails("date,location,rate\n2011-01-03,x,1\n2011-01-03,x,2\n") == ErrorCode::ParseError);
  CHECK(fails("date,location,rate\n2011-01-03,x,1\n2011-01-17,x,2\n") == ErrorCode::ParseError);
  CHECK(fails("date,location,rate\n2011-01-03,x,-1\n") == ErrorCode::ParseError);
  CHECK(fails("date,location,rate\n2011-01-03,x,abc\n") == ErrorCode::ParseError);
  CHECK(fails("date,location\n2011-01-03,x\n") == ErrorCode::ParseError);
  CHECK(fails("date,location,rate\n2011-01-03,x\n") == ErrorCode::ParseError);
}

TEST_CASE("panel keeps the common date overlap") {
  std::map<std::string, RateSeries> rates;
  rates.emplace("a", weekly("a", monday(), ramp(10)));
  rates.emplace("b", weekly("b", DateIndex(monday(), 7, 10).at(3), ramp(10)));
  const auto p = to_panel(rates);
  CHECK(p.index.count == 7);
  CHECK(p.at("a").front() == 4.0);
  CHECK(p.at("b").front() == 1.0);
  rates.emplace("c", RateSeries("c", DateIndex(monday() + std::chrono::days{1}, 7, 5), ramp(5)));
  CHECK(code_of([&] { to_panel(rates); }) == ErrorCode::NonAlignable);
}
