#include "ugcimpact/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "ugcimpact/csv.hpp"
#include "ugcimpact/error.hpp"

namespace ugcimpact {

using std::chrono::days;

Date parse_date(std::string_view iso) {
  auto field = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(iso.data() + pos, iso.data() + pos + len, v);
    if (ec != std::errc() || ptr != iso.data() + pos + len) {
      throw Error(ErrorCode::ParseError, "invalid ISO-8601 date '" + std::string(iso) + "'");
    }
    return v;
  };
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw Error(ErrorCode::ParseError, "invalid ISO-8601 date '" + std::string(iso) + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{field(0, 4)},
                                        std::chrono::month{static_cast<unsigned>(field(5, 2))},
                                        std::chrono::day{static_cast<unsigned>(field(8, 2))}};
  if (!ymd.ok()) throw Error(ErrorCode::ParseError, "invalid calendar date '" + std::string(iso) + "'");
  return Date{ymd};
}

std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

DateIndex::DateIndex(Date start_, int step_days_, std::size_t count_)
    : start(start_), step_days(step_days_), count(count_) {
  if (step_days <= 0) throw Error(ErrorCode::InvalidArgument, "date step must be positive");
  if (count == 0) throw Error(ErrorCode::InvalidArgument, "date index must hold at least one observation");
}

Date DateIndex::at(std::size_t i) const { return start + days{static_cast<long>(i) * step_days}; }

Date DateIndex::end() const { return at(count); }

std::optional<std::size_t> DateIndex::position(Date date) const {
  const auto offset = (date - start).count();
  if (offset < 0 || offset % step_days != 0) return std::nullopt;
  const auto pos = static_cast<std::size_t>(offset / step_days);
  if (pos >= count) return std::nullopt;
  return pos;
}

bool DateIndex::alignable_with(const DateIndex& other) const {
  return step_days == other.step_days && (other.start - start).count() % step_days == 0;
}

void validate_study_periods(const StudyPeriod& pre, const StudyPeriod& intervention) {
  if (pre.range.empty() || intervention.range.empty()) {
    throw Error(ErrorCode::PeriodOrderError, "study periods must be non-empty");
  }
  if (pre.range.end > intervention.range.begin) {
    throw Error(ErrorCode::PeriodOrderError, "pre-intervention period [" + format_date(pre.range.begin) + ", " +
                                                 format_date(pre.range.end) +
                                                 ") must precede the intervention period starting " +
                                                 format_date(intervention.range.begin));
  }
}

RateSeries::RateSeries(std::string location, DateIndex index, std::vector<double> values)
    : location_(std::move(location)), index_(index), values_(std::move(values)) {
  if (values_.size() != index_.count) {
    throw Error(ErrorCode::DimensionMismatch, "rate series '" + location_ + "' has " +
                                                  std::to_string(values_.size()) + " values for " +
                                                  std::to_string(index_.count) + " dates");
  }
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "rate series '" + location_ + "' holds a negative or non-finite rate");
    }
  }
}

LocationSet::LocationSet(LocationRole role_, std::vector<std::string> members_) : role(role_), members(std::move(members_)) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (members.empty()) throw Error(ErrorCode::InvalidArgument, "location set must be non-empty");
}

void validate_disjoint(const LocationSet& targets, const LocationSet& controls) {
  std::vector<std::string> both;
  std::set_intersection(targets.members.begin(), targets.members.end(), controls.members.begin(),
                        controls.members.end(), std::back_inserter(both));
  if (!both.empty()) {
    throw Error(ErrorCode::InvalidArgument, "location '" + both.front() + "' is both a target and a control");
  }
}

AlignedValues align(const RateSeries& a, const RateSeries& b) {
  const DateIndex& ia = a.index();
  const DateIndex& ib = b.index();
  if (!ia.alignable_with(ib)) {
    throw Error(ErrorCode::NonAlignable, "series '" + a.location() + "' and '" + b.location() +
                                             "' do not share a calendar cadence");
  }
  const Date begin = std::max(ia.start, ib.start);
  const Date end = std::min(ia.end(), ib.end());
  if (end <= begin) throw Error(ErrorCode::EmptyOverlap, "series do not overlap");
  const auto n = static_cast<std::size_t>((end - begin).count() / ia.step_days);
  const std::size_t oa = *ia.position(begin);
  const std::size_t ob = *ib.position(begin);
  AlignedValues out{DateIndex(begin, ia.step_days, n), {}, {}};
  out.a.assign(a.values().begin() + static_cast<long>(oa), a.values().begin() + static_cast<long>(oa + n));
  out.b.assign(b.values().begin() + static_cast<long>(ob), b.values().begin() + static_cast<long>(ob + n));
  return out;
}

namespace {

// [first, last) positions of observations inside range.
std::pair<std::size_t, std::size_t> positions_in(const DateIndex& index, const DateRange& range) {
  std::size_t first = index.count;
  std::size_t last = 0;
  for (std::size_t i = 0; i < index.count; ++i) {
    if (range.contains(index.at(i))) {
      first = std::min(first, i);
      last = i + 1;
    }
  }
  if (first >= last) {
    throw Error(ErrorCode::EmptyOverlap, "no observation falls in [" + format_date(range.begin) + ", " +
                                             format_date(range.end) + ")");
  }
  return {first, last};
}

}  // namespace

RateSeries slice(const RateSeries& s, const DateRange& range) {
  const auto [first, last] = positions_in(s.index(), range);
  std::vector<double> values(s.values().begin() + static_cast<long>(first), s.values().begin() + static_cast<long>(last));
  return RateSeries(s.location(), DateIndex(s.index().at(first), s.index().step_days, last - first), std::move(values));
}

RateSeries slice(const RateSeries& s, const StudyPeriod& period) { return slice(s, period.range); }

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "pearson: sequences differ in length");
  if (a.size() < 3) throw Error(ErrorCode::DegenerateInput, "pearson: need at least 3 observations");
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double n = static_cast<double>(a.size());
  const double tiny = 1e-26 * n;
  if (saa <= tiny * std::max(1.0, ma * ma) || sbb <= tiny * std::max(1.0, mb * mb)) throw Error(ErrorCode::DegenerateInput, "pearson: constant sequence");
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "mean of an empty sequence");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double mean_over(const RateSeries& s) { return mean(s.values()); }

const std::vector<double>& RatePanel::at(const std::string& location) const {
  auto it = series.find(location);
  if (it == series.end()) throw Error(ErrorCode::InvalidArgument, "no rate series for location '" + location + "'");
  return it->second;
}

RateSeries RatePanel::series_for(const std::string& location) const { return RateSeries(location, index, at(location)); }

RatePanel RatePanel::slice(const DateRange& range) const {
  const auto [first, last] = positions_in(index, range);
  RatePanel out;
  out.index = DateIndex(index.at(first), index.step_days, last - first);
  for (const auto& [loc, values] : series) {
    out.series.emplace(loc, std::vector<double>(values.begin() + static_cast<long>(first),
                                                values.begin() + static_cast<long>(last)));
  }
  return out;
}

std::map<std::string, RateSeries> read_rates_csv(std::istream& in, int step_days) {
  const auto table = csv::Table::read(in, "rates");
  const auto c_date = table.column("date");
  const auto c_loc = table.column("location");
  const auto c_rate = table.column("rate");

  std::map<std::string, std::map<Date, double>> by_location;
  for (const auto& row : table.rows()) {
    Date d{};
    double rate = 0.0;
    try {
      d = parse_date(row.fields[c_date]);
      rate = csv::parse_double(row.fields[c_rate]);
    } catch (const Error& e) {
      table.fail(row, e.what());
    }
    if (!std::isfinite(rate) || rate < 0.0) table.fail(row, "rate must be a non-negative finite number");
    const auto& loc = row.fields[c_loc];
    if (loc.empty()) table.fail(row, "empty location");
    if (!by_location[loc].emplace(d, rate).second) {
      table.fail(row, "duplicate (date, location) pair " + format_date(d) + ", " + loc);
    }
  }

  std::map<std::string, RateSeries> out;
  for (auto& [loc, obs] : by_location) {
    const Date start = obs.begin()->first;
    std::vector<double> values;
    values.reserve(obs.size());
    std::size_t i = 0;
    for (const auto& [d, v] : obs) {
      const Date expected = start + days{static_cast<long>(i) * step_days};
      if (d != expected) {
        throw Error(ErrorCode::ParseError, "rates: location '" + loc + "' has a gap or off-cadence date at " +
                                               format_date(d) + " (expected " + format_date(expected) + ")");
      }
      values.push_back(v);
      ++i;
    }
    const DateIndex index(start, step_days, values.size());
    out.emplace(loc, RateSeries(loc, index, std::move(values)));
  }
  return out;
}

std::map<std::string, RateSeries> read_rates_csv_file(const std::string& path, int step_days) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open rates file '" + path + "'");
  try {
    return read_rates_csv(in, step_days);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

void write_rates_csv(std::ostream& out, const std::map<std::string, RateSeries>& rates) {
  out << "date,location,rate\n";
  for (const auto& [loc, s] : rates) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out << format_date(s.index().at(i)) << ',' << csv::escape(loc) << ',' << csv::format_number(s.values()[i])
          << '\n';
    }
  }
}

RatePanel to_panel(const std::map<std::string, RateSeries>& rates) {
  if (rates.empty()) throw Error(ErrorCode::InvalidArgument, "no rate series");
  const DateIndex& first = rates.begin()->second.index();
  Date begin = first.start;
  Date end = first.end();
  for (const auto& [loc, s] : rates) {
    if (!first.alignable_with(s.index())) {
      throw Error(ErrorCode::NonAlignable, "location '" + loc + "' does not share the calendar cadence of '" +
                                               rates.begin()->first + "'");
    }
    begin = std::max(begin, s.index().start);
    end = std::min(end, s.index().end());
  }
  if (end <= begin) throw Error(ErrorCode::EmptyOverlap, "rate series have no common dates");
  RatePanel panel;
  panel.index = DateIndex(begin, first.step_days, static_cast<std::size_t>((end - begin).count() / first.step_days));
  for (const auto& [loc, s] : rates) {
    const std::size_t offset = *s.index().position(begin);
    panel.series.emplace(loc, std::vector<double>(s.values().begin() + static_cast<long>(offset),
                                                  s.values().begin() + static_cast<long>(offset + panel.index.count)));
  }
  return panel;
}

}  // namespace ugcimpact
