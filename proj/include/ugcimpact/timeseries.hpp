#pragma once

#include <chrono>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ugcimpact {

/// Calendar date at UTC midnight.
using Date = std::chrono::sys_days;

Date parse_date(std::string_view iso);
std::string format_date(Date date);

/// Regular calendar axis: `count` observations starting at `start`, `step_days` apart.
struct DateIndex {
  Date start{};
  int step_days = 7;
  std::size_t count = 1;

  DateIndex() = default;
  DateIndex(Date start, int step_days, std::size_t count);

  Date at(std::size_t i) const;
  /// One step past the last observation.
  Date end() const;
  /// Position of `date` on this axis, if it is one of the observation dates.
  std::optional<std::size_t> position(Date date) const;
  bool alignable_with(const DateIndex& other) const;

  friend bool operator==(const DateIndex&, const DateIndex&) = default;
};

/// Half-open interval [begin, end).
struct DateRange {
  Date begin{};
  Date end{};

  bool contains(Date d) const { return d >= begin && d < end; }
  bool empty() const { return end <= begin; }
  friend bool operator==(const DateRange&, const DateRange&) = default;
};

enum class PeriodKind { pre_intervention, intervention };

struct StudyPeriod {
  PeriodKind kind = PeriodKind::pre_intervention;
  DateRange range;
};

/// Throws PeriodOrderError unless both ranges are non-empty and `pre` ends
/// no later than `intervention` begins.
void validate_study_periods(const StudyPeriod& pre, const StudyPeriod& intervention);

/// Disease-rate observations (cases per 100,000 people) for one location.
class RateSeries {
 public:
  RateSeries(std::string location, DateIndex index, std::vector<double> values);

  const std::string& location() const { return location_; }
  const DateIndex& index() const { return index_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::string location_;
  DateIndex index_;
  std::vector<double> values_;
};

enum class LocationRole { target, control };

struct LocationSet {
  LocationRole role = LocationRole::target;
  /// Sorted, unique.
  std::vector<std::string> members;

  LocationSet(LocationRole role, std::vector<std::string> members);
};

/// Throws InvalidArgument if a location belongs to both sets.
void validate_disjoint(const LocationSet& targets, const LocationSet& controls);

struct AlignedValues {
  DateIndex index;
  std::vector<double> a;
  std::vector<double> b;
};

AlignedValues align(const RateSeries& a, const RateSeries& b);

RateSeries slice(const RateSeries& s, const DateRange& range);
RateSeries slice(const RateSeries& s, const StudyPeriod& period);

/// Sample Pearson correlation. Throws DegenerateInput on length < 3 or zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> values);
double mean_over(const RateSeries& s);

/// Several locations sharing one calendar axis.
struct RatePanel {
  DateIndex index;
  std::map<std::string, std::vector<double>> series;

  const std::vector<double>& at(const std::string& location) const;
  RateSeries series_for(const std::string& location) const;
  RatePanel slice(const DateRange& range) const;
};

/// Strict long-format rate CSV: `date,location,rate`.
/// Every location must form a gap-free series on a `step_days` cadence;
/// duplicate (date, location) rows, negative or non-finite rates are rejected.
std::map<std::string, RateSeries> read_rates_csv(std::istream& in, int step_days = 7);
std::map<std::string, RateSeries> read_rates_csv_file(const std::string& path, int step_days = 7);
void write_rates_csv(std::ostream& out, const std::map<std::string, RateSeries>& rates);

/// Restricts every series to the dates all of them cover. Throws NonAlignable
/// on mixed cadences and EmptyOverlap when there is no common date.
RatePanel to_panel(const std::map<std::string, RateSeries>& rates);

}  // namespace ugcimpact
