#pragma once

// Counterfactual impact assessment for an intervention applied in a set of
// target locations, using correlated control locations:
//
//  1. enumerate target/control location subsets,
//  2. keep pairs whose aggregate pre-intervention rates correlate >= rho_min,
//  3. fit target ~ control by OLS over the pre-intervention period,
//  4. project the target counterfactual from the control during the intervention,
//  5. theta = 100 * (mean(actual) - mean(counterfactual)) / mean(counterfactual),
//  6. bootstrap theta (inputs and residuals), 95% CI and the 2-sigma rule.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ugcimpact/timeseries.hpp"

namespace ugcimpact::impact {

enum class Aggregation { mean, population_weighted };

struct AssessmentConfig {
  double rho_min = 0.6;
  std::size_t max_subset_size = 3;
  std::size_t bootstrap_replicates = 1000;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::mean;
  /// Location weights for population_weighted aggregation.
  std::map<std::string, double> population;
  std::size_t pair_cap = 1'000'000;
  bool resample_inputs = true;
  bool resample_residuals = true;
  /// Counterfactual means at or below this are rejected.
  double eps_div = 1e-9;
  std::size_t min_projection_length = 8;
  /// Workers for the pair sweep; 0 = hardware concurrency.
  unsigned threads = 1;

  /// Throws InvalidArgument.
  void validate() const;
};

struct SubsetPair {
  std::vector<std::string> targets;
  std::vector<std::string> controls;
  double correlation = std::numeric_limits<double>::quiet_NaN();
  /// Position in the enumeration order; seeds the pair's random stream.
  std::size_t canonical_index = 0;
};

/// Number of non-empty subsets of an n-set with at most max_size members.
std::size_t count_subsets(std::size_t n, std::size_t max_size);

/// Non-empty subsets with at most max_size members, ordered by size and then
/// lexicographically by member position.
std::vector<std::vector<std::string>> enumerate_subsets(const std::vector<std::string>& members, std::size_t max_size);

/// Target subsets crossed with control subsets, in canonical order.
/// Throws CombinatorialLimit above config.pair_cap.
std::vector<SubsetPair> enumerate_pairs(const LocationSet& targets, const LocationSet& controls,
                                        const AssessmentConfig& config);

/// Aggregate rate series of a location subset.
std::vector<double> aggregate(const RatePanel& rates, const std::vector<std::string>& subset, const AssessmentConfig& config);

struct DroppedPair {
  SubsetPair pair;
  std::string reason;
};

struct ScreenResult {
  /// Sorted by descending correlation, ties by canonical index.
  std::vector<SubsetPair> qualified;
  /// Pairs whose correlation could not be computed.
  std::vector<DroppedPair> dropped;
  std::optional<double> best_correlation;
};

ScreenResult screen(std::vector<SubsetPair> pairs, const RatePanel& pre_rates, const AssessmentConfig& config);

struct LinearProjector {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> residuals;
  double r_squared = 0.0;
  double residual_se = 0.0;

  double apply(double control) const { return slope * control + intercept; }
};

/// OLS of target on control with intercept. Throws DegenerateInput when the
/// control series is constant and InvalidArgument when shorter than min_length.
LinearProjector fit_projection(std::span<const double> control, std::span<const double> target,
                               std::size_t min_length = 8);

/// Counterfactual slope * control + intercept, clamped at zero.
std::vector<double> project(const LinearProjector& h, std::span<const double> control);
RateSeries project(const LinearProjector& h, const RateSeries& control, const std::string& location);

/// Percentage difference of means. Throws CounterfactualNearZero when
/// mean(counterfactual) <= eps_div.
double impact_theta(std::span<const double> actual, std::span<const double> counterfactual, double eps_div = 1e-9);

struct DistributionCheck {
  bool ok = false;
  bool symmetric = false;
  bool unimodal = false;
  /// All samples equal up to round-off; treated as unimodal and symmetric.
  bool degenerate = false;
  double skewness = 0.0;
  std::size_t modes = 0;
};

/// Symmetry: |sample skewness| <= 0.5. Unimodality: the histogram over
/// ceil(sqrt(B)) equal-width bins, smoothed by a 3-bin moving average, has
/// one local maximum. Maxima separated by a valley shallower than two
/// counting standard errors are merged. Needs at least 100 samples.
DistributionCheck check_distribution(std::span<const double> samples);

enum class Significance { significant, not_significant, not_assessable };

const char* to_string(Significance s);

/// Empirical quantile of type 1 (inverse of the empirical CDF) of sorted data.
double quantile_type1(std::span<const double> sorted, double p);

struct PairSeries {
  std::vector<double> pre_control;
  std::vector<double> pre_target;
  std::vector<double> intervention_control;
  std::vector<double> intervention_target;
};

struct ImpactEstimate {
  SubsetPair pair;
  LinearProjector projector;
  std::vector<double> counterfactual;
  double theta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> bootstrap_samples;
  double bootstrap_sd = 0.0;
  std::size_t bootstrap_attempts = 0;
  DistributionCheck distribution;
  bool significant = false;
  Significance status = Significance::not_significant;
};

/// Full estimate for one pair given its fitted projector. Each replicate
/// refits the projector on resampled pre-intervention time points and adds
/// resampled residuals to the projected counterfactual. Failed replicates are
/// redrawn up to 10 * B attempts, then BootstrapFailed.
ImpactEstimate bootstrap(const SubsetPair& pair, const PairSeries& series, const LinearProjector& h,
                         const AssessmentConfig& config, std::uint64_t seed);

struct Cohort {
  std::string name;
  /// Sorted target locations.
  std::vector<std::string> members;
};

struct CohortSummary {
  Cohort cohort;
  /// Index into ImpactReport::rows of the chosen pair.
  std::optional<std::size_t> row;
  std::string note;
};

struct ExcludedPair {
  SubsetPair pair;
  std::string reason;
};

struct ImpactReport {
  AssessmentConfig config;
  DateRange pre_intervention;
  DateRange intervention;
  std::size_t candidate_pairs = 0;
  std::optional<double> best_correlation;
  /// One estimate per qualified pair, by descending correlation.
  std::vector<ImpactEstimate> rows;
  std::vector<CohortSummary> cohorts;
  std::vector<ExcludedPair> excluded;
};

/// Impact assessment on already-estimated rates. `cohorts` defaults to one
/// cohort "All locations" holding every target. Cohort target sets are paired
/// with every enumerated control subset and with the full control set.
/// Throws NoQualifiedPairs when no pair reaches rho_min.
ImpactReport assess_rates(const RatePanel& rates, const LocationSet& targets, const LocationSet& controls,
                          const StudyPeriod& pre, const StudyPeriod& intervention, std::vector<Cohort> cohorts,
                          const AssessmentConfig& config);

}  // namespace ugcimpact::impact
