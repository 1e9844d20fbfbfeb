#pragma once

// Synthetic ground truth: seasonal multi-location epidemics with tunable
// cross-location coupling, noisy term frequencies derived from rates, and a
// known multiplicative intervention effect.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ugcimpact/gp.hpp"
#include "ugcimpact/timeseries.hpp"

namespace ugcimpact::synthetic {

/// Gaussian bump: amplitude * exp(-(t - center)^2 / (2 width^2)), t in weeks.
struct SeasonalPeak {
  double center = 0.0;
  double width = 1.0;
  double amplitude = 1.0;
};

/// One peak per 52-week season, centred 10 weeks into it.
std::vector<SeasonalPeak> default_peaks(std::size_t weeks);

struct EpidemicConfig {
  std::vector<std::string> targets;
  std::vector<std::string> controls;
  Date start = Date{std::chrono::year{2011} / std::chrono::January / 3};
  int step_days = 7;
  std::size_t weeks = 124;
  double baseline = 3.0;
  /// Empty means default_peaks(weeks).
  std::vector<SeasonalPeak> peaks;
  /// Weight of the common curve; 1 - weight goes to a location-specific curve.
  double shared_factor_weight = 0.9;
  /// Gaussian observation noise on each rate.
  double noise_sd = 3.5;
  /// Location-specific curves perturb each peak: centre by up to
  /// +-center_jitter weeks, width and amplitude by up to the given fractions.
  double center_jitter = 2.0;
  double width_jitter = 0.2;
  double amplitude_jitter = 0.25;
  double baseline_jitter = 0.25;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// Location names "<prefix>_01", "<prefix>_02", ...
std::vector<std::string> location_names(const std::string& prefix, std::size_t count);

struct GroundTruth {
  /// Noise-free rates per location.
  std::map<std::string, std::vector<double>> clean;
  double theta_true = 0.0;
  std::optional<DateRange> intervention;
  std::vector<std::string> targets;
  std::vector<std::string> controls;
};

struct Epidemic {
  /// Observed (noisy) rates per location.
  RatePanel rates;
  GroundTruth truth;
};

Epidemic generate_epidemic(const EpidemicConfig& config);

/// Multiplies target series by (1 + theta_true / 100) inside `intervention`.
/// Other locations and dates are left bit-identical. Requires theta_true > -100.
Epidemic inject_intervention(Epidemic epidemic, const std::vector<std::string>& targets, const DateRange& intervention,
                             double theta_true);

/// Unweighted mean over all locations, as a series named "national".
RateSeries national_rates(const RatePanel& rates);

struct LinkConfig {
  std::size_t terms = 24;
  std::size_t clusters = 4;
  /// Fraction of terms with no rate signal.
  double distractor_fraction = 0.2;
  double slope_low = 0.03;
  double slope_high = 0.1;
  double offset_low = -2.0;
  double offset_high = 0.0;
  bool softplus = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Term layout and per-term link coefficients, shared by every location.
struct Vocabulary {
  std::vector<std::string> terms;
  gp::ClusterPartition clusters{{}, 0};
  std::vector<double> slope;
  std::vector<double> offset;
  bool softplus = true;

  std::size_t size() const { return terms.size(); }
};

/// Terms in cluster z carry z + 1 whitespace-separated tokens.
Vocabulary make_vocabulary(const LinkConfig& config);

/// A single term equal to the rate itself.
Vocabulary identity_vocabulary();

/// frequency = link(slope * rate + offset) + noise, clamped at zero, where
/// link is softplus or the identity and the noise sd is
/// noise_level * sqrt(noise-free frequency).
gp::FeatureMatrix generate_ugc(const RateSeries& rates, const Vocabulary& vocabulary, double noise_level,
                               std::uint64_t seed);

}  // namespace ugcimpact::synthetic
