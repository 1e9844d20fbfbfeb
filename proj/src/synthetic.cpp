#include "ugcimpact/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "ugcimpact/error.hpp"
#include "ugcimpact/random.hpp"

namespace ugcimpact::synthetic {
namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, field + ": " + what);
}

double curve(double t, double baseline, const std::vector<SeasonalPeak>& peaks) {
  double v = baseline;
  for (const auto& p : peaks) {
    const double d = (t - p.center) / p.width;
    v += p.amplitude * std::exp(-0.5 * d * d);
  }
  return v;
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

std::vector<SeasonalPeak> default_peaks(std::size_t weeks) {
  static constexpr double kWidths[] = {4.0, 5.0, 4.5};
  static constexpr double kAmplitudes[] = {40.0, 55.0, 45.0};
  std::vector<SeasonalPeak> peaks;
  for (std::size_t s = 0; 52 * s < weeks; ++s) {
    peaks.push_back({10.0 + 52.0 * static_cast<double>(s), kWidths[s % 3], kAmplitudes[s % 3]});
  }
  return peaks;
}

void EpidemicConfig::validate() const {
  require(weeks > 0, "weeks", "must be positive");
  require(step_days > 0, "step_days", "must be positive");
  require(!targets.empty() || !controls.empty(), "locations", "need at least one location");
  require(shared_factor_weight >= 0.0 && shared_factor_weight <= 1.0, "shared_factor_weight", "must lie in [0, 1]");
  require(noise_sd >= 0.0 && std::isfinite(noise_sd), "noise_sd", "must be non-negative");
  require(baseline >= 0.0, "baseline", "must be non-negative");
  require(center_jitter >= 0.0, "center_jitter", "must be non-negative");
  require(width_jitter >= 0.0 && width_jitter < 1.0, "width_jitter", "must lie in [0, 1)");
  require(amplitude_jitter >= 0.0 && amplitude_jitter < 1.0, "amplitude_jitter", "must lie in [0, 1)");
  require(baseline_jitter >= 0.0 && baseline_jitter < 1.0, "baseline_jitter", "must lie in [0, 1)");
  for (const auto& p : peaks) {
    require(p.amplitude > 0.0, "peaks.amplitude", "must be positive");
    require(p.width > 0.0, "peaks.width", "must be positive");
  }
  std::set<std::string> names;
  for (const auto* list : {&targets, &controls}) {
    for (const auto& n : *list) require(names.insert(n).second, "locations", "duplicate location '" + n + "'");
  }
}

std::vector<std::string> location_names(const std::string& prefix, std::size_t count) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= count; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02zu", i);
    out.push_back(prefix + "_" + buf);
  }
  return out;
}

Epidemic generate_epidemic(const EpidemicConfig& config) {
  config.validate();
  const std::vector<SeasonalPeak> peaks = config.peaks.empty() ? default_peaks(config.weeks) : config.peaks;
  const double w = config.shared_factor_weight;

  std::vector<double> common(config.weeks);
  for (std::size_t t = 0; t < config.weeks; ++t) common[t] = curve(static_cast<double>(t), config.baseline, peaks);

  Epidemic out;
  out.rates.index = DateIndex(config.start, config.step_days, config.weeks);
  out.truth.targets = config.targets;
  out.truth.controls = config.controls;

  std::vector<std::string> all = config.targets;
  all.insert(all.end(), config.controls.begin(), config.controls.end());
  for (std::size_t l = 0; l < all.size(); ++l) {
    std::mt19937_64 rng(derive_seed(config.seed, {l}));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<SeasonalPeak> own;
    for (const auto& p : peaks) {
      own.push_back({p.center + config.center_jitter * u(rng), p.width * (1.0 + config.width_jitter * u(rng)),
                     p.amplitude * (1.0 + config.amplitude_jitter * u(rng))});
    }
    const double own_baseline = config.baseline * (1.0 + config.baseline_jitter * u(rng));

    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> clean(config.weeks);
    std::vector<double> observed(config.weeks);
    for (std::size_t t = 0; t < config.weeks; ++t) {
      clean[t] = w * common[t] + (1.0 - w) * curve(static_cast<double>(t), own_baseline, own);
      observed[t] = std::max(0.0, clean[t] + config.noise_sd * noise(rng));
    }
    out.truth.clean.emplace(all[l], std::move(clean));
    out.rates.series.emplace(all[l], std::move(observed));
  }
  return out;
}

Epidemic inject_intervention(Epidemic epidemic, const std::vector<std::string>& targets, const DateRange& intervention,
                             double theta_true) {
  if (!(theta_true > -100.0) || !std::isfinite(theta_true)) {
    throw Error(ErrorCode::InvalidArgument, "theta_true must exceed -100");
  }
  const double factor = 1.0 + theta_true / 100.0;
  const DateIndex& idx = epidemic.rates.index;
  for (const auto& loc : targets) {
    auto& observed = epidemic.rates.series.at(loc);
    auto& clean = epidemic.truth.clean.at(loc);
    for (std::size_t t = 0; t < idx.count; ++t) {
      if (!intervention.contains(idx.at(t))) continue;
      observed[t] *= factor;
      clean[t] *= factor;
    }
  }
  epidemic.truth.theta_true = theta_true;
  epidemic.truth.intervention = intervention;
  return epidemic;
}

RateSeries national_rates(const RatePanel& rates) {
  if (rates.series.empty()) throw Error(ErrorCode::InvalidArgument, "no locations to aggregate");
  std::vector<double> v(rates.index.count, 0.0);
  for (const auto& [loc, s] : rates.series) {
    for (std::size_t t = 0; t < v.size(); ++t) v[t] += s[t];
  }
  for (double& x : v) x /= static_cast<double>(rates.series.size());
  return RateSeries("national", rates.index, std::move(v));
}

void LinkConfig::validate() const {
  require(terms >= 1, "terms", "must be positive");
  require(clusters >= 1, "clusters", "must be positive");
  require(terms >= clusters, "terms", "need at least one term per cluster");
  require(distractor_fraction >= 0.0 && distractor_fraction <= 1.0, "distractor_fraction", "must lie in [0, 1]");
  require(slope_low <= slope_high, "slope_low", "must not exceed slope_high");
  require(offset_low <= offset_high, "offset_low", "must not exceed offset_high");
}

Vocabulary make_vocabulary(const LinkConfig& config) {
  config.validate();
  static const char* const kWords[] = {"flu",     "fever",  "cough",    "sore",   "throat", "ache",   "chills",
                                       "sneeze",  "tired",  "nose",     "head",   "cold",   "bed",    "sick",
                                       "virus",   "doctor", "tissues",  "shiver", "lemsip", "temp",   "body",
                                       "muscles", "runny",  "blocked",  "chest",  "pain",   "dizzy",  "weak"};
  constexpr std::size_t kWordCount = std::size(kWords);

  Vocabulary v;
  v.softplus = config.softplus;
  std::vector<std::vector<std::size_t>> groups(config.clusters);
  std::set<std::string> seen;
  for (std::size_t j = 0; j < config.terms; ++j) {
    const std::size_t z = j % config.clusters;  // z + 1 tokens
    std::string term;
    for (std::size_t k = 0; k <= z; ++k) {
      if (k) term += ' ';
      term += kWords[(j / config.clusters * (z + 1) + k * 7 + z) % kWordCount];
    }
    if (!seen.insert(term).second) {
      term += "_" + std::to_string(j);
      seen.insert(term);
    }
    v.terms.push_back(term);
    groups[z].push_back(j);
  }
  v.clusters = gp::ClusterPartition(std::move(groups), config.terms);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> slope(config.slope_low, config.slope_high);
  std::uniform_real_distribution<double> offset(config.offset_low, config.offset_high);
  for (std::size_t j = 0; j < config.terms; ++j) {
    v.slope.push_back(slope(rng));
    v.offset.push_back(offset(rng));
  }
  const auto distractors = static_cast<std::size_t>(std::lround(config.distractor_fraction * static_cast<double>(config.terms)));
  std::vector<std::size_t> order(config.terms);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < distractors; ++i) v.slope[order[i]] = 0.0;
  return v;
}

Vocabulary identity_vocabulary() {
  Vocabulary v;
  v.terms = {"rate"};
  v.clusters = gp::ClusterPartition::single(1);
  v.slope = {1.0};
  v.offset = {0.0};
  v.softplus = false;
  return v;
}

gp::FeatureMatrix generate_ugc(const RateSeries& rates, const Vocabulary& vocabulary, double noise_level,
                               std::uint64_t seed) {
  if (!(noise_level >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise level must be non-negative");
  if (vocabulary.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty vocabulary");
  const auto n = static_cast<Eigen::Index>(rates.size());
  const auto m = static_cast<Eigen::Index>(vocabulary.size());
  Eigen::MatrixXd x(n, m);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double r = rates.values()[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      const double lin = vocabulary.slope[jj] * r + vocabulary.offset[jj];
      const double mean = vocabulary.softplus ? softplus(lin) : std::max(0.0, lin);
      const double e = noise(rng);
      x(t, j) = std::max(0.0, mean + noise_level * std::sqrt(mean) * e);
    }
  }
  return gp::FeatureMatrix(rates.index(), vocabulary.terms, std::move(x), vocabulary.clusters);
}

}  // namespace ugcimpact::synthetic
