#include "ugcimpact/impact.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ugcimpact/error.hpp"
#include "ugcimpact/parallel.hpp"
#include "ugcimpact/random.hpp"

namespace ugcimpact::impact {

void AssessmentConfig::validate() const {
  if (!(rho_min > 0.0 && rho_min <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rho_min must lie in (0, 1]");
  if (max_subset_size < 1) throw Error(ErrorCode::InvalidArgument, "max_subset_size must be at least 1");
  if (bootstrap_replicates < 100) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least 100 replicates");
  if (pair_cap < 1) throw Error(ErrorCode::InvalidArgument, "pair_cap must be at least 1");
  if (!(eps_div >= 0.0)) throw Error(ErrorCode::InvalidArgument, "eps_div must be non-negative");
  if (min_projection_length < 3) throw Error(ErrorCode::InvalidArgument, "min_projection_length must be at least 3");
  for (const auto& [loc, w] : population) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::InvalidArgument, "population weight for '" + loc + "' must be positive");
    }
  }
}

// ---------------------------------------------------------------------------
// Enumeration and screening

std::size_t count_subsets(std::size_t n, std::size_t max_size) {
  constexpr std::size_t kSaturated = std::numeric_limits<std::size_t>::max();
  std::size_t total = 0;
  std::size_t binom = 1;  // C(n, 0)
  for (std::size_t k = 1; k <= std::min(n, max_size); ++k) {
    // C(n, k) = C(n, k - 1) * (n - k + 1) / k, exact at every step.
    const std::size_t num = n - k + 1;
    if (binom > kSaturated / num) return kSaturated;
    binom = binom * num / k;
    if (total > kSaturated - binom) return kSaturated;
    total += binom;
  }
  return total;
}

std::vector<std::vector<std::string>> enumerate_subsets(const std::vector<std::string>& members, std::size_t max_size) {
  std::vector<std::vector<std::string>> out;
  const std::size_t n = members.size();
  for (std::size_t k = 1; k <= std::min(n, max_size); ++k) {
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      std::vector<std::string> subset;
      subset.reserve(k);
      for (std::size_t i : idx) subset.push_back(members[i]);
      out.push_back(std::move(subset));
      // Next combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return out;
}

std::vector<SubsetPair> enumerate_pairs(const LocationSet& targets, const LocationSet& controls,
                                        const AssessmentConfig& config) {
  validate_disjoint(targets, controls);
  const std::size_t nt = count_subsets(targets.members.size(), config.max_subset_size);
  const std::size_t nc = count_subsets(controls.members.size(), config.max_subset_size);
  if (nt != 0 && nc > config.pair_cap / nt) {
    std::ostringstream msg;
    msg << nt << " target subsets x " << nc << " control subsets exceeds the pair cap of " << config.pair_cap;
    throw Error(ErrorCode::CombinatorialLimit, msg.str());
  }
  const auto ts = enumerate_subsets(targets.members, config.max_subset_size);
  const auto cs = enumerate_subsets(controls.members, config.max_subset_size);
  std::vector<SubsetPair> pairs;
  pairs.reserve(ts.size() * cs.size());
  for (const auto& t : ts) {
    for (const auto& c : cs) {
      SubsetPair p;
      p.targets = t;
      p.controls = c;
      p.canonical_index = pairs.size();
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

std::vector<double> aggregate(const RatePanel& rates, const std::vector<std::string>& subset, const AssessmentConfig& config) {
  if (subset.empty()) throw Error(ErrorCode::InvalidArgument, "cannot aggregate an empty location subset");
  std::vector<double> out(rates.index.count, 0.0);
  double total_weight = 0.0;
  for (const auto& loc : subset) {
    double w = 1.0;
    if (config.aggregation == Aggregation::population_weighted) {
      auto it = config.population.find(loc);
      if (it == config.population.end()) {
        throw Error(ErrorCode::InvalidArgument, "no population weight for location '" + loc + "'");
      }
      w = it->second;
    }
    const auto& s = rates.at(loc);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * s[i];
    total_weight += w;
  }
  for (double& v : out) v /= total_weight;
  return out;
}

namespace {

std::string describe(const std::vector<std::string>& subset) {
  std::string s = "{";
  for (std::size_t i = 0; i < subset.size(); ++i) s += (i ? ", " : "") + subset[i];
  return s + "}";
}

class AggregateCache {
 public:
  AggregateCache(const RatePanel& panel, const AssessmentConfig& config) : panel_(panel), config_(config) {}

  const std::vector<double>& get(const std::vector<std::string>& subset) {
    auto it = cache_.find(subset);
    if (it == cache_.end()) it = cache_.emplace(subset, aggregate(panel_, subset, config_)).first;
    return it->second;
  }

 private:
  const RatePanel& panel_;
  const AssessmentConfig& config_;
  std::map<std::vector<std::string>, std::vector<double>> cache_;
};

}  // namespace

ScreenResult screen(std::vector<SubsetPair> pairs, const RatePanel& pre_rates, const AssessmentConfig& config) {
  ScreenResult out;
  AggregateCache cache(pre_rates, config);
  for (auto& p : pairs) {
    try {
      p.correlation = pearson(cache.get(p.targets), cache.get(p.controls));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateInput) throw;
      out.dropped.push_back({p, e.what()});
      continue;
    }
    if (!out.best_correlation || p.correlation > *out.best_correlation) out.best_correlation = p.correlation;
    if (p.correlation >= config.rho_min) out.qualified.push_back(std::move(p));
  }
  std::stable_sort(out.qualified.begin(), out.qualified.end(), [](const SubsetPair& a, const SubsetPair& b) {
    if (a.correlation != b.correlation) return a.correlation > b.correlation;
    return a.canonical_index < b.canonical_index;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Projection and impact statistic

namespace {

struct Ols {
  double slope;
  double intercept;
};

// Returns false for a constant control series.
bool ols(std::span<const double> x, std::span<const double> y, Ols& out) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    sxx += dx * dx;
    sxy += dx * (y[i] - my);
  }
  if (!(sxx > 1e-24 * n * std::max(1.0, mx * mx))) return false;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  return true;
}

}  // namespace

LinearProjector fit_projection(std::span<const double> control, std::span<const double> target, std::size_t min_length) {
  if (control.size() != target.size()) {
    throw Error(ErrorCode::DimensionMismatch, "projection: control and target lengths differ");
  }
  if (control.size() < min_length) {
    throw Error(ErrorCode::InvalidArgument, "projection needs at least " + std::to_string(min_length) +
                                                " pre-intervention observations, got " + std::to_string(control.size()));
  }
  Ols fit{};
  if (!ols(control, target, fit)) throw Error(ErrorCode::DegenerateInput, "projection: control series is constant");

  LinearProjector h;
  h.slope = fit.slope;
  h.intercept = fit.intercept;
  h.residuals.resize(control.size());
  const double my = mean(target);
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < control.size(); ++i) {
    h.residuals[i] = target[i] - h.apply(control[i]);
    ss_res += h.residuals[i] * h.residuals[i];
    ss_tot += (target[i] - my) * (target[i] - my);
  }
  h.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  h.residual_se = control.size() > 2 ? std::sqrt(ss_res / static_cast<double>(control.size() - 2)) : 0.0;
  return h;
}

std::vector<double> project(const LinearProjector& h, std::span<const double> control) {
  if (control.empty()) throw Error(ErrorCode::InvalidArgument, "projection of an empty control series");
  std::vector<double> out(control.size());
  for (std::size_t i = 0; i < control.size(); ++i) out[i] = std::max(0.0, h.apply(control[i]));
  return out;
}

RateSeries project(const LinearProjector& h, const RateSeries& control, const std::string& location) {
  return RateSeries(location, control.index(), project(h, control.values()));
}

double impact_theta(std::span<const double> actual, std::span<const double> counterfactual, double eps_div) {
  if (actual.size() != counterfactual.size()) {
    throw Error(ErrorCode::DimensionMismatch, "impact: actual and counterfactual lengths differ");
  }
  const double mc = mean(counterfactual);
  if (mc <= eps_div) {
    throw Error(ErrorCode::CounterfactualNearZero, "counterfactual mean rate is not above " + std::to_string(eps_div));
  }
  return 100.0 * (mean(actual) - mc) / mc;
}

// ---------------------------------------------------------------------------
// Bootstrap

DistributionCheck check_distribution(std::span<const double> samples) {
  if (samples.size() < 100) throw Error(ErrorCode::InvalidArgument, "distribution check needs at least 100 samples");
  DistributionCheck out;
  const double n = static_cast<double>(samples.size());
  const double mu = mean(samples);
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi - lo <= 1e-9 * std::max(1.0, std::abs(mu))) {
    out.degenerate = out.symmetric = out.unimodal = out.ok = true;
    out.modes = 1;
    return out;
  }

  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : samples) {
    const double d = v - mu;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  out.skewness = m3 / std::pow(m2, 1.5);
  out.symmetric = std::abs(out.skewness) <= 0.5;

  const auto bins = static_cast<std::size_t>(std::ceil(std::sqrt(n)));
  std::vector<double> hist(bins, 0.0);
  for (double v : samples) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    hist[std::min(b, bins - 1)] += 1.0;
  }
  std::vector<double> smooth(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    const double left = i > 0 ? hist[i - 1] : 0.0;
    const double right = i + 1 < bins ? hist[i + 1] : 0.0;
    smooth[i] = (left + hist[i] + right) / 3.0;
  }

  // A smoothed bin count has standard error about sqrt(count / 3); a rise or
  // fall counts only when it exceeds two of those.
  auto threshold = [](double v) { return 2.0 * std::sqrt(std::max(v, 1.0) / 3.0); };
  bool rising = true;
  double peak = smooth[0];
  double trough = smooth[0];
  for (std::size_t i = 1; i < bins; ++i) {
    const double v = smooth[i];
    if (rising) {
      if (v > peak) {
        peak = v;
      } else if (peak - v >= threshold(peak)) {
        ++out.modes;
        rising = false;
        trough = v;
      }
    } else {
      if (v < trough) {
        trough = v;
      } else if (v - trough >= threshold(v)) {
        rising = true;
        peak = v;
      }
    }
  }
  if (rising) ++out.modes;
  out.unimodal = out.modes == 1;
  out.ok = out.symmetric && out.unimodal;
  return out;
}

const char* to_string(Significance s) {
  switch (s) {
    case Significance::significant: return "significant";
    case Significance::not_significant: return "not_significant";
    case Significance::not_assessable: return "not_assessable";
  }
  return "unknown";
}

double quantile_type1(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
  const double pos = std::ceil(p * static_cast<double>(sorted.size()) - 1e-9);
  const auto rank = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(sorted.size())));
  return sorted[rank - 1];
}

ImpactEstimate bootstrap(const SubsetPair& pair, const PairSeries& series, const LinearProjector& h,
                         const AssessmentConfig& config, std::uint64_t seed) {
  if (config.bootstrap_replicates < 100) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least 100 replicates");
  if (series.pre_control.size() != series.pre_target.size() ||
      series.intervention_control.size() != series.intervention_target.size()) {
    throw Error(ErrorCode::DimensionMismatch, "bootstrap: control and target lengths differ");
  }
  if (h.residuals.size() != series.pre_control.size()) {
    throw Error(ErrorCode::DimensionMismatch, "bootstrap: projector was not fit on these pre-intervention series");
  }

  ImpactEstimate est;
  est.pair = pair;
  est.projector = h;
  est.counterfactual = project(h, series.intervention_control);
  est.theta = impact_theta(series.intervention_target, est.counterfactual, config.eps_div);

  const std::size_t n = series.pre_control.size();
  const std::size_t b_total = config.bootstrap_replicates;
  const double actual_mean = mean(series.intervention_target);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  est.bootstrap_samples.reserve(b_total);

  const std::size_t max_attempts = 10 * b_total;
  while (est.bootstrap_samples.size() < b_total) {
    if (est.bootstrap_attempts >= max_attempts) {
      throw Error(ErrorCode::BootstrapFailed, "only " + std::to_string(est.bootstrap_samples.size()) + " of " +
                                                  std::to_string(b_total) + " replicates succeeded in " +
                                                  std::to_string(max_attempts) + " attempts");
    }
    ++est.bootstrap_attempts;
    Ols hb{h.slope, h.intercept};
    if (config.resample_inputs) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = pick(rng);
        xs[i] = series.pre_control[j];
        ys[i] = series.pre_target[j];
      }
      if (!ols(xs, ys, hb)) continue;
    }
    double cf_sum = 0.0;
    for (double c : series.intervention_control) {
      double v = hb.slope * c + hb.intercept;
      if (config.resample_residuals) v += h.residuals[pick(rng)];
      cf_sum += std::max(0.0, v);
    }
    const double cf_mean = cf_sum / static_cast<double>(series.intervention_control.size());
    if (!(cf_mean > config.eps_div)) continue;
    est.bootstrap_samples.push_back(100.0 * (actual_mean - cf_mean) / cf_mean);
  }

  const double bm = mean(est.bootstrap_samples);
  double ss = 0.0;
  for (double v : est.bootstrap_samples) ss += (v - bm) * (v - bm);
  est.bootstrap_sd = std::sqrt(ss / static_cast<double>(b_total - 1));

  std::vector<double> sorted = est.bootstrap_samples;
  std::sort(sorted.begin(), sorted.end());
  est.ci_low = quantile_type1(sorted, 0.025);
  est.ci_high = quantile_type1(sorted, 0.975);

  est.distribution = check_distribution(est.bootstrap_samples);
  if (!est.distribution.ok) {
    est.status = Significance::not_assessable;
    est.significant = false;
  } else {
    est.significant = std::abs(est.theta) > 2.0 * est.bootstrap_sd;
    est.status = est.significant ? Significance::significant : Significance::not_significant;
  }
  return est;
}

// ---------------------------------------------------------------------------
// Assessment

ImpactReport assess_rates(const RatePanel& rates, const LocationSet& targets, const LocationSet& controls,
                          const StudyPeriod& pre, const StudyPeriod& intervention, std::vector<Cohort> cohorts,
                          const AssessmentConfig& config) {
  config.validate();
  validate_study_periods(pre, intervention);
  validate_disjoint(targets, controls);
  for (const auto* set : {&targets, &controls}) {
    for (const auto& loc : set->members) rates.at(loc);
  }
  if (cohorts.empty()) cohorts.push_back({"All locations", targets.members});
  for (auto& c : cohorts) {
    std::sort(c.members.begin(), c.members.end());
    c.members.erase(std::unique(c.members.begin(), c.members.end()), c.members.end());
    if (c.members.empty()) throw Error(ErrorCode::InvalidArgument, "cohort '" + c.name + "' has no members");
    for (const auto& m : c.members) {
      if (!std::binary_search(targets.members.begin(), targets.members.end(), m)) {
        throw Error(ErrorCode::InvalidArgument, "cohort '" + c.name + "' member '" + m + "' is not a target location");
      }
    }
  }

  const RatePanel pre_rates = rates.slice(pre.range);
  const RatePanel int_rates = rates.slice(intervention.range);
  if (pre_rates.index.end() > int_rates.index.start) {
    throw Error(ErrorCode::PeriodOrderError, "pre-intervention observations overlap the intervention period");
  }

  std::vector<SubsetPair> pairs = enumerate_pairs(targets, controls, config);

  // Cohort target sets against every enumerated control subset and the full control set.
  auto control_subsets = enumerate_subsets(controls.members, config.max_subset_size);
  if (controls.members.size() > config.max_subset_size) control_subsets.push_back(controls.members);
  std::set<std::pair<std::vector<std::string>, std::vector<std::string>>> added;
  for (const auto& cohort : cohorts) {
    for (const auto& cs : control_subsets) {
      const bool enumerated = cohort.members.size() <= config.max_subset_size && cs.size() <= config.max_subset_size;
      if (enumerated || !added.emplace(cohort.members, cs).second) continue;
      if (pairs.size() >= config.pair_cap) {
        throw Error(ErrorCode::CombinatorialLimit, "cohort pairs exceed the pair cap of " + std::to_string(config.pair_cap));
      }
      SubsetPair p;
      p.targets = cohort.members;
      p.controls = cs;
      p.canonical_index = pairs.size();
      pairs.push_back(std::move(p));
    }
  }

  ImpactReport report;
  report.config = config;
  report.pre_intervention = pre.range;
  report.intervention = intervention.range;
  report.candidate_pairs = pairs.size();

  ScreenResult screened = screen(std::move(pairs), pre_rates, config);
  report.best_correlation = screened.best_correlation;
  for (auto& d : screened.dropped) report.excluded.push_back({std::move(d.pair), std::move(d.reason)});
  if (screened.qualified.empty()) {
    std::ostringstream msg;
    msg << "no target/control pair reaches rho_min = " << config.rho_min;
    if (screened.best_correlation) msg << " (best observed correlation " << *screened.best_correlation << ")";
    throw Error(ErrorCode::NoQualifiedPairs, msg.str());
  }

  const auto& qualified = screened.qualified;
  std::vector<std::optional<ImpactEstimate>> estimates(qualified.size());
  std::vector<std::string> failures(qualified.size());
  AggregateCache pre_cache(pre_rates, config);
  AggregateCache int_cache(int_rates, config);
  std::vector<PairSeries> inputs(qualified.size());
  for (std::size_t i = 0; i < qualified.size(); ++i) {
    inputs[i] = {pre_cache.get(qualified[i].controls), pre_cache.get(qualified[i].targets),
                 int_cache.get(qualified[i].controls), int_cache.get(qualified[i].targets)};
  }
  parallel_for(qualified.size(), config.threads, [&](std::size_t i) {
    try {
      const auto h = fit_projection(inputs[i].pre_control, inputs[i].pre_target, config.min_projection_length);
      estimates[i] = bootstrap(qualified[i], inputs[i], h, config, derive_seed(config.seed, {qualified[i].canonical_index}));
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });

  for (std::size_t i = 0; i < qualified.size(); ++i) {
    if (estimates[i]) {
      report.rows.push_back(std::move(*estimates[i]));
    } else {
      report.excluded.push_back({qualified[i], failures[i]});
    }
  }

  for (auto& cohort : cohorts) {
    CohortSummary summary;
    summary.cohort = std::move(cohort);
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      if (report.rows[i].pair.targets == summary.cohort.members) {
        summary.row = i;  // rows are sorted by descending correlation
        break;
      }
    }
    if (!summary.row) summary.note = "no qualified control subset for " + describe(summary.cohort.members);
    report.cohorts.push_back(std::move(summary));
  }
  return report;
}

}  // namespace ugcimpact::impact
