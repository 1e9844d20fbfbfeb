#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ugcimpact/gp.hpp"
#include "ugcimpact/impact.hpp"
#include "ugcimpact/model.hpp"
#include "ugcimpact/timeseries.hpp"

namespace ugcimpact::impact {

/// Everything an end-to-end study needs: national features and rates to
/// train the disease model, per-location features to estimate local rates,
/// location roles and the two study periods.
struct StudyInputs {
  gp::FeatureMatrix national_features;
  RateSeries national_rates;
  std::map<std::string, gp::FeatureMatrix> location_features;
  LocationSet targets;
  LocationSet controls;
  StudyPeriod pre_intervention;
  StudyPeriod intervention;
  std::vector<Cohort> cohorts;
};

/// Checks period order, role disjointness, and that every location's
/// features cover both periods. Throws PeriodOrderError / InvalidArgument.
void validate(const StudyInputs& study);

/// Trains the disease model on the national series restricted to the
/// pre-intervention period.
model::RateModel train_disease_model(const StudyInputs& study, const model::ModelConfig& config, std::uint64_t seed);

/// Estimated rates for every target and control location over the span of
/// both study periods, clamped at zero.
RatePanel estimate_rates(const StudyInputs& study, const model::RateModel& f);

/// Estimate rates with f, then run the pair sweep.
ImpactReport assess(const StudyInputs& study, const model::RateModel& f, const AssessmentConfig& config);

/// Train f on the pre-intervention period first.
ImpactReport assess(const StudyInputs& study, const model::ModelConfig& model_config, const AssessmentConfig& config);

}  // namespace ugcimpact::impact
