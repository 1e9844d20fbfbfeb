#include "ugcimpact/assess.hpp"

#include "ugcimpact/error.hpp"

namespace ugcimpact::impact {

void validate(const StudyInputs& study) {
  validate_study_periods(study.pre_intervention, study.intervention);
  validate_disjoint(study.targets, study.controls);
  const DateRange span{study.pre_intervention.range.begin, study.intervention.range.end};
  for (const auto* set : {&study.targets, &study.controls}) {
    for (const auto& loc : set->members) {
      auto it = study.location_features.find(loc);
      if (it == study.location_features.end()) {
        throw Error(ErrorCode::InvalidArgument, "no features for location '" + loc + "'");
      }
      const DateIndex& idx = it->second.index;
      if (idx.start > span.begin || idx.end() < span.end) {
        throw Error(ErrorCode::InvalidArgument, "features for '" + loc + "' do not cover both study periods");
      }
    }
  }
  const DateIndex& nat = study.national_features.index;
  if (!(nat == study.national_rates.index())) {
    throw Error(ErrorCode::NonAlignable, "national features and rates cover different dates");
  }
}

model::RateModel train_disease_model(const StudyInputs& study, const model::ModelConfig& config, std::uint64_t seed) {
  const auto x = study.national_features.slice(study.pre_intervention.range);
  const auto y = slice(study.national_rates, study.pre_intervention.range);
  return model::train(x, y, config, seed);
}

RatePanel estimate_rates(const StudyInputs& study, const model::RateModel& f) {
  const DateRange span{study.pre_intervention.range.begin, study.intervention.range.end};
  RatePanel panel;
  bool first = true;
  for (const auto* set : {&study.targets, &study.controls}) {
    for (const auto& loc : set->members) {
      const auto x = study.location_features.at(loc).slice(span);
      if (first) {
        panel.index = x.index;
        first = false;
      } else if (!(x.index == panel.index)) {
        throw Error(ErrorCode::NonAlignable, "location '" + loc + "' features do not share the study calendar");
      }
      panel.series.emplace(loc, f.estimate(x));
    }
  }
  return panel;
}

ImpactReport assess(const StudyInputs& study, const model::RateModel& f, const AssessmentConfig& config) {
  validate(study);
  config.validate();
  return assess_rates(estimate_rates(study, f), study.targets, study.controls, study.pre_intervention,
                      study.intervention, study.cohorts, config);
}

ImpactReport assess(const StudyInputs& study, const model::ModelConfig& model_config, const AssessmentConfig& config) {
  validate(study);
  config.validate();
  return assess(study, train_disease_model(study, model_config, config.seed), config);
}

}  // namespace ugcimpact::impact
