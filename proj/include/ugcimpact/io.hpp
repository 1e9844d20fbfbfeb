#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ugcimpact/gp.hpp"
#include "ugcimpact/impact.hpp"
#include "ugcimpact/model.hpp"
#include "ugcimpact/timeseries.hpp"

namespace ugcimpact::io {

inline constexpr std::string_view kModelSchema = "ugcimpact.model/v1";
inline constexpr std::string_view kReportSchema = "ugcimpact.report/v1";
inline constexpr std::string_view kTruthSchema = "ugcimpact.truth/v1";

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex_digest(std::uint64_t digest);

// --- term frequencies -------------------------------------------------------

/// Cluster assignment CSV `term,cluster_id`. Clusters are ordered by id
/// (numerically when every id is an integer).
std::map<std::string, std::string> read_clusters_csv(std::istream& in);
void write_clusters_csv(std::ostream& out, const std::vector<std::string>& terms, const gp::ClusterPartition& clusters);

/// Long-format features `date,term,frequency`, optionally with a `location`
/// column. Rows without a location column are filed under
/// `default_location`. Every (date, location) must carry every term and each
/// location must be gap-free on the `step_days` cadence. Term order is order
/// of first appearance. Without `clusters`, terms are clustered by token count.
std::map<std::string, gp::FeatureMatrix> read_features_csv(std::istream& in,
                                                           const std::optional<std::map<std::string, std::string>>& clusters,
                                                           const std::string& default_location = "national",
                                                           int step_days = 7);
void write_features_csv(std::ostream& out, const std::map<std::string, gp::FeatureMatrix>& features);

// --- models -----------------------------------------------------------------

/// Digest of the training data (dates, inputs, targets).
std::string training_digest(const DateIndex& index, const Eigen::MatrixXd& x, std::span<const double> y);

nlohmann::json model_to_json(const model::RateModel& model, const gp::FeatureMatrix& train_x, const RateSeries& train_y);
/// Throws SchemaMismatch on an unknown schema or a training digest mismatch.
model::RateModel model_from_json(const nlohmann::json& doc);

// --- reports ----------------------------------------------------------------

struct ReportLabels {
  std::string phase;
  std::string source;
};

nlohmann::json report_to_json(const impact::ImpactReport& report, const ReportLabels& labels);

/// Cohort rows in table form, as stored in a report document.
struct CohortRow {
  std::string name;
  std::vector<std::string> targets;
  std::vector<std::string> controls;
  bool has_estimate = false;
  double r = 0.0;
  double theta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double bootstrap_sd = 0.0;
  std::string status;
  std::string note;
};

std::vector<CohortRow> cohort_rows(const nlohmann::json& report);

/// `phase,source,target_cohort,n_control,r,theta,ci_low,ci_high,significant`;
/// significant is 1, 0 or NA (bootstrap distribution not unimodal/symmetric).
void write_cohort_csv(std::ostream& out, const nlohmann::json& report);

/// Tidy `pair_id,target_cohort,date,period,series,value` rows for the given
/// report rows: aggregate target and control estimates over both periods and
/// the projector output (fitted before, counterfactual during the intervention).
void write_plot_data(std::ostream& out, const impact::ImpactReport& report, const RatePanel& rates,
                     const std::vector<std::size_t>& rows, const std::map<std::size_t, std::string>& cohort_names = {});

}  // namespace ugcimpact::io
