#pragma once

// Declarative study configuration and the four batch commands built on it.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ugcimpact/assess.hpp"
#include "ugcimpact/impact.hpp"
#include "ugcimpact/model.hpp"
#include "ugcimpact/synthetic.hpp"

namespace ugcimpact::study {

inline constexpr std::string_view kStudySchema = "ugcimpact.study/v1";

/// Exit codes by failure class.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kTrainingError = 3,
  kAssessmentError = 4,
  kReportError = 5,
};

struct DataPaths {
  /// Empty paths default to the files `simulate` writes into out_dir.
  std::filesystem::path rates;
  std::filesystem::path features;
  std::filesystem::path clusters;
  std::string national = "national";
  int step_days = 7;
};

struct SimulationConfig {
  synthetic::EpidemicConfig epidemic;
  synthetic::LinkConfig link;
  double ugc_noise = 0.1;
  double theta_true = 0.0;
  std::size_t intervention_weeks = 20;
};

struct ReportConfig {
  std::string phase = "A";
  std::string source = "synthetic";
  /// Highest-correlation pairs written to the plot data besides cohort rows.
  std::size_t plot_pairs = 10;
};

struct StudyConfig {
  std::filesystem::path path;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  DataPaths data;
  std::vector<std::string> targets;
  std::vector<std::string> controls;
  std::vector<impact::Cohort> cohorts;
  std::optional<StudyPeriod> pre_intervention;
  std::optional<StudyPeriod> intervention;
  model::ModelConfig model;
  impact::AssessmentConfig assessment;
  ReportConfig report;
  std::optional<SimulationConfig> simulate;

  std::filesystem::path rates_path() const;
  std::filesystem::path features_path() const;
  std::optional<std::filesystem::path> clusters_path() const;
  std::filesystem::path model_path() const { return out_dir / "model.json"; }
  std::filesystem::path report_path() const { return out_dir / "report.json"; }
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
};

/// Parses and validates a YAML study config. Relative paths resolve against
/// the config's directory. Errors are ParseError / InvalidArgument with a
/// `file:line:` prefix.
StudyConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});
StudyConfig parse_config(std::string_view yaml, const std::filesystem::path& origin, const Overrides& overrides = {});

/// Everything a simulate run produces, in memory.
struct SyntheticStudy {
  synthetic::Epidemic epidemic;
  synthetic::Vocabulary vocabulary;
  std::map<std::string, gp::FeatureMatrix> features;
  RateSeries national;
  StudyPeriod pre_intervention;
  StudyPeriod intervention;
};

SyntheticStudy simulate(const StudyConfig& config);

/// StudyInputs over a simulated dataset, as load_inputs would read it back.
impact::StudyInputs inputs_from(const StudyConfig& config, const SyntheticStudy& study);

/// Assembles StudyInputs from the configured files.
impact::StudyInputs load_inputs(const StudyConfig& config);

struct TrainOptions {
  bool compare = false;
};

struct AssessOptions {
  bool train = false;
};

int cmd_simulate(const StudyConfig& config, std::ostream& out, std::ostream& err);
int cmd_train(const StudyConfig& config, const TrainOptions& options, std::ostream& out, std::ostream& err);
int cmd_assess(const StudyConfig& config, const AssessOptions& options, std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& report, std::ostream& out, std::ostream& err);

/// Prints the cohort table and the per-pair appendix of a report document.
void render_report(const nlohmann::json& report, std::ostream& out);

}  // namespace ugcimpact::study
