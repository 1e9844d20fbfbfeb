// ugcimpact: simulate | train | assess | report

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ugcimpact/error.hpp"
#include "ugcimpact/study.hpp"

namespace {

using ugcimpact::study::StudyConfig;

int with_config(const std::string& path, const ugcimpact::study::Overrides& overrides,
                const std::function<int(const StudyConfig&)>& run) {
  StudyConfig config;
  try {
    config = ugcimpact::study::load_config(path, overrides);
  } catch (const ugcimpact::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ugcimpact::study::kConfigError;
  }
  return run(config);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disease-rate estimation from term frequencies and intervention impact assessment"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool compare = false;
  bool train = false;
  std::string report_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config,-c", config_path, "Study config (YAML)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--out-dir", out_dir, "Override the config output directory");
  };
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset and its ground truth");
  add_common(simulate);
  auto* train_cmd = app.add_subcommand("train", "Fit the disease-rate model and report blocked CV metrics");
  add_common(train_cmd);
  train_cmd->add_flag("--compare", compare, "Cross-validate gp, ridge and elastic_net side by side");
  auto* assess = app.add_subcommand("assess", "Estimate intervention impact");
  add_common(assess);
  assess->add_flag("--train", train, "Train the model first instead of reading model.json");
  auto* report = app.add_subcommand("report", "Print a report document");
  report->add_option("report", report_path, "Report JSON (default: <out_dir>/report.json of --config)");
  report->add_option("--config,-c", config_path, "Study config used to locate the report");
  report->add_option("--out-dir", out_dir, "Directory holding report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ugcimpact::study::kConfigError;
  }

  ugcimpact::study::Overrides overrides;
  overrides.seed = seed;
  if (out_dir) overrides.out_dir = *out_dir;

  if (*simulate) {
    return with_config(config_path, overrides,
                       [](const StudyConfig& c) { return ugcimpact::study::cmd_simulate(c, std::cout, std::cerr); });
  }
  if (*train_cmd) {
    return with_config(config_path, overrides, [&](const StudyConfig& c) {
      return ugcimpact::study::cmd_train(c, {compare}, std::cout, std::cerr);
    });
  }
  if (*assess) {
    return with_config(config_path, overrides, [&](const StudyConfig& c) {
      return ugcimpact::study::cmd_assess(c, {train}, std::cout, std::cerr);
    });
  }
  if (report_path.empty()) {
    if (out_dir) {
      report_path = (std::filesystem::path(*out_dir) / "report.json").string();
    } else if (!config_path.empty()) {
      return with_config(config_path, overrides, [](const StudyConfig& c) {
        return ugcimpact::study::cmd_report(c.report_path(), std::cout, std::cerr);
      });
    } else {
      std::cerr << "error: report needs a report path, --out-dir or --config\n";
      return ugcimpact::study::kReportError;
    }
  }
  return ugcimpact::study::cmd_report(report_path, std::cout, std::cerr);
}
