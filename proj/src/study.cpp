#include "ugcimpact/study.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "ugcimpact/assess.hpp"
#include "ugcimpact/csv.hpp"
#include "ugcimpact/error.hpp"
#include "ugcimpact/io.hpp"
#include "ugcimpact/random.hpp"

namespace ugcimpact::study {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Random streams split off the study seed.
enum Stream : std::uint64_t { kEpidemicStream = 1, kVocabularyStream = 2, kUgcStream = 3, kTrainStream = 4, kAssessStream = 5 };

// --- YAML reading with line anchors ------------------------------------------

class Reader {
 public:
  explicit Reader(std::string file) : file_(std::move(file)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& field, const std::string& what) const {
    std::string where = file_;
    if (node.IsDefined() && node.Mark().line >= 0) where += ":" + std::to_string(node.Mark().line + 1);
    throw Error(ErrorCode::InvalidArgument, where + ": " + field + ": " + what);
  }

  void keys(const YAML::Node& map, const std::string& path, std::initializer_list<const char*> allowed) const {
    if (!map.IsDefined() || map.IsNull()) return;
    if (!map.IsMap()) fail(map, path.empty() ? "<root>" : path, "expected a mapping");
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        fail(kv.first, join(path, key), "unknown key");
      }
    }
  }

  template <typename T>
  T scalar(const YAML::Node& node, const std::string& field) const {
    if (!node.IsScalar()) fail(node, field, "expected a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, field, "cannot parse '" + node.Scalar() + "'");
    }
  }

  template <typename T>
  void get(const YAML::Node& parent, const char* key, const std::string& path, T& out) const {
    const YAML::Node node = parent[key];
    if (node.IsDefined() && !node.IsNull()) out = scalar<T>(node, join(path, key));
  }

  std::vector<std::string> strings(const YAML::Node& node, const std::string& field) const {
    if (!node.IsSequence()) fail(node, field, "expected a list");
    std::vector<std::string> out;
    for (const auto& item : node) out.push_back(scalar<std::string>(item, field));
    return out;
  }

  Date date(const YAML::Node& node, const std::string& field) const {
    const auto text = scalar<std::string>(node, field);
    try {
      return parse_date(text);
    } catch (const Error&) {
      fail(node, field, "expected an ISO date YYYY-MM-DD, got '" + text + "'");
    }
  }

  static std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

void check(const Reader& r, bool ok, const YAML::Node& node, const std::string& field, const std::string& what) {
  if (!ok) r.fail(node, field, what);
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

StudyPeriod read_period(const Reader& r, const YAML::Node& node, const std::string& field, PeriodKind kind) {
  r.keys(node, field, {"begin", "end"});
  if (!node["begin"] || !node["end"]) r.fail(node, field, "needs begin and end (end exclusive)");
  return {kind, {r.date(node["begin"], field + ".begin"), r.date(node["end"], field + ".end")}};
}

void read_simulation(const Reader& r, const YAML::Node& node, StudyConfig& config) {
  const std::string path = "simulate";
  r.keys(node, path,
         {"start", "weeks", "targets", "controls", "shared_factor_weight", "noise_sd", "baseline", "peaks",
          "center_jitter", "width_jitter", "amplitude_jitter", "baseline_jitter", "theta_true", "intervention_weeks",
          "ugc"});
  SimulationConfig sim;
  auto& e = sim.epidemic;
  if (node["start"]) e.start = r.date(node["start"], "simulate.start");
  long weeks = static_cast<long>(e.weeks);
  r.get(node, "weeks", path, weeks);
  check(r, weeks > 0, node["weeks"], "simulate.weeks", "must be positive");
  e.weeks = static_cast<std::size_t>(weeks);
  e.step_days = config.data.step_days;

  auto names = [&](const char* key, const char* prefix, std::size_t fallback) {
    const YAML::Node n = node[key];
    if (!n) return synthetic::location_names(prefix, fallback);
    if (n.IsSequence()) return r.strings(n, std::string("simulate.") + key);
    const long count = r.scalar<long>(n, std::string("simulate.") + key);
    check(r, count >= 1, n, std::string("simulate.") + key, "must be at least 1");
    return synthetic::location_names(prefix, static_cast<std::size_t>(count));
  };
  e.targets = names("targets", "target", 6);
  e.controls = names("controls", "control", 10);

  r.get(node, "shared_factor_weight", path, e.shared_factor_weight);
  check(r, e.shared_factor_weight >= 0.0 && e.shared_factor_weight <= 1.0, node["shared_factor_weight"],
        "simulate.shared_factor_weight", "must lie in [0, 1]");
  r.get(node, "noise_sd", path, e.noise_sd);
  check(r, e.noise_sd >= 0.0, node["noise_sd"], "simulate.noise_sd", "must be non-negative");
  r.get(node, "baseline", path, e.baseline);
  check(r, e.baseline >= 0.0, node["baseline"], "simulate.baseline", "must be non-negative");
  r.get(node, "center_jitter", path, e.center_jitter);
  r.get(node, "width_jitter", path, e.width_jitter);
  r.get(node, "amplitude_jitter", path, e.amplitude_jitter);
  r.get(node, "baseline_jitter", path, e.baseline_jitter);
  if (const YAML::Node peaks = node["peaks"]) {
    if (!peaks.IsSequence()) r.fail(peaks, "simulate.peaks", "expected a list");
    for (const auto& p : peaks) {
      r.keys(p, "simulate.peaks", {"center", "width", "amplitude"});
      synthetic::SeasonalPeak peak;
      r.get(p, "center", "simulate.peaks", peak.center);
      r.get(p, "width", "simulate.peaks", peak.width);
      r.get(p, "amplitude", "simulate.peaks", peak.amplitude);
      check(r, peak.width > 0.0, p, "simulate.peaks.width", "must be positive");
      check(r, peak.amplitude > 0.0, p, "simulate.peaks.amplitude", "must be positive");
      e.peaks.push_back(peak);
    }
  }
  r.get(node, "theta_true", path, sim.theta_true);
  check(r, std::isfinite(sim.theta_true) && sim.theta_true > -100.0, node["theta_true"], "simulate.theta_true",
        "must exceed -100");
  long iw = static_cast<long>(sim.intervention_weeks);
  r.get(node, "intervention_weeks", path, iw);
  check(r, iw >= 1 && iw < weeks, node["intervention_weeks"], "simulate.intervention_weeks",
        "must lie in [1, weeks)");
  sim.intervention_weeks = static_cast<std::size_t>(iw);

  if (const YAML::Node ugc = node["ugc"]) {
    const std::string up = "simulate.ugc";
    r.keys(ugc, up, {"terms", "clusters", "distractor_fraction", "noise", "slope", "offset", "softplus"});
    auto& l = sim.link;
    long terms = static_cast<long>(l.terms), clusters = static_cast<long>(l.clusters);
    r.get(ugc, "terms", up, terms);
    r.get(ugc, "clusters", up, clusters);
    check(r, clusters >= 1, ugc["clusters"], up + ".clusters", "must be positive");
    check(r, terms >= clusters, ugc["terms"], up + ".terms", "must be at least the number of clusters");
    l.terms = static_cast<std::size_t>(terms);
    l.clusters = static_cast<std::size_t>(clusters);
    r.get(ugc, "distractor_fraction", up, l.distractor_fraction);
    check(r, l.distractor_fraction >= 0.0 && l.distractor_fraction <= 1.0, ugc["distractor_fraction"],
          up + ".distractor_fraction", "must lie in [0, 1]");
    r.get(ugc, "noise", up, sim.ugc_noise);
    check(r, sim.ugc_noise >= 0.0, ugc["noise"], up + ".noise", "must be non-negative");
    r.get(ugc, "softplus", up, l.softplus);
    auto range = [&](const char* key, double& lo, double& hi) {
      const YAML::Node n = ugc[key];
      if (!n) return;
      if (!n.IsSequence() || n.size() != 2) r.fail(n, up + "." + key, "expected [low, high]");
      lo = r.scalar<double>(n[0], up + "." + key);
      hi = r.scalar<double>(n[1], up + "." + key);
      check(r, lo <= hi, n, up + "." + key, "low must not exceed high");
    };
    range("slope", l.slope_low, l.slope_high);
    range("offset", l.offset_low, l.offset_high);
  }
  try {
    e.validate();
    sim.link.validate();
  } catch (const Error& err) {
    r.fail(node, "simulate", err.what());
  }
  config.simulate = std::move(sim);
}

void read_model(const Reader& r, const YAML::Node& node, model::ModelConfig& m) {
  const std::string path = "model";
  r.keys(node, path,
         {"kind", "kernel", "restarts", "init_low", "init_high", "max_iterations", "folds", "standardize", "lambda",
          "mixing", "lambda_grid", "threads"});
  if (!node) return;
  auto parse_enum = [&](const char* key, auto parser, auto& out) {
    const YAML::Node n = node[key];
    if (!n) return;
    try {
      out = parser(r.scalar<std::string>(n, path + "." + key));
    } catch (const Error& err) {
      r.fail(n, path + "." + key, err.what());
    }
  };
  parse_enum("kind", model::parse_model_kind, m.kind);
  parse_enum("kernel", gp::parse_kernel_kind, m.kernel);
  r.get(node, "restarts", path, m.gp.restarts);
  check(r, m.gp.restarts >= 1, node["restarts"], "model.restarts", "must be positive");
  r.get(node, "init_low", path, m.gp.init_low);
  r.get(node, "init_high", path, m.gp.init_high);
  check(r, m.gp.init_low > 0.0 && m.gp.init_low <= m.gp.init_high, node["init_low"], "model.init_low",
        "need 0 < init_low <= init_high");
  r.get(node, "max_iterations", path, m.gp.max_iterations);
  check(r, m.gp.max_iterations >= 1, node["max_iterations"], "model.max_iterations", "must be positive");
  r.get(node, "standardize", path, m.gp.standardize);
  r.get(node, "threads", path, m.gp.threads);
  long folds = static_cast<long>(m.folds);
  r.get(node, "folds", path, folds);
  check(r, folds >= 2, node["folds"], "model.folds", "must be at least 2");
  m.folds = static_cast<std::size_t>(folds);
  long grid = static_cast<long>(m.lambda_grid);
  r.get(node, "lambda_grid", path, grid);
  check(r, grid >= 1, node["lambda_grid"], "model.lambda_grid", "must be positive");
  m.lambda_grid = static_cast<std::size_t>(grid);
  if (node["lambda"] && !node["lambda"].IsNull()) {
    baselines::Regularization reg;
    reg.lambda = r.scalar<double>(node["lambda"], "model.lambda");
    check(r, reg.lambda >= 0.0, node["lambda"], "model.lambda", "must be non-negative");
    reg.mixing = m.kind == model::ModelKind::ridge ? 0.0 : 1.0;
    r.get(node, "mixing", path, reg.mixing);
    check(r, reg.mixing >= 0.0 && reg.mixing <= 1.0, node["mixing"], "model.mixing", "must lie in [0, 1]");
    check(r, m.kind != model::ModelKind::ridge || reg.mixing == 0.0, node["mixing"], "model.mixing",
          "ridge requires mixing 0");
    m.regularization = reg;
  } else if (node["mixing"]) {
    r.fail(node["mixing"], "model.mixing", "only meaningful together with model.lambda");
  }
}

void read_assessment(const Reader& r, const YAML::Node& node, impact::AssessmentConfig& a) {
  const std::string path = "assessment";
  r.keys(node, path,
         {"rho_min", "max_subset_size", "bootstrap_replicates", "aggregation", "population", "pair_cap",
          "resample_inputs", "resample_residuals", "eps_div", "min_projection_length", "threads"});
  if (!node) return;
  r.get(node, "rho_min", path, a.rho_min);
  auto size = [&](const char* key, std::size_t& out, long min) {
    long v = static_cast<long>(out);
    r.get(node, key, path, v);
    check(r, v >= min, node[key], path + "." + key, "must be at least " + std::to_string(min));
    out = static_cast<std::size_t>(v);
  };
  size("max_subset_size", a.max_subset_size, 1);
  size("bootstrap_replicates", a.bootstrap_replicates, 1);
  size("pair_cap", a.pair_cap, 1);
  size("min_projection_length", a.min_projection_length, 3);
  r.get(node, "resample_inputs", path, a.resample_inputs);
  r.get(node, "resample_residuals", path, a.resample_residuals);
  r.get(node, "eps_div", path, a.eps_div);
  r.get(node, "threads", path, a.threads);
  if (const YAML::Node agg = node["aggregation"]) {
    const auto name = r.scalar<std::string>(agg, "assessment.aggregation");
    if (name == "mean") {
      a.aggregation = impact::Aggregation::mean;
    } else if (name == "population_weighted") {
      a.aggregation = impact::Aggregation::population_weighted;
    } else {
      r.fail(agg, "assessment.aggregation", "expected mean or population_weighted, got '" + name + "'");
    }
  }
  if (const YAML::Node pop = node["population"]) {
    if (!pop.IsMap()) r.fail(pop, "assessment.population", "expected a mapping location: weight");
    for (const auto& kv : pop) {
      a.population[kv.first.as<std::string>()] = r.scalar<double>(kv.second, "assessment.population");
    }
  }
  try {
    a.validate();
  } catch (const Error& err) {
    r.fail(node, "assessment", err.what());
  }
}

void apply_defaults_and_validate(const Reader& r, const YAML::Node& root, StudyConfig& c) {
  if (c.simulate) {
    const auto& e = c.simulate->epidemic;
    if (c.targets.empty()) c.targets = e.targets;
    if (c.controls.empty()) c.controls = e.controls;
    const Date split = e.start + std::chrono::days{static_cast<long>(e.weeks - c.simulate->intervention_weeks) * e.step_days};
    const Date stop = e.start + std::chrono::days{static_cast<long>(e.weeks) * e.step_days};
    if (!c.pre_intervention) c.pre_intervention = StudyPeriod{PeriodKind::pre_intervention, {e.start, split}};
    if (!c.intervention) c.intervention = StudyPeriod{PeriodKind::intervention, {split, stop}};
  }
  if (c.targets.empty()) r.fail(root["locations"], "locations.targets", "required (or a simulate section)");
  if (c.controls.empty()) r.fail(root["locations"], "locations.controls", "required (or a simulate section)");
  if (!c.pre_intervention || !c.intervention) r.fail(root["periods"], "periods", "required (or a simulate section)");
  try {
    validate_study_periods(*c.pre_intervention, *c.intervention);
  } catch (const Error& err) {
    r.fail(root["periods"], "periods", err.what());
  }
  std::set<std::string> targets(c.targets.begin(), c.targets.end());
  if (targets.size() != c.targets.size()) r.fail(root["locations"], "locations.targets", "duplicate location");
  std::set<std::string> controls(c.controls.begin(), c.controls.end());
  if (controls.size() != c.controls.size()) r.fail(root["locations"], "locations.controls", "duplicate location");
  for (const auto& t : targets) {
    if (controls.count(t)) r.fail(root["locations"], "locations", "'" + t + "' is both target and control");
  }
  for (const auto& cohort : c.cohorts) {
    for (const auto& m : cohort.members) {
      if (!targets.count(m)) {
        r.fail(root["locations"]["cohorts"], "locations.cohorts", "cohort '" + cohort.name + "' member '" + m +
                                                                      "' is not a target");
      }
    }
  }
  if (c.assessment.aggregation == impact::Aggregation::population_weighted) {
    for (const auto* set : {&c.targets, &c.controls}) {
      for (const auto& loc : *set) {
        if (!c.assessment.population.count(loc)) {
          r.fail(root["assessment"], "assessment.population", "no weight for '" + loc + "'");
        }
      }
    }
  }
  if (!c.simulate && (c.data.rates.empty() || c.data.features.empty())) {
    r.fail(root["data"], "data", "rates and features paths are required without a simulate section");
  }
}

}  // namespace

fs::path StudyConfig::rates_path() const { return data.rates.empty() ? out_dir / "rates.csv" : data.rates; }
fs::path StudyConfig::features_path() const { return data.features.empty() ? out_dir / "features.csv" : data.features; }
std::optional<fs::path> StudyConfig::clusters_path() const {
  if (!data.clusters.empty()) return data.clusters;
  if (data.features.empty()) return out_dir / "clusters.csv";
  return std::nullopt;
}

StudyConfig parse_config(std::string_view yaml, const fs::path& origin, const Overrides& overrides) {
  const Reader r(origin.string());
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml));
  } catch (const YAML::ParserException& e) {
    throw Error(ErrorCode::ParseError, r.file() + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) r.fail(root, "<root>", "expected a mapping");
  r.keys(root, "", {"schema", "seed", "out_dir", "data", "locations", "periods", "model", "assessment", "report", "simulate"});
  const fs::path base = origin.has_parent_path() ? origin.parent_path() : fs::path(".");

  StudyConfig c;
  c.path = origin;
  if (!root["schema"]) r.fail(root, "schema", "missing; expected '" + std::string(kStudySchema) + "'");
  const auto schema = r.scalar<std::string>(root["schema"], "schema");
  if (schema != kStudySchema) {
    r.fail(root["schema"], "schema", "unsupported '" + schema + "', expected '" + std::string(kStudySchema) + "'");
  }
  r.get(root, "seed", "", c.seed);
  std::string out_dir = "out";
  r.get(root, "out_dir", "", out_dir);
  c.out_dir = resolve(base, out_dir);

  const YAML::Node data = root["data"];
  r.keys(data, "data", {"rates", "features", "clusters", "national", "step_days"});
  if (data) {
    std::string rates, features, clusters;
    r.get(data, "rates", "data", rates);
    r.get(data, "features", "data", features);
    r.get(data, "clusters", "data", clusters);
    c.data.rates = resolve(base, rates);
    c.data.features = resolve(base, features);
    c.data.clusters = resolve(base, clusters);
    r.get(data, "national", "data", c.data.national);
    r.get(data, "step_days", "data", c.data.step_days);
    check(r, c.data.step_days >= 1, data["step_days"], "data.step_days", "must be positive");
  }

  const YAML::Node locations = root["locations"];
  r.keys(locations, "locations", {"targets", "controls", "cohorts"});
  if (locations) {
    if (locations["targets"]) c.targets = r.strings(locations["targets"], "locations.targets");
    if (locations["controls"]) c.controls = r.strings(locations["controls"], "locations.controls");
    if (const YAML::Node cohorts = locations["cohorts"]) {
      if (!cohorts.IsSequence()) r.fail(cohorts, "locations.cohorts", "expected a list");
      for (const auto& item : cohorts) {
        r.keys(item, "locations.cohorts", {"name", "members"});
        if (!item["name"] || !item["members"]) r.fail(item, "locations.cohorts", "needs name and members");
        impact::Cohort cohort{r.scalar<std::string>(item["name"], "locations.cohorts.name"),
                              r.strings(item["members"], "locations.cohorts.members")};
        std::sort(cohort.members.begin(), cohort.members.end());
        if (cohort.members.empty() ||
            std::adjacent_find(cohort.members.begin(), cohort.members.end()) != cohort.members.end()) {
          r.fail(item, "locations.cohorts.members", "must be non-empty and unique");
        }
        c.cohorts.push_back(std::move(cohort));
      }
    }
  }

  const YAML::Node periods = root["periods"];
  r.keys(periods, "periods", {"pre_intervention", "intervention"});
  if (periods) {
    if (!periods["pre_intervention"] || !periods["intervention"]) {
      r.fail(periods, "periods", "needs both pre_intervention and intervention");
    }
    c.pre_intervention = read_period(r, periods["pre_intervention"], "periods.pre_intervention", PeriodKind::pre_intervention);
    c.intervention = read_period(r, periods["intervention"], "periods.intervention", PeriodKind::intervention);
  }

  read_model(r, root["model"], c.model);
  read_assessment(r, root["assessment"], c.assessment);

  const YAML::Node report = root["report"];
  r.keys(report, "report", {"phase", "source", "plot_pairs"});
  if (report) {
    r.get(report, "phase", "report", c.report.phase);
    r.get(report, "source", "report", c.report.source);
    long plot = static_cast<long>(c.report.plot_pairs);
    r.get(report, "plot_pairs", "report", plot);
    check(r, plot >= 0, report["plot_pairs"], "report.plot_pairs", "must be non-negative");
    c.report.plot_pairs = static_cast<std::size_t>(plot);
  }

  if (root["simulate"]) read_simulation(r, root["simulate"], c);

  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.out_dir) c.out_dir = *overrides.out_dir;
  apply_defaults_and_validate(r, root, c);
  return c;
}

StudyConfig load_config(const fs::path& path, const Overrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, path.string() + ": cannot open config");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path, overrides);
}

// --- simulate ---------------------------------------------------------------

SyntheticStudy simulate(const StudyConfig& config) {
  if (!config.simulate) throw Error(ErrorCode::InvalidArgument, config.path.string() + ": simulate: section missing");
  const SimulationConfig& sim = *config.simulate;
  synthetic::EpidemicConfig ec = sim.epidemic;
  ec.seed = derive_seed(config.seed, {kEpidemicStream});
  auto epidemic = synthetic::generate_epidemic(ec);
  epidemic = synthetic::inject_intervention(std::move(epidemic), ec.targets, config.intervention->range, sim.theta_true);

  synthetic::LinkConfig lc = sim.link;
  lc.seed = derive_seed(config.seed, {kVocabularyStream});
  auto vocabulary = synthetic::make_vocabulary(lc);

  RateSeries national = synthetic::national_rates(epidemic.rates);
  if (national.location() != config.data.national) {
    national = RateSeries(config.data.national, national.index(), national.values());
  }
  std::map<std::string, gp::FeatureMatrix> features;
  std::uint64_t l = 0;
  for (const auto& [loc, values] : epidemic.rates.series) {
    features.emplace(loc, synthetic::generate_ugc(epidemic.rates.series_for(loc), vocabulary, sim.ugc_noise,
                                                  derive_seed(config.seed, {kUgcStream, l++})));
  }
  features.emplace(config.data.national,
                   synthetic::generate_ugc(national, vocabulary, sim.ugc_noise, derive_seed(config.seed, {kUgcStream, l})));
  return {std::move(epidemic), std::move(vocabulary), std::move(features), std::move(national), *config.pre_intervention,
          *config.intervention};
}

impact::StudyInputs inputs_from(const StudyConfig& config, const SyntheticStudy& study) {
  impact::StudyInputs in{study.features.at(config.data.national),
                         study.national,
                         {},
                         LocationSet(LocationRole::target, config.targets),
                         LocationSet(LocationRole::control, config.controls),
                         study.pre_intervention,
                         study.intervention,
                         config.cohorts};
  for (const auto* set : {&config.targets, &config.controls}) {
    for (const auto& loc : *set) {
      auto it = study.features.find(loc);
      if (it == study.features.end()) throw Error(ErrorCode::InvalidArgument, "no simulated location '" + loc + "'");
      in.location_features.emplace(loc, it->second);
    }
  }
  impact::validate(in);
  return in;
}

namespace {

struct PendingFile {
  fs::path path;
  std::string content;
};

void write_all(const fs::path& dir, const std::vector<PendingFile>& files) {
  fs::create_directories(dir);
  for (const auto& f : files) {
    std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + f.path.string());
    out << f.content;
    if (!out) throw Error(ErrorCode::InvalidArgument, "failed writing " + f.path.string());
  }
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

json truth_json(const StudyConfig& config, const SyntheticStudy& s) {
  return {{"schema", io::kTruthSchema},
          {"seed", config.seed},
          {"theta_true", s.epidemic.truth.theta_true},
          {"targets", s.epidemic.truth.targets},
          {"controls", s.epidemic.truth.controls},
          {"pre_intervention", {format_date(s.pre_intervention.range.begin), format_date(s.pre_intervention.range.end)}},
          {"intervention", {format_date(s.intervention.range.begin), format_date(s.intervention.range.end)}},
          {"shared_factor_weight", config.simulate->epidemic.shared_factor_weight},
          {"noise_sd", config.simulate->epidemic.noise_sd},
          {"ugc_noise", config.simulate->ugc_noise}};
}

}  // namespace

int cmd_simulate(const StudyConfig& config, std::ostream& out, std::ostream& err) {
  std::vector<PendingFile> files;
  std::size_t weeks = 0;
  try {
    const SyntheticStudy s = simulate(config);
    weeks = s.epidemic.rates.index.count;
    std::map<std::string, RateSeries> rates;
    for (const auto& [loc, v] : s.epidemic.rates.series) rates.emplace(loc, s.epidemic.rates.series_for(loc));
    rates.emplace(s.national.location(), s.national);
    std::ostringstream r, f, c;
    write_rates_csv(r, rates);
    io::write_features_csv(f, s.features);
    io::write_clusters_csv(c, s.vocabulary.terms, s.vocabulary.clusters);
    files = {{config.rates_path(), r.str()},
             {config.features_path(), f.str()},
             {config.out_dir / "clusters.csv", c.str()},
             {config.out_dir / "truth.json", dump(truth_json(config, s))}};
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  std::uint64_t digest = io::fnv1a64("");
  for (const auto& file : files) digest = io::fnv1a64(file.content, digest);
  try {
    write_all(config.out_dir, files);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  out << "dataset fnv1a64:" << io::hex_digest(digest) << " targets " << config.simulate->epidemic.targets.size()
      << " controls " << config.simulate->epidemic.controls.size() << " weeks " << weeks << " theta_true "
      << csv::format_number(config.simulate->theta_true) << '\n';
  return kOk;
}

// --- train ------------------------------------------------------------------

impact::StudyInputs load_inputs(const StudyConfig& config) {
  const auto rates = read_rates_csv_file(config.rates_path().string(), config.data.step_days);
  auto national_it = rates.find(config.data.national);
  if (national_it == rates.end()) {
    throw Error(ErrorCode::InvalidArgument,
                config.rates_path().string() + ": no rates for national series '" + config.data.national + "'");
  }
  std::optional<std::map<std::string, std::string>> clusters;
  if (const auto cp = config.clusters_path()) {
    std::ifstream in(*cp);
    if (!in) throw Error(ErrorCode::InvalidArgument, cp->string() + ": cannot open clusters file");
    clusters = io::read_clusters_csv(in);
  }
  std::ifstream fin(config.features_path());
  if (!fin) throw Error(ErrorCode::InvalidArgument, config.features_path().string() + ": cannot open features file");
  auto features = io::read_features_csv(fin, clusters, config.data.national, config.data.step_days);
  auto nat_features = features.find(config.data.national);
  if (nat_features == features.end()) {
    throw Error(ErrorCode::InvalidArgument,
                config.features_path().string() + ": no features for national series '" + config.data.national + "'");
  }
  // Restrict national features and rates to their common dates.
  const DateIndex& fi = nat_features->second.index;
  const DateIndex& ri = national_it->second.index();
  if (!fi.alignable_with(ri)) throw Error(ErrorCode::NonAlignable, "national features and rates are on different calendars");
  const DateRange common{std::max(fi.start, ri.start), std::min(fi.end(), ri.end())};
  if (common.empty()) throw Error(ErrorCode::EmptyOverlap, "national features and rates share no dates");

  impact::StudyInputs in{nat_features->second.slice(common),
                         slice(national_it->second, common),
                         {},
                         LocationSet(LocationRole::target, config.targets),
                         LocationSet(LocationRole::control, config.controls),
                         *config.pre_intervention,
                         *config.intervention,
                         config.cohorts};
  for (const auto* set : {&config.targets, &config.controls}) {
    for (const auto& loc : *set) {
      auto it = features.find(loc);
      if (it == features.end()) {
        throw Error(ErrorCode::InvalidArgument, config.features_path().string() + ": no features for location '" + loc + "'");
      }
      in.location_features.emplace(loc, it->second);
    }
  }
  impact::validate(in);
  const auto& pre = in.pre_intervention.range;
  if (in.national_features.index.start > pre.begin || in.national_features.index.end() < pre.end) {
    throw Error(ErrorCode::InvalidArgument, "national features and rates do not cover the pre-intervention period");
  }
  return in;
}

namespace {

void append_metrics(std::ostringstream& out, const CvReport& cv, std::string_view model) {
  for (const auto& f : cv.folds) {
    out << (f.fold + 1) << ',' << model << ',' << csv::format_number(f.mae) << ','
        << (f.pearson_r ? csv::format_number(*f.pearson_r) : "NA") << '\n';
  }
  out << "mean," << model << ',' << csv::format_number(cv.mean_mae) << ','
      << (cv.mean_r ? csv::format_number(*cv.mean_r) : "NA") << '\n';
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

int cmd_train(const StudyConfig& config, const TrainOptions& options, std::ostream& out, std::ostream& err) {
  std::optional<impact::StudyInputs> in;
  try {
    in = load_inputs(config);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  const std::uint64_t seed = derive_seed(config.seed, {kTrainStream});
  const auto x = in->national_features.slice(in->pre_intervention.range);
  const auto y = slice(in->national_rates, in->pre_intervention.range);

  std::ostringstream metrics, comparison;
  metrics << "fold,model,mae,pearson_r\n";
  std::optional<model::RateModel> trained;
  try {
    std::vector<model::ModelKind> kinds{config.model.kind};
    if (options.compare) {
      for (auto k : {model::ModelKind::gp, model::ModelKind::ridge, model::ModelKind::elastic_net}) {
        if (k != config.model.kind) kinds.push_back(k);
      }
      comparison << "model,mean_mae,mean_pearson_r,flagged_folds\n";
      out << std::left << std::setw(14) << "model" << std::right << std::setw(10) << "mean MAE" << std::setw(10)
          << "mean r" << '\n';
    }
    for (auto kind : kinds) {
      model::ModelConfig mc = config.model;
      mc.kind = kind;
      if (kind != config.model.kind) mc.regularization.reset();
      const CvReport cv = model::cross_validate(x, y, mc, seed);
      append_metrics(metrics, cv, model::to_string(kind));
      if (options.compare) {
        comparison << model::to_string(kind) << ',' << csv::format_number(cv.mean_mae) << ','
                   << (cv.mean_r ? csv::format_number(*cv.mean_r) : "NA") << ',' << cv.flagged_folds << '\n';
        out << std::left << std::setw(14) << model::to_string(kind) << std::right << std::setw(10)
            << fixed(cv.mean_mae, 3) << std::setw(10) << (cv.mean_r ? fixed(*cv.mean_r, 3) : "NA") << '\n';
      } else {
        out << model::to_string(kind) << " " << config.model.folds << "-fold blocked CV: mean MAE "
            << fixed(cv.mean_mae, 3) << ", mean r " << (cv.mean_r ? fixed(*cv.mean_r, 3) : "NA") << '\n';
      }
    }
    trained = model::train(x, y, config.model, seed);
  } catch (const Error& e) {
    err << "error: training failed: " << e.what() << '\n';
    return kTrainingError;
  }
  std::vector<PendingFile> files{{config.model_path(), dump(io::model_to_json(*trained, x, y))},
                                 {config.out_dir / "metrics.csv", metrics.str()}};
  if (options.compare) files.push_back({config.out_dir / "comparison.csv", comparison.str()});
  try {
    write_all(config.out_dir, files);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}

// --- assess -----------------------------------------------------------------

int cmd_assess(const StudyConfig& config, const AssessOptions& options, std::ostream& out, std::ostream& err) {
  std::optional<impact::StudyInputs> in;
  std::optional<model::RateModel> f;
  try {
    in = load_inputs(config);
    if (!options.train) {
      std::ifstream mf(config.model_path());
      if (!mf) {
        throw Error(ErrorCode::InvalidArgument,
                    config.model_path().string() + ": no trained model (run train first or pass --train)");
      }
      json doc;
      try {
        doc = json::parse(mf);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, config.model_path().string() + ": " + e.what());
      }
      f = io::model_from_json(doc);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  std::vector<PendingFile> files;
  if (options.train) {
    try {
      const auto x = in->national_features.slice(in->pre_intervention.range);
      const auto y = slice(in->national_rates, in->pre_intervention.range);
      f = model::train(x, y, config.model, derive_seed(config.seed, {kTrainStream}));
      files.push_back({config.model_path(), dump(io::model_to_json(*f, x, y))});
    } catch (const Error& e) {
      err << "error: training failed: " << e.what() << '\n';
      return kTrainingError;
    }
  }

  impact::AssessmentConfig ac = config.assessment;
  ac.seed = derive_seed(config.seed, {kAssessStream});
  impact::ImpactReport report;
  RatePanel rates;
  try {
    rates = impact::estimate_rates(*in, *f);
    report = impact::assess_rates(rates, in->targets, in->controls, in->pre_intervention, in->intervention, in->cohorts, ac);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    if (e.code() == ErrorCode::DimensionMismatch) return kConfigError;
    return kAssessmentError;
  }

  const json doc = io::report_to_json(report, {config.report.phase, config.report.source});
  std::ostringstream cohorts, plot;
  io::write_cohort_csv(cohorts, doc);
  std::vector<std::size_t> rows;
  std::map<std::size_t, std::string> names;
  for (const auto& c : report.cohorts) {
    if (!c.row) continue;
    if (!names.count(*c.row)) rows.push_back(*c.row);
    names[*c.row] = names.count(*c.row) ? names[*c.row] + "; " + c.cohort.name : c.cohort.name;
  }
  for (std::size_t i = 0; i < report.rows.size() && i < config.report.plot_pairs; ++i) {
    if (!names.count(i)) rows.push_back(i);
  }
  io::write_plot_data(plot, report, rates, rows, names);
  files.push_back({config.report_path(), dump(doc)});
  files.push_back({config.out_dir / "cohorts.csv", cohorts.str()});
  files.push_back({config.out_dir / "plot_data.csv", plot.str()});
  try {
    write_all(config.out_dir, files);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  render_report(doc, out);
  return kOk;
}

// --- report -----------------------------------------------------------------

void render_report(const json& doc, std::ostream& out) {
  out << "Impact report: phase " << doc.value("phase", "") << ", source " << doc.value("source", "") << '\n';
  const auto& pairs = doc.at("pairs");
  out << "candidate pairs " << doc.value("candidate_pairs", 0) << ", qualified " << pairs.size();
  if (doc.contains("config")) out << ", rho_min " << fixed(doc["config"].value("rho_min", 0.0), 2);
  out << '\n';
  if (pairs.empty()) {
    out << "*** no qualified pairs ***\n";
    return;
  }
  out << '\n'
      << std::left << std::setw(2) << "" << std::setw(24) << "target cohort" << std::right << std::setw(10) << "controls"
      << std::setw(8) << "r" << std::setw(10) << "theta" << "  " << std::left << std::setw(20) << "95% CI" << "status"
      << '\n';
  for (const auto& row : io::cohort_rows(doc)) {
    if (!row.has_estimate) {
      out << "  " << std::left << std::setw(24) << row.name << "  " << (row.note.empty() ? "no estimate" : row.note)
          << '\n';
      continue;
    }
    const bool sig = row.status == "significant";
    const std::string ci = "[" + fixed(row.ci_low, 2) + ", " + fixed(row.ci_high, 2) + "]";
    out << std::left << std::setw(2) << (sig ? "*" : "") << std::setw(24) << row.name << std::right << std::setw(10)
        << row.controls.size() << std::setw(8) << fixed(row.r, 3) << std::setw(10) << fixed(row.theta, 2) << "  "
        << std::left << std::setw(20) << ci << row.status << '\n';
  }
  out << "* significant: |theta| > 2 bootstrap sd with a unimodal, symmetric bootstrap distribution\n";

  out << "\nPer-pair sensitivity (" << pairs.size() << " qualified pairs)\n";
  out << std::right << std::setw(6) << "id" << std::setw(8) << "|T|" << std::setw(8) << "|C|" << std::setw(8) << "r"
      << std::setw(10) << "theta" << std::setw(9) << "sd" << "  " << std::left << std::setw(20) << "95% CI" << "status"
      << '\n';
  for (const auto& p : pairs) {
    const auto num = [&](const char* k) { return p.at(k).is_number() ? p.at(k).get<double>() : NAN; };
    const std::string ci = "[" + fixed(num("ci_low"), 2) + ", " + fixed(num("ci_high"), 2) + "]";
    out << std::right << std::setw(6) << p.at("id").get<std::size_t>() << std::setw(8) << p.at("targets").size()
        << std::setw(8) << p.at("controls").size() << std::setw(8) << fixed(num("r"), 3) << std::setw(10)
        << fixed(num("theta"), 2) << std::setw(9) << fixed(num("bootstrap_sd"), 2) << "  " << std::left << std::setw(20)
        << ci << p.at("status").get<std::string>() << '\n';
  }
  if (const auto& ex = doc.at("excluded"); !ex.empty()) out << "\n" << ex.size() << " pairs excluded during estimation\n";
}

int cmd_report(const fs::path& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path);
  if (!in) {
    err << "error: cannot open report " << path.string() << '\n';
    return kReportError;
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    err << "error: " << path.string() << ": " << e.what() << '\n';
    return kReportError;
  }
  const std::string schema = doc.is_object() ? doc.value("schema", "") : "";
  if (schema != io::kReportSchema) {
    err << "error: " << path.string() << ": schema '" << schema << "' is not '" << io::kReportSchema << "'\n";
    return kReportError;
  }
  std::ostringstream buffer;
  try {
    render_report(doc, buffer);
  } catch (const std::exception& e) {
    err << "error: " << path.string() << ": malformed report: " << e.what() << '\n';
    return kReportError;
  }
  out << buffer.str();
  return kOk;
}

}  // namespace ugcimpact::study
