#include "doctest.h"

#include <sstream>

#include "support.hpp"
#include "ugcimpact/error.hpp"
#include "ugcimpact/io.hpp"
#include "ugcimpact/synthetic.hpp"

using namespace ugcimpact;
using nlohmann::json;

namespace {

struct Fixture {
  synthetic::Epidemic epidemic;
  RateSeries national;
  gp::FeatureMatrix features;
};

Fixture fixture(std::uint64_t seed, std::size_t weeks = 60) {
  synthetic::EpidemicConfig c;
  c.targets = synthetic::location_names("target", 2);
  c.controls = synthetic::location_names("control", 3);
  c.weeks = weeks;
  c.noise_sd = 0.5;
  c.seed = seed;
  auto e = synthetic::generate_epidemic(c);
  auto national = synthetic::national_rates(e.rates);
  synthetic::LinkConfig link;
  link.terms = 6;
  link.clusters = 2;
  link.seed = seed;
  auto x = synthetic::generate_ugc(national, synthetic::make_vocabulary(link), 0.1, seed + 1);
  return {std::move(e), std::move(national), std::move(x)};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

impact::ImpactReport small_report(const synthetic::Epidemic& e) {
  const auto& idx = e.rates.index;
  const DateRange pre{idx.at(0), idx.at(idx.count - 12)};
  const DateRange during{idx.at(idx.count - 12), idx.end()};
  impact::AssessmentConfig config;
  config.max_subset_size = 1;
  config.bootstrap_replicates = 100;
  config.rho_min = 0.3;
  return impact::assess_rates(e.rates, LocationSet(LocationRole::target, e.truth.targets),
                              LocationSet(LocationRole::control, e.truth.controls), {PeriodKind::pre_intervention, pre},
                              {PeriodKind::intervention, during},
                              {{"All locations", e.truth.targets}, {"first", {"target_01"}}}, config);
}

}  // namespace

TEST_CASE("fnv1a64 reference values") {
  CHECK(io::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(io::fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(io::hex_digest(0xabcULL) == "0000000000000abc");
}

TEST_CASE("features and clusters round trip") {
  const auto f = fixture(1);
  std::map<std::string, gp::FeatureMatrix> in{{"national", f.features}, {"target_01", f.features}};
  std::ostringstream features, clusters;
  io::write_features_csv(features, in);
  io::write_clusters_csv(clusters, f.features.terms, f.features.clusters);

  std::istringstream cs(clusters.str());
  const auto map = io::read_clusters_csv(cs);
  CHECK(map.size() == f.features.terms.size());
  std::istringstream fs(features.str());
  const auto out = io::read_features_csv(fs, map);
  REQUIRE(out.size() == 2);
  for (const auto& [loc, fm] : out) {
    CHECK(fm.terms == f.features.terms);
    CHECK(fm.index == f.features.index);
    CHECK(fm.values == f.features.values);
    CHECK(fm.clusters == f.features.clusters);
  }
}

TEST_CASE("features without a cluster map fall back to token counts") {
  std::istringstream in(
      "date,term,frequency\n"
      "2011-01-03,flu,1\n2011-01-03,flu shot,2\n2011-01-03,fever,3\n"
      "2011-01-10,flu,4\n2011-01-10,flu shot,5\n2011-01-10,fever,6\n");
  const auto out = io::read_features_csv(in, std::nullopt);
  const auto& fm = out.at("national");
  CHECK(fm.terms == std::vector<std::string>{"flu", "flu shot", "fever"});
  CHECK(fm.clusters == gp::ClusterPartition::by_token_count(fm.terms));
  CHECK(fm.values(1, 2) == 6.0);
}

TEST_CASE("malformed feature files") {
  SUBCASE("missing term on a date") {
    std::istringstream in("date,term,frequency\n2011-01-03,a,1\n2011-01-03,b,1\n2011-01-10,a,1\n");
    CHECK(code_of([&] { io::read_features_csv(in, std::nullopt); }) == ErrorCode::ParseError);
  }
  SUBCASE("gap") {
    std::istringstream in("date,term,frequency\n2011-01-03,a,1\n2011-01-17,a,1\n");
    CHECK(code_of([&] { io::read_features_csv(in, std::nullopt); }) == ErrorCode::ParseError);
  }
  SUBCASE("negative frequency names the line") {
    std::istringstream in("date,term,frequency\n2011-01-03,a,-1\n");
    CHECK_THROWS_WITH(io::read_features_csv(in, std::nullopt), doctest::Contains(":2:"));
  }
  SUBCASE("term without a cluster") {
    std::istringstream in("date,term,frequency\n2011-01-03,a,1\n2011-01-03,b,1\n");
    const std::map<std::string, std::string> clusters{{"a", "1"}};
    CHECK(code_of([&] { io::read_features_csv(in, clusters); }) == ErrorCode::ParseError);
  }
}

TEST_CASE("model documents") {
  const auto f = fixture(2);
  model::ModelConfig config;
  config.gp.restarts = 2;

  SUBCASE("gp round trip predicts identically") {
    const auto m = model::train(f.features, f.national, config, 3);
    const json doc = io::model_to_json(m, f.features, f.national);
    CHECK(doc.at("schema") == io::kModelSchema);
    CHECK(doc.at("model_kind") == "gp");
    const auto back = io::model_from_json(json::parse(doc.dump()));
    CHECK(back.kind() == model::ModelKind::gp);
    CHECK(back.terms() == m.terms());
    CHECK(back.estimate(f.features) == m.estimate(f.features));
  }
  SUBCASE("linear round trip predicts identically") {
    for (auto kind : {model::ModelKind::ridge, model::ModelKind::elastic_net}) {
      config.kind = kind;
      const auto m = model::train(f.features, f.national, config, 3);
      const auto back = io::model_from_json(json::parse(io::model_to_json(m, f.features, f.national).dump()));
      CHECK(back.kind() == kind);
      CHECK(back.estimate(f.features) == m.estimate(f.features));
    }
  }
  SUBCASE("schema and digest are enforced") {
    const auto m = model::train(f.features, f.national, config, 3);
    json doc = io::model_to_json(m, f.features, f.national);
    json wrong = doc;
    wrong["schema"] = "ugcimpact.model/v0";
    CHECK(code_of([&] { io::model_from_json(wrong); }) == ErrorCode::SchemaMismatch);
    json tampered = doc;
    tampered["training_digest"] = "fnv1a64:0000000000000000";
    CHECK(code_of([&] { io::model_from_json(tampered); }) == ErrorCode::SchemaMismatch);
    json truncated = doc;
    truncated.erase("gp");
    CHECK(code_of([&] { io::model_from_json(truncated); }) == ErrorCode::SchemaMismatch);
  }
}

TEST_CASE("training digest") {
  const auto f = fixture(3);
  const auto a = io::training_digest(f.features.index, f.features.values, f.national.values());
  CHECK(a.rfind("fnv1a64:", 0) == 0);
  CHECK(a == io::training_digest(f.features.index, f.features.values, f.national.values()));
  auto y = f.national.values();
  y[5] = std::nextafter(y[5], 1e9);
  CHECK(a != io::training_digest(f.features.index, f.features.values, y));
}

TEST_CASE("report documents and tables") {
  const auto f = fixture(4, 80);
  const auto report = small_report(f.epidemic);
  const json doc = json::parse(io::report_to_json(report, {"A", "synthetic"}).dump());
  CHECK(doc.at("schema") == io::kReportSchema);
  CHECK(doc.at("pairs").size() == report.rows.size());

  const auto rows = io::cohort_rows(doc);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].name == "All locations");
  CHECK(rows[1].targets == std::vector<std::string>{"target_01"});
  const auto& best = report.rows[*report.cohorts[0].row];
  CHECK(rows[0].has_estimate);
  CHECK(rows[0].theta == best.theta);
  CHECK(rows[0].ci_low == best.ci_low);
  CHECK(rows[0].ci_high == best.ci_high);
  CHECK(rows[0].controls == best.pair.controls);

  std::ostringstream csv;
  io::write_cohort_csv(csv, doc);
  std::istringstream lines(csv.str());
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  CHECK(header == "phase,source,target_cohort,n_control,r,theta,ci_low,ci_high,significant");
  CHECK(first.rfind("A,synthetic,All locations,", 0) == 0);
  const char last = first.back();
  CHECK((first.ends_with(",NA") || last == '0' || last == '1'));

  std::ostringstream plot;
  io::write_plot_data(plot, report, f.epidemic.rates, {*report.cohorts[0].row}, {{*report.cohorts[0].row, "All"}});
  std::istringstream plines(plot.str());
  std::string line;
  std::getline(plines, line);
  CHECK(line == "pair_id,target_cohort,date,period,series,value");
  std::size_t n = 0, counterfactual = 0;
  while (std::getline(plines, line)) {
    ++n;
    if (line.find(",intervention,counterfactual,") != std::string::npos) ++counterfactual;
  }
  CHECK(n == 3 * 80);
  CHECK(counterfactual == 12);
}

TEST_CASE("malformed report documents") {
  CHECK(code_of([] { io::cohort_rows(json{{"cohorts", 3}}); }) == ErrorCode::SchemaMismatch);
  CHECK(code_of([] { io::cohort_rows(json::object()); }) == ErrorCode::SchemaMismatch);
}
