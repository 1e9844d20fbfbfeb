#include "ugcimpact/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <set>

#include "ugcimpact/csv.hpp"
#include "ugcimpact/error.hpp"

namespace ugcimpact::io {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string hex_digest(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

namespace {

std::uint64_t hash_double(double v, std::uint64_t state) {
  unsigned char b[8];
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(b), 8), state);
}

bool is_integer(const std::string& s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

json date_range_json(const DateRange& r) { return json::array({format_date(r.begin), format_date(r.end)}); }

}  // namespace

// ---------------------------------------------------------------------------
// Features

std::map<std::string, std::string> read_clusters_csv(std::istream& in) {
  const auto table = csv::Table::read(in, "clusters");
  const auto c_term = table.column("term");
  const auto c_cluster = table.column("cluster_id");
  std::map<std::string, std::string> out;
  for (const auto& row : table.rows()) {
    const auto& term = row.fields[c_term];
    const auto& id = row.fields[c_cluster];
    if (term.empty() || id.empty()) table.fail(row, "empty term or cluster id");
    if (!out.emplace(term, id).second) table.fail(row, "term '" + term + "' assigned twice");
  }
  return out;
}

void write_clusters_csv(std::ostream& out, const std::vector<std::string>& terms, const gp::ClusterPartition& clusters) {
  out << "term,cluster_id\n";
  for (std::size_t z = 0; z < clusters.size(); ++z) {
    for (std::size_t c : clusters.group(z)) out << csv::escape(terms.at(c)) << ',' << (z + 1) << '\n';
  }
}

std::map<std::string, gp::FeatureMatrix> read_features_csv(std::istream& in,
                                                           const std::optional<std::map<std::string, std::string>>& clusters,
                                                           const std::string& default_location, int step_days) {
  const auto table = csv::Table::read(in, "features");
  const auto c_date = table.column("date");
  const auto c_term = table.column("term");
  const auto c_freq = table.column("frequency");
  const auto c_loc = table.column("location", false);

  std::vector<std::string> terms;
  std::map<std::string, std::size_t> term_pos;
  // location -> date -> term position -> value
  std::map<std::string, std::map<Date, std::map<std::size_t, double>>> data;
  for (const auto& row : table.rows()) {
    Date d{};
    double f = 0.0;
    try {
      d = parse_date(row.fields[c_date]);
      f = csv::parse_double(row.fields[c_freq]);
    } catch (const Error& e) {
      table.fail(row, e.what());
    }
    if (!std::isfinite(f) || f < 0.0) table.fail(row, "frequency must be a non-negative finite number");
    const std::string& term = row.fields[c_term];
    if (term.empty()) table.fail(row, "empty term");
    const std::string loc = c_loc >= 0 ? row.fields[c_loc] : default_location;
    if (loc.empty()) table.fail(row, "empty location");
    auto [it, fresh] = term_pos.emplace(term, terms.size());
    if (fresh) terms.push_back(term);
    if (!data[loc][d].emplace(it->second, f).second) {
      table.fail(row, "duplicate (date, location, term) " + format_date(d) + ", " + loc + ", " + term);
    }
  }
  if (terms.empty()) throw Error(ErrorCode::ParseError, "features: no rows");

  std::optional<gp::ClusterPartition> partition;
  if (clusters) {
    std::vector<std::string> ids;
    for (const auto& t : terms) {
      auto it = clusters->find(t);
      if (it == clusters->end()) throw Error(ErrorCode::ParseError, "clusters: no cluster for term '" + t + "'");
      ids.push_back(it->second);
    }
    for (const auto& [t, id] : *clusters) {
      if (!term_pos.count(t)) throw Error(ErrorCode::ParseError, "clusters: term '" + t + "' does not occur in the features");
    }
    std::vector<std::string> distinct(ids.begin(), ids.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (std::all_of(distinct.begin(), distinct.end(), is_integer)) {
      std::sort(distinct.begin(), distinct.end(), [](const std::string& a, const std::string& b) { return std::stol(a) < std::stol(b); });
    }
    std::vector<std::vector<std::size_t>> groups(distinct.size());
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const auto z = static_cast<std::size_t>(std::find(distinct.begin(), distinct.end(), ids[j]) - distinct.begin());
      groups[z].push_back(j);
    }
    partition = gp::ClusterPartition(std::move(groups), terms.size());
  } else {
    partition = gp::ClusterPartition::by_token_count(terms);
  }

  std::map<std::string, gp::FeatureMatrix> out;
  for (const auto& [loc, by_date] : data) {
    const Date start = by_date.begin()->first;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(by_date.size()), static_cast<Eigen::Index>(terms.size()));
    Eigen::Index row = 0;
    for (const auto& [d, values] : by_date) {
      const Date expected = start + std::chrono::days{static_cast<long>(row) * step_days};
      if (d != expected) {
        throw Error(ErrorCode::ParseError, "features: location '" + loc + "' has a gap or off-cadence date at " +
                                               format_date(d) + " (expected " + format_date(expected) + ")");
      }
      if (values.size() != terms.size()) {
        throw Error(ErrorCode::ParseError, "features: location '" + loc + "' on " + format_date(d) + " has " +
                                               std::to_string(values.size()) + " of " + std::to_string(terms.size()) +
                                               " terms");
      }
      for (const auto& [j, v] : values) x(row, static_cast<Eigen::Index>(j)) = v;
      ++row;
    }
    out.emplace(loc, gp::FeatureMatrix(DateIndex(start, step_days, by_date.size()), terms, std::move(x), *partition));
  }
  return out;
}

void write_features_csv(std::ostream& out, const std::map<std::string, gp::FeatureMatrix>& features) {
  out << "date,location,term,frequency\n";
  for (const auto& [loc, fm] : features) {
    for (std::size_t t = 0; t < fm.rows(); ++t) {
      const std::string date = format_date(fm.index.at(t));
      for (std::size_t j = 0; j < fm.columns(); ++j) {
        out << date << ',' << csv::escape(loc) << ',' << csv::escape(fm.terms[j]) << ','
            << csv::format_number(fm.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j))) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Models

std::string training_digest(const DateIndex& index, const Eigen::MatrixXd& x, std::span<const double> y) {
  std::uint64_t h = fnv1a64(format_date(index.start) + "/" + std::to_string(index.step_days) + "/" +
                            std::to_string(index.count));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) h = hash_double(x(i, j), h);
  }
  for (double v : y) h = hash_double(v, h);
  return "fnv1a64:" + hex_digest(h);
}

namespace {

json matrix_json(const Eigen::MatrixXd& x) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < x.cols(); ++j) r.push_back(x(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows, std::size_t cols) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw Error(ErrorCode::SchemaMismatch, "model: ragged training input matrix");
    for (std::size_t j = 0; j < cols; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  }
  return x;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

json model_to_json(const model::RateModel& m, const gp::FeatureMatrix& train_x, const RateSeries& train_y) {
  json doc;
  doc["schema"] = kModelSchema;
  doc["model_kind"] = model::to_string(m.kind());
  doc["terms"] = m.terms();
  doc["clusters"] = m.clusters().groups();
  doc["training_dates"] = {{"start", format_date(train_x.index.start)},
                           {"step_days", train_x.index.step_days},
                           {"count", train_x.index.count}};
  doc["training_digest"] = training_digest(train_x.index, train_x.values, train_y.values());
  if (const auto* g = m.as_gp()) {
    const auto& spec = g->spec();
    json blocks = json::array();
    for (const auto& h : spec.clusters) {
      json b = {{"signal_variance", h.signal_variance}, {"length_scale", h.length_scale}};
      if (spec.kind == gp::KernelKind::rational_quadratic) b["alpha"] = h.alpha;
      blocks.push_back(std::move(b));
    }
    doc["gp"] = {{"kernel", gp::to_string(spec.kind)},
                 {"clusters", blocks},
                 {"noise_variance", spec.noise_variance},
                 {"log_marginal_likelihood", g->log_marginal_likelihood()}};
    if (const auto& s = g->standardization()) {
      doc["gp"]["standardization"] = {{"center", vector_json(s->center)}, {"scale", vector_json(s->scale)}};
    } else {
      doc["gp"]["standardization"] = nullptr;
    }
    doc["training"] = {{"inputs", matrix_json(g->training_inputs())}, {"targets", g->training_targets()}};
  } else {
    const auto* l = m.as_linear();
    doc["linear"] = {{"weights", vector_json(l->model.weights)},
                     {"intercept", l->model.intercept},
                     {"lambda", l->model.regularization.lambda},
                     {"mixing", l->model.regularization.mixing}};
  }
  return doc;
}

model::RateModel model_from_json(const json& doc) {
  try {
    if (doc.value("schema", "") != kModelSchema) {
      throw Error(ErrorCode::SchemaMismatch, "model document schema is '" + doc.value("schema", "") + "', expected '" +
                                                 std::string(kModelSchema) + "'");
    }
    const auto kind = model::parse_model_kind(doc.at("model_kind").get<std::string>());
    auto terms = doc.at("terms").get<std::vector<std::string>>();
    gp::ClusterPartition partition(doc.at("clusters").get<std::vector<std::vector<std::size_t>>>(), terms.size());
    if (kind == model::ModelKind::gp) {
      const json& g = doc.at("gp");
      gp::KernelSpec spec;
      spec.kind = gp::parse_kernel_kind(g.at("kernel").get<std::string>());
      for (const auto& b : g.at("clusters")) {
        spec.clusters.push_back({b.at("signal_variance").get<double>(), b.at("length_scale").get<double>(),
                                 b.value("alpha", 1.0)});
      }
      spec.noise_variance = g.at("noise_variance").get<double>();
      std::optional<gp::Standardization> standardization;
      if (!g.at("standardization").is_null()) {
        standardization = gp::Standardization{vector_from_json(g["standardization"].at("center")),
                                              vector_from_json(g["standardization"].at("scale"))};
      }
      Eigen::MatrixXd x = matrix_from_json(doc.at("training").at("inputs"), terms.size());
      auto y = doc.at("training").at("targets").get<std::vector<double>>();
      const json& dates = doc.at("training_dates");
      const DateIndex index(parse_date(dates.at("start").get<std::string>()), dates.at("step_days").get<int>(),
                            dates.at("count").get<std::size_t>());
      if (training_digest(index, x, y) != doc.at("training_digest").get<std::string>()) {
        throw Error(ErrorCode::SchemaMismatch, "model training data does not match its digest");
      }
      return model::RateModel(gp::TrainedGP::condition(std::move(spec), std::move(partition), std::move(x), std::move(y),
                                                       std::move(terms), std::move(standardization)));
    }
    const json& l = doc.at("linear");
    model::LinearRateModel lin;
    lin.kind = kind;
    lin.terms = std::move(terms);
    lin.clusters = std::move(partition);
    lin.model.weights = vector_from_json(l.at("weights"));
    lin.model.intercept = l.at("intercept").get<double>();
    lin.model.regularization = {l.at("lambda").get<double>(), l.at("mixing").get<double>()};
    if (static_cast<std::size_t>(lin.model.weights.size()) != lin.terms.size()) {
      throw Error(ErrorCode::SchemaMismatch, "linear model weights do not match its terms");
    }
    return model::RateModel(std::move(lin));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed model document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

namespace {

json estimate_json(const impact::ImpactEstimate& e) {
  return {{"id", e.pair.canonical_index},
          {"targets", e.pair.targets},
          {"controls", e.pair.controls},
          {"r", e.pair.correlation},
          {"theta", e.theta},
          {"ci_low", e.ci_low},
          {"ci_high", e.ci_high},
          {"bootstrap_sd", e.bootstrap_sd},
          {"bootstrap_replicates", e.bootstrap_samples.size()},
          {"bootstrap_attempts", e.bootstrap_attempts},
          {"significant", e.significant},
          {"status", impact::to_string(e.status)},
          {"distribution",
           {{"ok", e.distribution.ok},
            {"symmetric", e.distribution.symmetric},
            {"unimodal", e.distribution.unimodal},
            {"degenerate", e.distribution.degenerate},
            {"skewness", e.distribution.skewness},
            {"modes", e.distribution.modes}}},
          {"projector",
           {{"slope", e.projector.slope},
            {"intercept", e.projector.intercept},
            {"r_squared", e.projector.r_squared},
            {"residual_se", e.projector.residual_se}}}};
}

const char* aggregation_name(impact::Aggregation a) {
  return a == impact::Aggregation::mean ? "mean" : "population_weighted";
}

}  // namespace

json report_to_json(const impact::ImpactReport& report, const ReportLabels& labels) {
  json doc;
  doc["schema"] = kReportSchema;
  doc["phase"] = labels.phase;
  doc["source"] = labels.source;
  const auto& c = report.config;
  doc["config"] = {{"rho_min", c.rho_min},
                   {"max_subset_size", c.max_subset_size},
                   {"bootstrap_replicates", c.bootstrap_replicates},
                   {"seed", c.seed},
                   {"aggregation", aggregation_name(c.aggregation)},
                   {"pair_cap", c.pair_cap},
                   {"resample_inputs", c.resample_inputs},
                   {"resample_residuals", c.resample_residuals},
                   {"eps_div", c.eps_div}};
  doc["periods"] = {{"pre_intervention", date_range_json(report.pre_intervention)},
                    {"intervention", date_range_json(report.intervention)}};
  doc["candidate_pairs"] = report.candidate_pairs;
  doc["best_correlation"] = report.best_correlation ? json(*report.best_correlation) : json(nullptr);

  json cohorts = json::array();
  for (const auto& s : report.cohorts) {
    json row = {{"name", s.cohort.name}, {"targets", s.cohort.members}};
    if (s.row) {
      const auto& e = report.rows[*s.row];
      row["row"] = *s.row;
      row["pair_id"] = e.pair.canonical_index;
      row["controls"] = e.pair.controls;
      row["n_control"] = e.pair.controls.size();
      row["r"] = e.pair.correlation;
      row["theta"] = e.theta;
      row["ci_low"] = e.ci_low;
      row["ci_high"] = e.ci_high;
      row["bootstrap_sd"] = e.bootstrap_sd;
      row["significant"] = e.significant;
      row["status"] = impact::to_string(e.status);
    } else {
      row["row"] = nullptr;
      row["note"] = s.note;
    }
    cohorts.push_back(std::move(row));
  }
  doc["cohorts"] = std::move(cohorts);

  json pairs = json::array();
  for (const auto& e : report.rows) pairs.push_back(estimate_json(e));
  doc["pairs"] = std::move(pairs);

  json excluded = json::array();
  for (const auto& x : report.excluded) {
    excluded.push_back({{"id", x.pair.canonical_index},
                        {"targets", x.pair.targets},
                        {"controls", x.pair.controls},
                        {"reason", x.reason}});
  }
  doc["excluded"] = std::move(excluded);
  return doc;
}

std::vector<CohortRow> cohort_rows(const json& report) {
  std::vector<CohortRow> out;
  try {
    for (const auto& c : report.at("cohorts")) {
      CohortRow row;
      row.name = c.at("name").get<std::string>();
      row.targets = c.at("targets").get<std::vector<std::string>>();
      row.has_estimate = !c.at("row").is_null();
      if (row.has_estimate) {
        row.controls = c.at("controls").get<std::vector<std::string>>();
        row.r = c.at("r").get<double>();
        row.theta = c.at("theta").get<double>();
        row.ci_low = c.at("ci_low").get<double>();
        row.ci_high = c.at("ci_high").get<double>();
        row.bootstrap_sd = c.at("bootstrap_sd").get<double>();
        row.status = c.at("status").get<std::string>();
      } else {
        row.note = c.value("note", "");
      }
      out.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed report cohort table: ") + e.what());
  }
  return out;
}

void write_cohort_csv(std::ostream& out, const json& report) {
  out << "phase,source,target_cohort,n_control,r,theta,ci_low,ci_high,significant\n";
  const std::string phase = report.value("phase", "");
  const std::string source = report.value("source", "");
  for (const auto& row : cohort_rows(report)) {
    out << csv::escape(phase) << ',' << csv::escape(source) << ',' << csv::escape(row.name) << ',';
    if (!row.has_estimate) {
      out << "0,NA,NA,NA,NA,NA\n";
      continue;
    }
    const char* sig = row.status == "significant" ? "1" : row.status == "not_significant" ? "0" : "NA";
    out << row.controls.size() << ',' << csv::format_number(row.r) << ',' << csv::format_number(row.theta) << ','
        << csv::format_number(row.ci_low) << ',' << csv::format_number(row.ci_high) << ',' << sig << '\n';
  }
}

void write_plot_data(std::ostream& out, const impact::ImpactReport& report, const RatePanel& rates,
                     const std::vector<std::size_t>& rows, const std::map<std::size_t, std::string>& cohort_names) {
  out << "pair_id,target_cohort,date,period,series,value\n";
  const RatePanel pre = rates.slice(report.pre_intervention);
  const RatePanel during = rates.slice(report.intervention);
  for (std::size_t r : rows) {
    const auto& e = report.rows.at(r);
    const auto it = cohort_names.find(r);
    const std::string label = it != cohort_names.end() ? it->second : "";
    auto emit = [&](const RatePanel& panel, const char* period) {
      const auto target = impact::aggregate(panel, e.pair.targets, report.config);
      const auto control = impact::aggregate(panel, e.pair.controls, report.config);
      const auto projected = impact::project(e.projector, control);
      const char* projected_name = std::strcmp(period, "pre_intervention") == 0 ? "fitted" : "counterfactual";
      for (std::size_t t = 0; t < panel.index.count; ++t) {
        const std::string prefix = std::to_string(e.pair.canonical_index) + "," + csv::escape(label) + "," +
                                   format_date(panel.index.at(t)) + "," + period + ",";
        out << prefix << "target_estimate," << csv::format_number(target[t]) << '\n';
        out << prefix << "control_estimate," << csv::format_number(control[t]) << '\n';
        out << prefix << projected_name << ',' << csv::format_number(projected[t]) << '\n';
      }
    };
    emit(pre, "pre_intervention");
    emit(during, "intervention");
  }
}

}  // namespace ugcimpact::io
