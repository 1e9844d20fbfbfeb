// Python bindings: GP fit/predict, linear baselines, the synthetic oracle,
// the impact sweep and the study commands.

#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ugcimpact/assess.hpp"
#include "ugcimpact/baselines.hpp"
#include "ugcimpact/error.hpp"
#include "ugcimpact/gp.hpp"
#include "ugcimpact/impact.hpp"
#include "ugcimpact/io.hpp"
#include "ugcimpact/study.hpp"
#include "ugcimpact/synthetic.hpp"

namespace py = pybind11;
using namespace ugcimpact;

namespace {

gp::ClusterPartition partition_from(const std::optional<std::vector<std::vector<std::size_t>>>& clusters,
                                    std::size_t columns) {
  return clusters ? gp::ClusterPartition(*clusters, columns) : gp::ClusterPartition::single(columns);
}

py::dict spec_dict(const gp::KernelSpec& spec) {
  py::list clusters;
  for (const auto& h : spec.clusters) {
    py::dict d;
    d["signal_variance"] = h.signal_variance;
    d["length_scale"] = h.length_scale;
    if (spec.kind == gp::KernelKind::rational_quadratic) d["alpha"] = h.alpha;
    clusters.append(d);
  }
  py::dict out;
  out["kernel"] = std::string(gp::to_string(spec.kind));
  out["clusters"] = clusters;
  out["noise_variance"] = spec.noise_variance;
  return out;
}

std::pair<std::vector<double>, std::vector<double>> split(const std::vector<gp::Prediction>& p) {
  std::vector<double> mean, var;
  for (const auto& q : p) {
    mean.push_back(q.mean);
    var.push_back(q.variance);
  }
  return {mean, var};
}

RatePanel panel_from(const std::map<std::string, std::vector<double>>& rates, const std::string& start, int step_days) {
  if (rates.empty()) throw Error(ErrorCode::InvalidArgument, "no rate series");
  RatePanel p;
  p.index = DateIndex(parse_date(start), step_days, rates.begin()->second.size());
  for (const auto& [loc, v] : rates) {
    if (v.size() != p.index.count) throw Error(ErrorCode::DimensionMismatch, "rate series differ in length");
  }
  p.series = rates;
  return p;
}

py::dict estimate_dict(const impact::ImpactEstimate& e) {
  py::dict d;
  d["targets"] = e.pair.targets;
  d["controls"] = e.pair.controls;
  d["r"] = e.pair.correlation;
  d["theta"] = e.theta;
  d["ci"] = py::make_tuple(e.ci_low, e.ci_high);
  d["bootstrap_sd"] = e.bootstrap_sd;
  d["significant"] = e.significant;
  d["status"] = std::string(impact::to_string(e.status));
  d["slope"] = e.projector.slope;
  d["intercept"] = e.projector.intercept;
  return d;
}

template <typename F>
py::tuple capture(F&& f) {
  std::ostringstream out, err;
  const int code = f(out, err);
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Disease-rate estimation from term frequencies and intervention impact assessment";

  static py::exception<Error> error(m, "UgcImpactError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("code") = to_string(e.code());
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def("pearson", [](const std::vector<double>& a, const std::vector<double>& b) { return pearson(a, b); },
        py::arg("a"), py::arg("b"));

  py::class_<gp::TrainedGP>(m, "GaussianProcess")
      .def_property_readonly("hyperparameters", [](const gp::TrainedGP& g) { return spec_dict(g.spec()); })
      .def_property_readonly("log_marginal_likelihood", &gp::TrainedGP::log_marginal_likelihood)
      .def_property_readonly("jitter", &gp::TrainedGP::jitter)
      .def(
          "predict", [](const gp::TrainedGP& g, const Eigen::MatrixXd& x) { return split(g.predict(x)); },
          py::arg("x"), "Posterior mean and variance for each row of x.");

  m.def(
      "fit_gp",
      [](const Eigen::MatrixXd& x, const std::vector<double>& y,
         const std::optional<std::vector<std::vector<std::size_t>>>& clusters, const std::string& kernel, int restarts,
         std::uint64_t seed) {
        gp::FitOptions options;
        options.restarts = restarts;
        return gp::fit(x, partition_from(clusters, static_cast<std::size_t>(x.cols())), y,
                       gp::parse_kernel_kind(kernel), options, seed);
      },
      py::arg("x"), py::arg("y"), py::arg("clusters") = py::none(), py::arg("kernel") = "matern52",
      py::arg("restarts") = 10, py::arg("seed") = 0,
      "Type-II maximum likelihood fit. `clusters` lists column indices per kernel term.");

  m.def(
      "gp_cross_validate",
      [](const Eigen::MatrixXd& x, const std::vector<double>& y,
         const std::optional<std::vector<std::vector<std::size_t>>>& clusters, std::size_t folds,
         const std::string& kernel, int restarts, std::uint64_t seed) {
        gp::FitOptions options;
        options.restarts = restarts;
        const auto cv = gp::cross_validate(x, partition_from(clusters, static_cast<std::size_t>(x.cols())), y, folds,
                                           gp::parse_kernel_kind(kernel), options, seed);
        py::dict d;
        d["mean_mae"] = cv.mean_mae;
        d["mean_r"] = cv.mean_r;
        d["flagged_folds"] = cv.flagged_folds;
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("clusters") = py::none(), py::arg("folds") = 10,
      py::arg("kernel") = "matern52", py::arg("restarts") = 10, py::arg("seed") = 0);

  m.def(
      "fit_linear",
      [](const Eigen::MatrixXd& x, const std::vector<double>& y, double lam, double mixing) {
        const auto fit = baselines::fit_linear(x, y, {lam, mixing});
        return py::make_tuple(Eigen::VectorXd(fit.model.weights), fit.model.intercept);
      },
      py::arg("x"), py::arg("y"), py::arg("lam") = 0.0, py::arg("mixing") = 0.0,
      "Elastic-net fit (ridge at mixing 0, lasso at 1); returns (weights, intercept).");

  m.def(
      "simulate_epidemic",
      [](std::size_t targets, std::size_t controls, std::size_t weeks, double shared_factor_weight, double noise_sd,
         std::uint64_t seed) {
        synthetic::EpidemicConfig c;
        c.targets = synthetic::location_names("target", targets);
        c.controls = synthetic::location_names("control", controls);
        c.weeks = weeks;
        c.shared_factor_weight = shared_factor_weight;
        c.noise_sd = noise_sd;
        c.seed = seed;
        return synthetic::generate_epidemic(c).rates.series;
      },
      py::arg("targets") = 6, py::arg("controls") = 10, py::arg("weeks") = 124, py::arg("shared_factor_weight") = 0.9,
      py::arg("noise_sd") = synthetic::EpidemicConfig{}.noise_sd, py::arg("seed") = 0,
      "Observed weekly rates per location (target_NN, control_NN).");

  m.def(
      "check_distribution",
      [](const std::vector<double>& samples) {
        const auto d = impact::check_distribution(samples);
        py::dict out;
        out["ok"] = d.ok;
        out["symmetric"] = d.symmetric;
        out["unimodal"] = d.unimodal;
        out["degenerate"] = d.degenerate;
        out["skewness"] = d.skewness;
        out["modes"] = d.modes;
        return out;
      },
      py::arg("samples"));

  m.def(
      "assess_rates",
      [](const std::map<std::string, std::vector<double>>& rates, const std::vector<std::string>& targets,
         const std::vector<std::string>& controls, std::size_t pre_weeks, double rho_min, std::size_t max_subset_size,
         std::size_t bootstrap_replicates, std::uint64_t seed, const std::string& start) {
        const auto panel = panel_from(rates, start, 7);
        if (pre_weeks == 0 || pre_weeks >= panel.index.count) {
          throw Error(ErrorCode::PeriodOrderError, "pre_weeks must leave a non-empty intervention period");
        }
        impact::AssessmentConfig ac;
        ac.rho_min = rho_min;
        ac.max_subset_size = max_subset_size;
        ac.bootstrap_replicates = bootstrap_replicates;
        ac.seed = seed;
        const StudyPeriod pre{PeriodKind::pre_intervention, {panel.index.at(0), panel.index.at(pre_weeks)}};
        const StudyPeriod during{PeriodKind::intervention, {panel.index.at(pre_weeks), panel.index.end()}};
        const auto report = impact::assess_rates(panel, LocationSet(LocationRole::target, targets),
                                                 LocationSet(LocationRole::control, controls), pre, during, {}, ac);
        py::list rows;
        for (const auto& e : report.rows) rows.append(estimate_dict(e));
        py::dict out;
        out["rows"] = rows;
        out["cohort"] = report.cohorts.at(0).row ? estimate_dict(report.rows[*report.cohorts[0].row]) : py::dict();
        out["candidate_pairs"] = report.candidate_pairs;
        return out;
      },
      py::arg("rates"), py::arg("targets"), py::arg("controls"), py::arg("pre_weeks"), py::arg("rho_min") = 0.6,
      py::arg("max_subset_size") = 3, py::arg("bootstrap_replicates") = 1000, py::arg("seed") = 0,
      py::arg("start") = "2011-01-03",
      "Pair sweep on already-estimated weekly rates; the last rows form the intervention period.");

  // Study commands: each returns (exit_code, stdout, stderr).
  const auto load = [](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
                       std::optional<std::filesystem::path> out_dir) {
    return study::load_config(config, {seed, std::move(out_dir)});
  };
  m.def(
      "simulate",
      [load](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
             std::optional<std::filesystem::path> out_dir) {
        const auto c = load(config, seed, out_dir);
        return capture([&](auto& o, auto& e) { return study::cmd_simulate(c, o, e); });
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out_dir") = py::none());
  m.def(
      "train",
      [load](const std::filesystem::path& config, bool compare, std::optional<std::uint64_t> seed,
             std::optional<std::filesystem::path> out_dir) {
        const auto c = load(config, seed, out_dir);
        return capture([&](auto& o, auto& e) { return study::cmd_train(c, {compare}, o, e); });
      },
      py::arg("config"), py::arg("compare") = false, py::arg("seed") = py::none(), py::arg("out_dir") = py::none());
  m.def(
      "assess",
      [load](const std::filesystem::path& config, bool train, std::optional<std::uint64_t> seed,
             std::optional<std::filesystem::path> out_dir) {
        const auto c = load(config, seed, out_dir);
        return capture([&](auto& o, auto& e) { return study::cmd_assess(c, {train}, o, e); });
      },
      py::arg("config"), py::arg("train") = false, py::arg("seed") = py::none(), py::arg("out_dir") = py::none());
  m.def(
      "report",
      [](const std::filesystem::path& report) {
        return capture([&](auto& o, auto& e) { return study::cmd_report(report, o, e); });
      },
      py::arg("report"));
}
