#include "ugcimpact/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "ugcimpact/error.hpp"
#include "ugcimpact/lbfgs.hpp"
#include "ugcimpact/parallel.hpp"
#include "ugcimpact/random.hpp"

namespace ugcimpact::gp {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::rational_quadratic: return "rational_quadratic";
    case KernelKind::matern52: return "matern52";
    case KernelKind::matern32: return "matern32";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "rational_quadratic") return KernelKind::rational_quadratic;
  if (name == "matern52") return KernelKind::matern52;
  if (name == "matern32") return KernelKind::matern32;
  throw Error(ErrorCode::InvalidArgument, "unknown kernel kind '" + std::string(name) +
                                              "' (expected rational_quadratic, matern52 or matern32)");
}

// ---------------------------------------------------------------------------
// Partition and feature matrix

ClusterPartition::ClusterPartition(std::vector<std::vector<std::size_t>> groups, std::size_t columns)
    : groups_(std::move(groups)), columns_(columns) {
  if (columns_ == 0 && groups_.empty()) return;  // placeholder state
  if (groups_.empty()) throw Error(ErrorCode::InvalidArgument, "cluster partition needs at least one cluster");
  std::vector<int> seen(columns_, 0);
  for (auto& g : groups_) {
    if (g.empty()) throw Error(ErrorCode::InvalidArgument, "cluster partition has an empty cluster");
    std::sort(g.begin(), g.end());
    for (std::size_t c : g) {
      if (c >= columns_) throw Error(ErrorCode::InvalidArgument, "cluster column index out of range");
      if (seen[c]++) throw Error(ErrorCode::InvalidArgument, "column " + std::to_string(c) + " is in two clusters");
    }
  }
  for (std::size_t c = 0; c < columns_; ++c) {
    if (!seen[c]) throw Error(ErrorCode::InvalidArgument, "column " + std::to_string(c) + " is in no cluster");
  }
}

ClusterPartition ClusterPartition::single(std::size_t columns) {
  std::vector<std::size_t> all(columns);
  for (std::size_t i = 0; i < columns; ++i) all[i] = i;
  return ClusterPartition({all}, columns);
}

ClusterPartition ClusterPartition::by_token_count(const std::vector<std::string>& terms, std::size_t max_tokens) {
  std::vector<std::vector<std::size_t>> groups(std::max<std::size_t>(max_tokens, 1));
  for (std::size_t i = 0; i < terms.size(); ++i) {
    std::istringstream tokens(terms[i]);
    std::size_t count = 0;
    for (std::string t; tokens >> t;) ++count;
    count = std::clamp<std::size_t>(count, 1, groups.size());
    groups[count - 1].push_back(i);
  }
  std::erase_if(groups, [](const auto& g) { return g.empty(); });
  return ClusterPartition(std::move(groups), terms.size());
}

FeatureMatrix::FeatureMatrix(DateIndex index_, std::vector<std::string> terms_, Eigen::MatrixXd values_,
                             ClusterPartition clusters_)
    : index(index_), terms(std::move(terms_)), values(std::move(values_)), clusters(std::move(clusters_)) {
  if (static_cast<std::size_t>(values.rows()) != index.count) {
    throw Error(ErrorCode::DimensionMismatch, "feature matrix rows do not match its date index");
  }
  if (static_cast<std::size_t>(values.cols()) != terms.size() || clusters.columns() != terms.size()) {
    throw Error(ErrorCode::DimensionMismatch, "feature matrix columns, terms and clusters disagree");
  }
  if (!values.allFinite() || (values.array() < 0.0).any()) {
    throw Error(ErrorCode::InvalidArgument, "term frequencies must be finite and non-negative");
  }
}

FeatureMatrix FeatureMatrix::slice(const DateRange& range) const {
  std::size_t first = index.count;
  std::size_t last = 0;
  for (std::size_t i = 0; i < index.count; ++i) {
    if (range.contains(index.at(i))) {
      first = std::min(first, i);
      last = i + 1;
    }
  }
  if (first >= last) throw Error(ErrorCode::EmptyOverlap, "no feature rows fall in the requested period");
  return FeatureMatrix(DateIndex(index.at(first), index.step_days, last - first), terms,
                       values.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(last - first)),
                       clusters);
}

// ---------------------------------------------------------------------------
// Kernel

void KernelSpec::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (clusters.empty()) throw Error(ErrorCode::InvalidArgument, "kernel spec needs one block per cluster");
  for (const auto& h : clusters) {
    if (!ok(h.signal_variance) || !ok(h.length_scale) || !ok(h.alpha)) {
      throw Error(ErrorCode::InvalidArgument, "kernel hyperparameters must be positive and finite");
    }
  }
  if (!ok(noise_variance)) throw Error(ErrorCode::InvalidArgument, "noise variance must be positive and finite");
}

Eigen::VectorXd KernelSpec::to_log() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (const auto& h : clusters) {
    p[k++] = std::log(h.signal_variance);
    p[k++] = std::log(h.length_scale);
    if (kind == KernelKind::rational_quadratic) p[k++] = std::log(h.alpha);
  }
  p[k] = std::log(noise_variance);
  return p;
}

KernelSpec KernelSpec::from_log(KernelKind kind, std::size_t clusters, const Eigen::VectorXd& p) {
  KernelSpec spec;
  spec.kind = kind;
  if (static_cast<std::size_t>(p.size()) != clusters * spec.parameters_per_cluster() + 1) {
    throw Error(ErrorCode::DimensionMismatch, "log-parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for (std::size_t z = 0; z < clusters; ++z) {
    ClusterHyperparameters h;
    h.signal_variance = std::exp(p[k++]);
    h.length_scale = std::exp(p[k++]);
    if (kind == KernelKind::rational_quadratic) h.alpha = std::exp(p[k++]);
    spec.clusters.push_back(h);
  }
  spec.noise_variance = std::exp(p[k]);
  return spec;
}

double base_kernel(KernelKind kind, const ClusterHyperparameters& h, double d2) {
  switch (kind) {
    case KernelKind::matern52: {
      const double s = std::sqrt(5.0 * d2) / h.length_scale;
      return h.signal_variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
    }
    case KernelKind::matern32: {
      const double s = std::sqrt(3.0 * d2) / h.length_scale;
      return h.signal_variance * (1.0 + s) * std::exp(-s);
    }
    case KernelKind::rational_quadratic: {
      const double u = d2 / (2.0 * h.alpha * h.length_scale * h.length_scale);
      return h.signal_variance * std::pow(1.0 + u, -h.alpha);
    }
  }
  return 0.0;
}

namespace {

void check_spec(const KernelSpec& spec, const ClusterPartition& partition) {
  spec.validate();
  if (spec.clusters.size() != partition.size()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel spec has " + std::to_string(spec.clusters.size()) +
                                                  " cluster blocks for a " + std::to_string(partition.size()) +
                                                  "-cluster partition");
  }
}

Eigen::MatrixXd squared_distances(const std::vector<std::size_t>& cols, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c : cols) {
        const double diff = a(i, static_cast<Eigen::Index>(c)) - b(j, static_cast<Eigen::Index>(c));
        s += diff * diff;
      }
      d(i, j) = s;
    }
  }
  return d;
}

Eigen::MatrixXd apply_base(KernelKind kind, const ClusterHyperparameters& h, const Eigen::MatrixXd& d2) {
  return d2.unaryExpr([&](double v) { return base_kernel(kind, h, v); });
}

// d k / d log(length-scale) as a function of squared distance.
double dlog_length(KernelKind kind, const ClusterHyperparameters& h, double d2) {
  switch (kind) {
    case KernelKind::matern52: {
      const double s = std::sqrt(5.0 * d2) / h.length_scale;
      return h.signal_variance * s * s * (1.0 + s) * std::exp(-s) / 3.0;
    }
    case KernelKind::matern32: {
      const double s = std::sqrt(3.0 * d2) / h.length_scale;
      return h.signal_variance * s * s * std::exp(-s);
    }
    case KernelKind::rational_quadratic: {
      const double l2 = h.length_scale * h.length_scale;
      const double u = d2 / (2.0 * h.alpha * l2);
      return h.signal_variance * (d2 / l2) * std::pow(1.0 + u, -h.alpha - 1.0);
    }
  }
  return 0.0;
}

// d k / d log(alpha), rational quadratic only.
double dlog_alpha(const ClusterHyperparameters& h, double d2) {
  const double u = d2 / (2.0 * h.alpha * h.length_scale * h.length_scale);
  const double k = h.signal_variance * std::pow(1.0 + u, -h.alpha);
  return h.alpha * k * (u / (1.0 + u) - std::log1p(u));
}

struct DistanceCache {
  std::vector<Eigen::MatrixXd> d2;

  DistanceCache(const ClusterPartition& partition, const Eigen::MatrixXd& x) {
    for (const auto& g : partition.groups()) d2.push_back(squared_distances(g, x, x));
  }
};

LmlResult lml_cached(const KernelSpec& spec, const DistanceCache& cache, std::span<const double> y) {
  const auto n = static_cast<Eigen::Index>(y.size());
  std::vector<Eigen::MatrixXd> parts;
  parts.reserve(spec.clusters.size());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t z = 0; z < spec.clusters.size(); ++z) {
    parts.push_back(apply_base(spec.kind, spec.clusters[z], cache.d2[z]));
    k += parts.back();
  }
  k.diagonal().array() += spec.noise_variance;

  const Factorization f = factorize(k);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::VectorXd alpha = f.llt.solve(yv);
  const Eigen::MatrixXd& l = f.llt.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) log_det += 2.0 * std::log(l(i, i));

  LmlResult out;
  out.value = -0.5 * yv.dot(alpha) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // dL/dp = 1/2 tr((alpha alpha^T - K^-1) dK/dp)
  Eigen::MatrixXd w = f.llt.solve(Eigen::MatrixXd::Identity(n, n));
  w = alpha * alpha.transpose() - w;

  out.gradient.resize(static_cast<Eigen::Index>(spec.parameter_count()));
  Eigen::Index p = 0;
  for (std::size_t z = 0; z < spec.clusters.size(); ++z) {
    const auto& h = spec.clusters[z];
    out.gradient[p++] = 0.5 * (w.array() * parts[z].array()).sum();
    const Eigen::MatrixXd dl = cache.d2[z].unaryExpr([&](double v) { return dlog_length(spec.kind, h, v); });
    out.gradient[p++] = 0.5 * (w.array() * dl.array()).sum();
    if (spec.kind == KernelKind::rational_quadratic) {
      const Eigen::MatrixXd da = cache.d2[z].unaryExpr([&](double v) { return dlog_alpha(h, v); });
      out.gradient[p++] = 0.5 * (w.array() * da.array()).sum();
    }
  }
  out.gradient[p] = 0.5 * spec.noise_variance * w.trace();
  return out;
}

}  // namespace

double kernel_eval(const KernelSpec& spec, const ClusterPartition& partition, std::span<const double> x,
                   std::span<const double> x_prime, bool same_observation) {
  check_spec(spec, partition);
  if (x.size() != partition.columns() || x_prime.size() != partition.columns()) {
    throw Error(ErrorCode::DimensionMismatch, "feature rows do not match the cluster partition");
  }
  double k = 0.0;
  for (std::size_t z = 0; z < partition.size(); ++z) {
    double d2 = 0.0;
    for (std::size_t c : partition.group(z)) d2 += (x[c] - x_prime[c]) * (x[c] - x_prime[c]);
    k += base_kernel(spec.kind, spec.clusters[z], d2);
  }
  if (same_observation) k += spec.noise_variance;
  return k;
}

Eigen::MatrixXd cluster_covariance(const KernelSpec& spec, const ClusterPartition& partition, std::size_t z,
                                   const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  check_spec(spec, partition);
  if (static_cast<std::size_t>(a.cols()) != partition.columns() || static_cast<std::size_t>(b.cols()) != partition.columns()) {
    throw Error(ErrorCode::DimensionMismatch, "feature columns do not match the cluster partition");
  }
  return apply_base(spec.kind, spec.clusters.at(z), squared_distances(partition.group(z), a, b));
}

Eigen::MatrixXd covariance(const KernelSpec& spec, const ClusterPartition& partition, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (std::size_t z = 0; z < partition.size(); ++z) k += cluster_covariance(spec, partition, z, a, b);
  return k;
}

Eigen::MatrixXd training_covariance(const KernelSpec& spec, const ClusterPartition& partition, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd k = covariance(spec, partition, x, x);
  k.diagonal().array() += spec.noise_variance;
  return k;
}

Factorization factorize(const Eigen::MatrixXd& k) {
  Factorization f;
  if (!k.allFinite()) throw Error(ErrorCode::NotPositiveDefinite, "covariance has non-finite entries");
  f.llt.compute(k);
  if (f.llt.info() == Eigen::Success) return f;
  for (double jitter = 1e-10; jitter <= 1e-6 * 1.0001; jitter *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    f.llt.compute(kj);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = jitter;
      return f;
    }
  }
  throw Error(ErrorCode::NotPositiveDefinite, "covariance is not positive definite after jitter up to 1e-6");
}

LmlResult log_marginal_likelihood(const KernelSpec& spec, const ClusterPartition& partition, const Eigen::MatrixXd& x,
                                  std::span<const double> y) {
  check_spec(spec, partition);
  if (static_cast<std::size_t>(x.rows()) != y.size() || static_cast<std::size_t>(x.cols()) != partition.columns()) {
    throw Error(ErrorCode::DimensionMismatch, "inputs, targets and partition disagree");
  }
  return lml_cached(spec, DistanceCache(partition, x), y);
}

// ---------------------------------------------------------------------------
// Conditioning and prediction

Standardization Standardization::fit(const Eigen::MatrixXd& x) {
  Standardization s;
  s.center = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double sd = std::sqrt((x.col(c).array() - s.center[c]).square().mean());
    s.scale[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

TrainedGP TrainedGP::condition(KernelSpec spec, ClusterPartition partition, Eigen::MatrixXd x, std::vector<double> y,
                               std::vector<std::string> terms, std::optional<Standardization> standardization) {
  check_spec(spec, partition);
  if (static_cast<std::size_t>(x.rows()) != y.size() || static_cast<std::size_t>(x.cols()) != partition.columns()) {
    throw Error(ErrorCode::DimensionMismatch, "inputs, targets and partition disagree");
  }
  TrainedGP m;
  m.spec_ = std::move(spec);
  m.partition_ = std::move(partition);
  m.terms_ = std::move(terms);
  m.standardization_ = std::move(standardization);
  m.x_ = m.standardization_ ? m.standardization_->apply(x) : x;
  m.raw_x_ = std::move(x);
  m.y_ = std::move(y);

  const Eigen::MatrixXd k = training_covariance(m.spec_, m.partition_, m.x_);
  Factorization f = factorize(k);
  m.jitter_ = f.jitter;
  m.llt_ = std::move(f.llt);
  const auto n = static_cast<Eigen::Index>(m.y_.size());
  const Eigen::Map<const Eigen::VectorXd> yv(m.y_.data(), n);
  m.alpha_ = m.llt_.solve(yv);
  const Eigen::MatrixXd& l = m.llt_.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) log_det += 2.0 * std::log(l(i, i));
  m.lml_ = -0.5 * yv.dot(m.alpha_) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  return m;
}

std::vector<Prediction> TrainedGP::predict(const Eigen::MatrixXd& x_star) const {
  if (static_cast<std::size_t>(x_star.cols()) != partition_.columns()) {
    throw Error(ErrorCode::DimensionMismatch, "prediction inputs have " + std::to_string(x_star.cols()) +
                                                  " columns, model expects " + std::to_string(partition_.columns()));
  }
  const Eigen::MatrixXd xs = standardization_ ? standardization_->apply(x_star) : x_star;
  const Eigen::MatrixXd k_star = covariance(spec_, partition_, xs, x_);  // n* x n
  const Eigen::VectorXd mean = k_star * alpha_;
  const Eigen::MatrixXd v = llt_.matrixL().solve(k_star.transpose());
  double prior = 0.0;
  for (const auto& h : spec_.clusters) prior += h.signal_variance;
  std::vector<Prediction> out(static_cast<std::size_t>(xs.rows()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = {mean[i], std::max(0.0, prior - v.col(i).squaredNorm())};
  }
  return out;
}

std::vector<Prediction> predict(const TrainedGP& model, const FeatureMatrix& x_star) {
  if (!model.terms().empty() && model.terms() != x_star.terms) {
    throw Error(ErrorCode::DimensionMismatch, "prediction features use a different term layout than training");
  }
  if (!(x_star.clusters == model.partition())) {
    throw Error(ErrorCode::DimensionMismatch, "prediction features use a different cluster partition than training");
  }
  return model.predict(x_star.values);
}

// ---------------------------------------------------------------------------
// Fitting

TrainedGP fit(const Eigen::MatrixXd& x, const ClusterPartition& partition, std::span<const double> y, KernelKind kind,
              const FitOptions& options, std::uint64_t seed, std::vector<std::string> terms) {
  if (static_cast<std::size_t>(x.rows()) != y.size() || static_cast<std::size_t>(x.cols()) != partition.columns()) {
    throw Error(ErrorCode::DimensionMismatch, "inputs, targets and partition disagree");
  }
  if (y.size() < partition.size() + 2) {
    throw Error(ErrorCode::InvalidArgument, "GP fit needs at least Z + 2 observations");
  }
  if (options.restarts < 1) throw Error(ErrorCode::InvalidArgument, "GP fit needs at least one restart");

  std::optional<Standardization> standardization;
  if (options.standardize) standardization = Standardization::fit(x);
  const Eigen::MatrixXd xs = standardization ? standardization->apply(x) : x;
  const DistanceCache cache(partition, xs);

  KernelSpec shape;
  shape.kind = kind;
  shape.clusters.resize(partition.size());
  const auto dim = static_cast<Eigen::Index>(shape.parameter_count());

  // Starting points drawn serially so the result does not depend on thread count.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(std::log(options.init_low), std::log(options.init_high));
  std::vector<Eigen::VectorXd> starts;
  for (int r = 0; r < options.restarts; ++r) {
    Eigen::VectorXd p(dim);
    for (Eigen::Index i = 0; i < dim; ++i) p[i] = unif(rng);
    starts.push_back(p);
  }

  constexpr double kLogBound = 25.0;
  const Objective objective = [&](const Eigen::VectorXd& p, double& value, Eigen::VectorXd& grad) {
    if ((p.array().abs() > kLogBound).any()) return false;
    try {
      const LmlResult r = lml_cached(KernelSpec::from_log(kind, partition.size(), p), cache, y);
      value = -r.value;
      grad = -r.gradient;
      return true;
    } catch (const Error&) {
      return false;
    }
  };

  LbfgsOptions lbfgs;
  lbfgs.max_iterations = options.max_iterations;
  lbfgs.gradient_tolerance = options.gradient_tolerance;

  std::vector<std::optional<LbfgsResult>> results(starts.size());
  parallel_for(starts.size(), options.threads, [&](std::size_t r) {
    try {
      results[r] = minimize_lbfgs(objective, starts[r], lbfgs);
    } catch (const Error&) {
      results[r].reset();
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (!results[r]) continue;
    if (!best || results[r]->value < results[*best]->value) best = r;
  }
  if (!best) throw Error(ErrorCode::OptimizationFailed, "no restart produced a positive-definite model");

  return TrainedGP::condition(KernelSpec::from_log(kind, partition.size(), results[*best]->x), partition, x,
                              std::vector<double>(y.begin(), y.end()), std::move(terms), std::move(standardization));
}

TrainedGP fit(const FeatureMatrix& x, const RateSeries& y, KernelKind kind, const FitOptions& options, std::uint64_t seed) {
  if (!(x.index == y.index())) throw Error(ErrorCode::NonAlignable, "features and rates cover different dates");
  return fit(x.values, x.clusters, y.values(), kind, options, seed, x.terms);
}

CvReport cross_validate(const Eigen::MatrixXd& x, const ClusterPartition& partition, std::span<const double> y,
                        std::size_t folds, KernelKind kind, const FitOptions& options, std::uint64_t seed) {
  return ugcimpact::cross_validate(
      x, y, folds,
      [&](std::size_t fold, const Eigen::MatrixXd& x_train, std::span<const double> y_train, const Eigen::MatrixXd& x_test) {
        const auto model = fit(x_train, partition, y_train, kind, options, derive_seed(seed, {fold}));
        std::vector<double> out;
        for (const auto& p : model.predict(x_test)) out.push_back(std::max(0.0, p.mean));
        return out;
      });
}

}  // namespace ugcimpact::gp
