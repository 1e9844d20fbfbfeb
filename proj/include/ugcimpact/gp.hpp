#pragma once

// Gaussian Process regression with an additive composite kernel:
//
//   k(x, x') = sum_z k_base(g_z, g_z') + noise_variance * [x and x' are the same observation]
//
// where g_z is the sub-vector of x holding the columns of feature cluster z.
// The prior mean is zero. Hyperparameters are fit by type-II maximum
// likelihood in log space.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ugcimpact/crossval.hpp"
#include "ugcimpact/timeseries.hpp"

namespace ugcimpact::gp {

enum class KernelKind { rational_quadratic, matern52, matern32 };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view name);

/// Disjoint groups of feature columns whose union is every column.
class ClusterPartition {
 public:
  ClusterPartition(std::vector<std::vector<std::size_t>> groups, std::size_t columns);

  /// All columns in one cluster.
  static ClusterPartition single(std::size_t columns);
  /// Cluster by whitespace-separated token count (1..max_tokens, longer terms
  /// join the last cluster). Empty clusters are dropped, order is by token count.
  static ClusterPartition by_token_count(const std::vector<std::string>& terms, std::size_t max_tokens = 4);

  std::size_t size() const { return groups_.size(); }
  std::size_t columns() const { return columns_; }
  const std::vector<std::vector<std::size_t>>& groups() const { return groups_; }
  const std::vector<std::size_t>& group(std::size_t z) const { return groups_[z]; }

  friend bool operator==(const ClusterPartition&, const ClusterPartition&) = default;

 private:
  std::vector<std::vector<std::size_t>> groups_;
  std::size_t columns_ = 0;
};

/// n x m term frequencies over a calendar axis.
struct FeatureMatrix {
  DateIndex index;
  std::vector<std::string> terms;
  Eigen::MatrixXd values;
  ClusterPartition clusters;

  FeatureMatrix(DateIndex index, std::vector<std::string> terms, Eigen::MatrixXd values, ClusterPartition clusters);

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t columns() const { return static_cast<std::size_t>(values.cols()); }
  FeatureMatrix slice(const DateRange& range) const;
};

struct ClusterHyperparameters {
  double signal_variance = 1.0;
  double length_scale = 1.0;
  /// Shape parameter, rational quadratic only.
  double alpha = 1.0;
};

struct KernelSpec {
  KernelKind kind = KernelKind::matern52;
  std::vector<ClusterHyperparameters> clusters;
  double noise_variance = 1.0;

  /// Throws InvalidArgument unless every hyperparameter is finite and positive.
  void validate() const;

  std::size_t parameters_per_cluster() const { return kind == KernelKind::rational_quadratic ? 3 : 2; }
  std::size_t parameter_count() const { return clusters.size() * parameters_per_cluster() + 1; }

  /// Layout: per cluster (log signal variance, log length-scale[, log alpha]), then log noise variance.
  Eigen::VectorXd to_log() const;
  static KernelSpec from_log(KernelKind kind, std::size_t clusters, const Eigen::VectorXd& log_params);
};

/// Base covariance as a function of squared Euclidean distance.
double base_kernel(KernelKind kind, const ClusterHyperparameters& h, double squared_distance);

double kernel_eval(const KernelSpec& spec, const ClusterPartition& partition, std::span<const double> x,
                   std::span<const double> x_prime, bool same_observation);

/// Covariance of one cluster's kernel term between the rows of a and b.
Eigen::MatrixXd cluster_covariance(const KernelSpec& spec, const ClusterPartition& partition, std::size_t z,
                                   const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Signal covariance (sum of cluster terms, no noise) between the rows of a and b.
Eigen::MatrixXd covariance(const KernelSpec& spec, const ClusterPartition& partition, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& b);

/// Signal covariance of x with itself plus noise on the diagonal.
Eigen::MatrixXd training_covariance(const KernelSpec& spec, const ClusterPartition& partition, const Eigen::MatrixXd& x);

/// Cholesky factor of k, adding diagonal jitter 1e-10, 1e-9, ..., 1e-6 if the
/// plain factorization fails. Throws NotPositiveDefinite after the last retry.
struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};
Factorization factorize(const Eigen::MatrixXd& k);

struct LmlResult {
  double value = 0.0;
  /// d value / d log-parameter, same layout as KernelSpec::to_log.
  Eigen::VectorXd gradient;
};

LmlResult log_marginal_likelihood(const KernelSpec& spec, const ClusterPartition& partition, const Eigen::MatrixXd& x,
                                  std::span<const double> y);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Per-column affine map applied to inputs before the kernel.
struct Standardization {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  static Standardization fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// A GP conditioned on training data. Immutable.
class TrainedGP {
 public:
  /// Conditions the prior given by `spec` on (x, y). `x` is raw input; when
  /// `standardization` is set it is applied before the kernel.
  static TrainedGP condition(KernelSpec spec, ClusterPartition partition, Eigen::MatrixXd x, std::vector<double> y,
                             std::vector<std::string> terms = {},
                             std::optional<Standardization> standardization = std::nullopt);

  const KernelSpec& spec() const { return spec_; }
  const ClusterPartition& partition() const { return partition_; }
  const std::vector<std::string>& terms() const { return terms_; }
  /// Raw (unstandardized) training inputs.
  const Eigen::MatrixXd& training_inputs() const { return raw_x_; }
  const std::vector<double>& training_targets() const { return y_; }
  const std::optional<Standardization>& standardization() const { return standardization_; }
  double log_marginal_likelihood() const { return lml_; }
  double jitter() const { return jitter_; }

  /// Posterior mean and variance for each row of x_star (raw inputs).
  std::vector<Prediction> predict(const Eigen::MatrixXd& x_star) const;

 private:
  TrainedGP() = default;

  KernelSpec spec_;
  ClusterPartition partition_{{}, 0};
  std::vector<std::string> terms_;
  Eigen::MatrixXd raw_x_;
  Eigen::MatrixXd x_;
  std::vector<double> y_;
  std::optional<Standardization> standardization_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
  double jitter_ = 0.0;
};

std::vector<Prediction> predict(const TrainedGP& model, const FeatureMatrix& x_star);

struct FitOptions {
  /// Independent optimizations from log-uniform starting points.
  int restarts = 10;
  double init_low = 1e-2;
  double init_high = 1e2;
  int max_iterations = 200;
  double gradient_tolerance = 1e-5;
  bool standardize = false;
  /// Workers for the restarts; 0 = hardware concurrency.
  unsigned threads = 1;
};

/// Best of `restarts` L-BFGS maximizations of the log marginal likelihood.
/// Deterministic given seed. Throws OptimizationFailed if no restart yields a
/// positive-definite model.
TrainedGP fit(const Eigen::MatrixXd& x, const ClusterPartition& partition, std::span<const double> y, KernelKind kind,
              const FitOptions& options, std::uint64_t seed, std::vector<std::string> terms = {});

TrainedGP fit(const FeatureMatrix& x, const RateSeries& y, KernelKind kind, const FitOptions& options, std::uint64_t seed);

/// Blocked k-fold evaluation with contiguous time blocks. Predictions are
/// clamped at zero before scoring.
CvReport cross_validate(const Eigen::MatrixXd& x, const ClusterPartition& partition, std::span<const double> y,
                        std::size_t folds, KernelKind kind, const FitOptions& options, std::uint64_t seed);

}  // namespace ugcimpact::gp
