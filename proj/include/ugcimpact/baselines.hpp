#pragma once

// Ridge and elastic-net baselines fit by cyclic coordinate descent.
//
// Features are standardized (population sd) before fitting and the weights
// mapped back to the original scale. The objective minimized, in the
// standardized space, is
//
//   1/2 ||y - Z b - b0||^2 + lambda * (mix * ||b||_1 + (1 - mix)/2 * ||b||^2)
//
// with the intercept b0 unpenalized. mix = 0 is ridge, mix = 1 is the lasso.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ugcimpact/crossval.hpp"

namespace ugcimpact::baselines {

struct Regularization {
  double lambda = 0.0;
  double mixing = 0.0;
};

struct LinearModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  Regularization regularization;
};

struct FitDiagnostics {
  std::size_t sweeps = 0;
  bool converged = false;
  double last_change = 0.0;
  /// Objective after each full sweep.
  std::vector<double> objective_trace;
};

struct LinearFit {
  LinearModel model;
  FitDiagnostics diagnostics;
};

struct LinearFitOptions {
  /// Stop when the largest coefficient change in a sweep is below
  /// tolerance * max(1, largest |coefficient|).
  double tolerance = 1e-12;
  std::size_t max_sweeps = 100000;
  /// Optional warm start, in original-scale weights.
  const Eigen::VectorXd* warm_start = nullptr;
};

/// Throws NonConvergence (with sweep count and last change in the message)
/// if the tolerance is not reached within max_sweeps.
LinearFit fit_linear(const Eigen::MatrixXd& x, std::span<const double> y, Regularization reg,
                     const LinearFitOptions& options = {});

/// x * w + b, unclamped.
std::vector<double> predict_linear(const LinearModel& model, const Eigen::MatrixXd& x);

/// Objective value for `model` on (x, y), in the standardized parameterization.
double objective(const Eigen::MatrixXd& x, std::span<const double> y, const LinearModel& model);

/// Smallest lambda at which the lasso (mix = 1) solution is all zero.
double lambda_max(const Eigen::MatrixXd& x, std::span<const double> y);

/// `count` log-spaced values from lambda_max(x, y) / max(mix, 1e-3) down to
/// that value times `ratio`.
std::vector<double> lambda_grid(const Eigen::MatrixXd& x, std::span<const double> y, double mixing,
                                std::size_t count = 50, double ratio = 1e-4);

struct Selection {
  Regularization regularization;
  CvReport cv;
};

/// Picks (lambda, mix) minimizing mean blocked-CV MAE over the lambda grid
/// for every mix in `mixings`. Predictions are clamped at zero.
Selection select_regularization(const Eigen::MatrixXd& x, std::span<const double> y, std::span<const double> mixings,
                                std::size_t folds, std::size_t grid_size = 50);

/// Mixing grid for elastic net.
inline constexpr double kElasticNetMixings[] = {0.0, 0.25, 0.5, 0.75, 1.0};
inline constexpr double kRidgeMixings[] = {0.0};

}  // namespace ugcimpact::baselines
