#pragma once

#include <functional>

#include <Eigen/Dense>

namespace ugcimpact {

struct LbfgsOptions {
  int max_iterations = 200;
  int memory = 10;
  /// Stop when the infinity norm of the gradient drops below this.
  double gradient_tolerance = 1e-6;
  /// Stop when |f_k - f_{k+1}| <= tol * max(1, |f_k|).
  double relative_tolerance = 1e-10;
  int max_line_search_steps = 40;
  /// Largest change of any coordinate in a single step.
  double max_step = 5.0;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Objective evaluation: fills value and gradient, returns false when the
/// point is infeasible (the line search then backtracks).
using Objective = std::function<bool(const Eigen::VectorXd& x, double& value, Eigen::VectorXd& gradient)>;

/// Limited-memory BFGS minimization with a backtracking Armijo line search.
/// Throws OptimizationFailed if the starting point cannot be evaluated.
LbfgsResult minimize_lbfgs(const Objective& objective, Eigen::VectorXd x0, const LbfgsOptions& options = {});

}  // namespace ugcimpact
