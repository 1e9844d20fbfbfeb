#include "ugcimpact/lbfgs.hpp"

#include <cmath>
#include <deque>

#include "ugcimpact/error.hpp"

namespace ugcimpact {

LbfgsResult minimize_lbfgs(const Objective& objective, Eigen::VectorXd x0, const LbfgsOptions& options) {
  const Eigen::Index dim = x0.size();
  LbfgsResult result;
  result.x = std::move(x0);
  Eigen::VectorXd grad(dim);
  if (!objective(result.x, result.value, grad) || !std::isfinite(result.value) || !grad.allFinite()) {
    throw Error(ErrorCode::OptimizationFailed, "objective cannot be evaluated at the starting point");
  }

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd x_new(dim);
  Eigen::VectorXd g_new(dim);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter;
    if (grad.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) {
      result.converged = true;
      return result;
    }

    // Two-loop recursion.
    Eigen::VectorXd q = grad;
    const std::size_t m = s_hist.size();
    std::vector<double> a(m);
    for (std::size_t i = m; i-- > 0;) {
      a[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= a[i] * y_hist[i];
    }
    if (m > 0) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < m; ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(q);
      q += (a[i] - b) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      // Not a descent direction: reset memory and fall back to steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -grad;
      slope = grad.dot(dir);
    }

    double step = 1.0;
    const double longest = dir.lpNorm<Eigen::Infinity>();
    if (longest * step > options.max_step) step = options.max_step / longest;

    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < options.max_line_search_steps; ++ls) {
      x_new = result.x + step * dir;
      if (objective(x_new, f_new, g_new) && std::isfinite(f_new) && g_new.allFinite() &&
          f_new <= result.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No progress possible along this direction; treat as converged if memory was already empty.
      result.converged = s_hist.empty();
      if (!s_hist.empty()) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        continue;
      }
      return result;
    }

    Eigen::VectorXd s = x_new - result.x;
    Eigen::VectorXd y = g_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    const double change = std::abs(result.value - f_new);
    const double scale = std::max(1.0, std::abs(result.value));
    result.x = x_new;
    result.value = f_new;
    grad = g_new;
    if (change <= options.relative_tolerance * scale) {
      result.iterations = iter + 1;
      result.converged = true;
      return result;
    }
  }
  result.iterations = options.max_iterations;
  return result;
}

}  // namespace ugcimpact
