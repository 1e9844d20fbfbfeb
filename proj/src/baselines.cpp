#include "ugcimpact/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ugcimpact/error.hpp"

namespace ugcimpact::baselines {
namespace {

struct Scaling {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;  // 0 marks a constant column
};

Scaling column_scaling(const Eigen::MatrixXd& x) {
  Scaling s;
  s.center = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    s.scale[c] = std::sqrt((x.col(c).array() - s.center[c]).square().mean());
  }
  return s;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

double penalty(const Eigen::VectorXd& beta, const Regularization& reg) {
  return reg.lambda * (reg.mixing * beta.lpNorm<1>() + 0.5 * (1.0 - reg.mixing) * beta.squaredNorm());
}

void check_inputs(const Eigen::MatrixXd& x, std::span<const double> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorCode::DimensionMismatch, "linear fit: targets do not match rows");
  }
  if (x.rows() < 2) throw Error(ErrorCode::InvalidArgument, "linear fit needs at least 2 observations");
}

}  // namespace

LinearFit fit_linear(const Eigen::MatrixXd& x, std::span<const double> y, Regularization reg, const LinearFitOptions& options) {
  check_inputs(x, y);
  if (!(reg.lambda >= 0.0) || !std::isfinite(reg.lambda)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  if (!(reg.mixing >= 0.0 && reg.mixing <= 1.0)) throw Error(ErrorCode::InvalidArgument, "mixing must lie in [0, 1]");

  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  const double nd = static_cast<double>(n);
  const Scaling sc = column_scaling(x);
  Eigen::MatrixXd z(n, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    if (sc.scale[c] > 0.0) {
      z.col(c) = (x.col(c).array() - sc.center[c]) / sc.scale[c];
    } else {
      z.col(c).setZero();
    }
  }
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const double y_mean = yv.mean();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  if (options.warm_start != nullptr && options.warm_start->size() == m) {
    beta = options.warm_start->cwiseProduct(sc.scale);
  }
  Eigen::VectorXd resid = (yv.array() - y_mean).matrix() - z * beta;

  const double l1 = reg.lambda * reg.mixing;
  const double denom = nd + reg.lambda * (1.0 - reg.mixing);
  FitDiagnostics diag;
  while (diag.sweeps < options.max_sweeps) {
    ++diag.sweeps;
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (sc.scale[j] == 0.0) continue;
      const double old = beta[j];
      const double rho = z.col(j).dot(resid) + nd * old;
      const double updated = soft_threshold(rho, l1) / denom;
      const double delta = updated - old;
      if (delta != 0.0) {
        resid.noalias() -= delta * z.col(j);
        beta[j] = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    diag.objective_trace.push_back(0.5 * resid.squaredNorm() + penalty(beta, reg));
    diag.last_change = max_change;
    const double size = std::max(1.0, beta.lpNorm<Eigen::Infinity>());
    if (max_change <= options.tolerance * size) {
      diag.converged = true;
      break;
    }
  }
  if (!diag.converged) {
    std::ostringstream msg;
    msg << "coordinate descent did not converge after " << diag.sweeps << " sweeps (last change "
        << diag.last_change << ", lambda " << reg.lambda << ", mixing " << reg.mixing << ")";
    throw Error(ErrorCode::NonConvergence, msg.str());
  }

  LinearFit out;
  out.model.regularization = reg;
  out.model.weights = Eigen::VectorXd::Zero(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (sc.scale[j] > 0.0) out.model.weights[j] = beta[j] / sc.scale[j];
  }
  out.model.intercept = y_mean - out.model.weights.dot(sc.center);
  out.diagnostics = std::move(diag);
  return out;
}

std::vector<double> predict_linear(const LinearModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.weights.size()) {
    throw Error(ErrorCode::DimensionMismatch, "linear model expects " + std::to_string(model.weights.size()) +
                                                  " columns, got " + std::to_string(x.cols()));
  }
  const Eigen::VectorXd p = (x * model.weights).array() + model.intercept;
  return std::vector<double>(p.data(), p.data() + p.size());
}

double objective(const Eigen::MatrixXd& x, std::span<const double> y, const LinearModel& model) {
  check_inputs(x, y);
  const Scaling sc = column_scaling(x);
  const auto pred = predict_linear(model, x);
  double rss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) rss += (y[i] - pred[i]) * (y[i] - pred[i]);
  return 0.5 * rss + penalty(model.weights.cwiseProduct(sc.scale), model.regularization);
}

double lambda_max(const Eigen::MatrixXd& x, std::span<const double> y) {
  check_inputs(x, y);
  const Scaling sc = column_scaling(x);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), x.rows());
  const Eigen::VectorXd yc = yv.array() - yv.mean();
  double best = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (sc.scale[c] == 0.0) continue;
    const double g = ((x.col(c).array() - sc.center[c]) / sc.scale[c]).matrix().dot(yc);
    best = std::max(best, std::abs(g));
  }
  return best;
}

std::vector<double> lambda_grid(const Eigen::MatrixXd& x, std::span<const double> y, double mixing, std::size_t count,
                                double ratio) {
  if (count < 2) throw Error(ErrorCode::InvalidArgument, "lambda grid needs at least 2 values");
  double top = lambda_max(x, y) / std::max(mixing, 1e-3);
  if (top <= 0.0) top = 1.0;
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(count - 1);
    grid[i] = top * std::pow(ratio, t);
  }
  return grid;
}

Selection select_regularization(const Eigen::MatrixXd& x, std::span<const double> y, std::span<const double> mixings,
                                std::size_t folds, std::size_t grid_size) {
  check_inputs(x, y);
  if (mixings.empty()) throw Error(ErrorCode::InvalidArgument, "no mixing values to select from");
  const auto blocks = blocked_folds(y.size(), folds);

  LinearFitOptions path_options;
  path_options.tolerance = 1e-7;
  path_options.max_sweeps = 20000;

  double best_score = std::numeric_limits<double>::infinity();
  Regularization best{};
  for (double mix : mixings) {
    const auto grid = lambda_grid(x, y, mix, grid_size);
    std::vector<double> score(grid.size(), 0.0);
    for (const auto& [begin, end] : blocks) {
      const auto n = static_cast<Eigen::Index>(y.size());
      const auto test_n = static_cast<Eigen::Index>(end - begin);
      Eigen::MatrixXd x_train(n - test_n, x.cols());
      std::vector<double> y_train;
      Eigen::Index row = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(i) >= begin && static_cast<std::size_t>(i) < end) continue;
        x_train.row(row++) = x.row(i);
        y_train.push_back(y[static_cast<std::size_t>(i)]);
      }
      const Eigen::MatrixXd x_test = x.middleRows(static_cast<Eigen::Index>(begin), test_n);
      const auto actual = y.subspan(begin, end - begin);
      Eigen::VectorXd warm;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        try {
          LinearFitOptions opt = path_options;
          opt.warm_start = warm.size() ? &warm : nullptr;
          const auto fitted = fit_linear(x_train, y_train, {grid[g], mix}, opt);
          warm = fitted.model.weights;
          auto pred = predict_linear(fitted.model, x_test);
          for (double& p : pred) p = std::max(0.0, p);
          score[g] += mean_absolute_error(pred, actual);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NonConvergence) throw;
          score[g] = std::numeric_limits<double>::infinity();
        }
      }
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (score[g] < best_score) {
        best_score = score[g];
        best = {grid[g], mix};
      }
    }
  }
  if (!std::isfinite(best_score)) {
    throw Error(ErrorCode::NonConvergence, "no regularization setting converged on every fold");
  }

  Selection sel;
  sel.regularization = best;
  sel.cv = cross_validate(x, y, folds,
                          [&](std::size_t, const Eigen::MatrixXd& xt, std::span<const double> yt, const Eigen::MatrixXd& xs) {
                            auto pred = predict_linear(fit_linear(xt, yt, best, path_options).model, xs);
                            for (double& p : pred) p = std::max(0.0, p);
                            return pred;
                          });
  return sel;
}

}  // namespace ugcimpact::baselines
