#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ugcimpact {

struct FoldMetrics {
  std::size_t fold = 0;
  /// Held-out rows [begin, end).
  std::size_t begin = 0;
  std::size_t end = 0;
  double mae = 0.0;
  /// Unset when predictions or targets are constant over the fold.
  std::optional<double> pearson_r;
};

struct CvReport {
  std::vector<FoldMetrics> folds;
  double mean_mae = 0.0;
  /// Mean over folds with a defined correlation; unset if none has one.
  std::optional<double> mean_r;
  std::size_t flagged_folds = 0;
};

/// Contiguous [begin, end) blocks; the first n % k blocks get one extra row.
/// Requires n >= 2k.
std::vector<std::pair<std::size_t, std::size_t>> blocked_folds(std::size_t n, std::size_t k);

using FitPredict = std::function<std::vector<double>(std::size_t fold, const Eigen::MatrixXd& x_train,
                                                     std::span<const double> y_train, const Eigen::MatrixXd& x_test)>;

/// Trains on all rows outside each block and scores predictions on the block.
CvReport cross_validate(const Eigen::MatrixXd& x, std::span<const double> y, std::size_t k, const FitPredict& fit_predict);

double mean_absolute_error(std::span<const double> predicted, std::span<const double> actual);

}  // namespace ugcimpact
