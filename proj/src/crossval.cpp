#include "ugcimpact/crossval.hpp"

#include <cmath>
#include <string>

#include "ugcimpact/error.hpp"
#include "ugcimpact/timeseries.hpp"

namespace ugcimpact {

std::vector<std::pair<std::size_t, std::size_t>> blocked_folds(std::size_t n, std::size_t k) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "cross-validation needs at least 2 folds");
  if (n < 2 * k) {
    throw Error(ErrorCode::InvalidArgument,
                "cross-validation needs at least 2 rows per fold (n = " + std::to_string(n) + ", k = " + std::to_string(k) + ")");
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t begin = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

double mean_absolute_error(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "MAE needs equal-length non-empty sequences");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += std::abs(predicted[i] - actual[i]);
  return s / static_cast<double>(predicted.size());
}

CvReport cross_validate(const Eigen::MatrixXd& x, std::span<const double> y, std::size_t k, const FitPredict& fit_predict) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != n) throw Error(ErrorCode::DimensionMismatch, "cross-validation: targets do not match rows");
  CvReport report;
  double r_sum = 0.0;
  std::size_t r_count = 0;
  const auto folds = blocked_folds(n, k);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto [begin, end] = folds[f];
    const auto test_n = static_cast<Eigen::Index>(end - begin);
    const auto train_n = static_cast<Eigen::Index>(n) - test_n;
    Eigen::MatrixXd x_train(train_n, x.cols());
    std::vector<double> y_train;
    y_train.reserve(static_cast<std::size_t>(train_n));
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= begin && i < end) continue;
      x_train.row(row++) = x.row(static_cast<Eigen::Index>(i));
      y_train.push_back(y[i]);
    }
    const Eigen::MatrixXd x_test = x.middleRows(static_cast<Eigen::Index>(begin), test_n);
    const std::vector<double> pred = fit_predict(f, x_train, y_train, x_test);
    const auto actual = y.subspan(begin, end - begin);

    FoldMetrics m;
    m.fold = f;
    m.begin = begin;
    m.end = end;
    m.mae = mean_absolute_error(pred, actual);
    try {
      m.pearson_r = pearson(pred, actual);
      r_sum += *m.pearson_r;
      ++r_count;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateInput) throw;
      ++report.flagged_folds;
    }
    report.mean_mae += m.mae;
    report.folds.push_back(m);
  }
  report.mean_mae /= static_cast<double>(report.folds.size());
  if (r_count > 0) report.mean_r = r_sum / static_cast<double>(r_count);
  return report;
}

}  // namespace ugcimpact
