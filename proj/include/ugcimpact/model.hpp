#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ugcimpact/baselines.hpp"
#include "ugcimpact/crossval.hpp"
#include "ugcimpact/gp.hpp"

namespace ugcimpact::model {

enum class ModelKind { gp, ridge, elastic_net };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::gp;
  gp::KernelKind kernel = gp::KernelKind::matern52;
  gp::FitOptions gp;
  std::size_t folds = 10;
  /// Fixed regularization for linear kinds; selected by blocked CV when unset.
  std::optional<baselines::Regularization> regularization;
  std::size_t lambda_grid = 50;
};

struct LinearRateModel {
  baselines::LinearModel model;
  std::vector<std::string> terms;
  gp::ClusterPartition clusters{{}, 0};
  ModelKind kind = ModelKind::ridge;
};

/// Disease-rate model f: term frequencies -> rates.
class RateModel {
 public:
  explicit RateModel(gp::TrainedGP gp) : impl_(std::move(gp)) {}
  explicit RateModel(LinearRateModel linear) : impl_(std::move(linear)) {}

  ModelKind kind() const;
  const std::vector<std::string>& terms() const;
  const gp::ClusterPartition& clusters() const;

  /// Rate estimates, clamped at zero. Throws DimensionMismatch when the
  /// features use a different term layout.
  std::vector<double> estimate(const gp::FeatureMatrix& x) const;

  const gp::TrainedGP* as_gp() const { return std::get_if<gp::TrainedGP>(&impl_); }
  const LinearRateModel* as_linear() const { return std::get_if<LinearRateModel>(&impl_); }

 private:
  std::variant<gp::TrainedGP, LinearRateModel> impl_;
};

RateModel train(const gp::FeatureMatrix& x, const RateSeries& y, const ModelConfig& config, std::uint64_t seed);

/// Blocked k-fold metrics for the configured model. For linear kinds without
/// a fixed regularization this is the CV curve at the selected setting.
CvReport cross_validate(const gp::FeatureMatrix& x, const RateSeries& y, const ModelConfig& config, std::uint64_t seed);

}  // namespace ugcimpact::model
