#include "ugcimpact/model.hpp"

#include <algorithm>
#include <span>

#include "ugcimpact/error.hpp"

namespace ugcimpact::model {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gp: return "gp";
    case ModelKind::ridge: return "ridge";
    case ModelKind::elastic_net: return "elastic_net";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "gp") return ModelKind::gp;
  if (name == "ridge") return ModelKind::ridge;
  if (name == "elastic_net") return ModelKind::elastic_net;
  throw Error(ErrorCode::InvalidArgument, "unknown model kind '" + std::string(name) + "' (expected gp, ridge or elastic_net)");
}

ModelKind RateModel::kind() const {
  if (const auto* l = as_linear()) return l->kind;
  return ModelKind::gp;
}

const std::vector<std::string>& RateModel::terms() const {
  if (const auto* g = as_gp()) return g->terms();
  return as_linear()->terms;
}

const gp::ClusterPartition& RateModel::clusters() const {
  if (const auto* g = as_gp()) return g->partition();
  return as_linear()->clusters;
}

std::vector<double> RateModel::estimate(const gp::FeatureMatrix& x) const {
  if (!terms().empty() && x.terms != terms()) {
    throw Error(ErrorCode::DimensionMismatch, "features use a different term layout than the trained model");
  }
  std::vector<double> out;
  if (const auto* g = as_gp()) {
    for (const auto& p : g->predict(x.values)) out.push_back(p.mean);
  } else {
    out = baselines::predict_linear(as_linear()->model, x.values);
  }
  for (double& v : out) v = std::max(0.0, v);
  return out;
}

namespace {

std::span<const double> mixings_for(ModelKind kind) {
  if (kind == ModelKind::ridge) return baselines::kRidgeMixings;
  return baselines::kElasticNetMixings;
}

baselines::Regularization choose_regularization(const gp::FeatureMatrix& x, const RateSeries& y, const ModelConfig& config) {
  if (config.regularization) return *config.regularization;
  return baselines::select_regularization(x.values, y.values(), mixings_for(config.kind), config.folds, config.lambda_grid)
      .regularization;
}

}  // namespace

RateModel train(const gp::FeatureMatrix& x, const RateSeries& y, const ModelConfig& config, std::uint64_t seed) {
  if (!(x.index == y.index())) throw Error(ErrorCode::NonAlignable, "features and rates cover different dates");
  if (config.kind == ModelKind::gp) return RateModel(gp::fit(x, y, config.kernel, config.gp, seed));
  LinearRateModel lin;
  lin.kind = config.kind;
  lin.terms = x.terms;
  lin.clusters = x.clusters;
  lin.model = baselines::fit_linear(x.values, y.values(), choose_regularization(x, y, config)).model;
  return RateModel(std::move(lin));
}

CvReport cross_validate(const gp::FeatureMatrix& x, const RateSeries& y, const ModelConfig& config, std::uint64_t seed) {
  if (!(x.index == y.index())) throw Error(ErrorCode::NonAlignable, "features and rates cover different dates");
  if (config.kind == ModelKind::gp) {
    return gp::cross_validate(x.values, x.clusters, y.values(), config.folds, config.kernel, config.gp, seed);
  }
  if (!config.regularization) {
    return baselines::select_regularization(x.values, y.values(), mixings_for(config.kind), config.folds,
                                            config.lambda_grid)
        .cv;
  }
  const auto reg = *config.regularization;
  return ugcimpact::cross_validate(
      x.values, y.values(), config.folds,
      [&](std::size_t, const Eigen::MatrixXd& xt, std::span<const double> yt, const Eigen::MatrixXd& xs) {
        auto pred = baselines::predict_linear(baselines::fit_linear(xt, yt, reg).model, xs);
        for (double& p : pred) p = std::max(0.0, p);
        return pred;
      });
}

}  // namespace ugcimpact::model
