#pragma once

// Reference computations that share no code with the library: textbook
// kernel closed forms, dense explicit-inverse GP algebra and least squares by
// the normal equations.

#include <cmath>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/LU>

#include "support.hpp"
#include "ugcimpact/gp.hpp"

namespace oracles {

using namespace ugcimpact::gp;

// Independent closed forms, written out from the textbook definitions.
inline double oracle_base(KernelKind kind, const ClusterHyperparameters& h, double r2) {
  const double r = std::sqrt(r2);
  switch (kind) {
    case KernelKind::matern52: {
      const double s = std::sqrt(5.0) * r / h.length_scale;
      return h.signal_variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
    }
    case KernelKind::matern32: {
      const double s = std::sqrt(3.0) * r / h.length_scale;
      return h.signal_variance * (1.0 + s) * std::exp(-s);
    }
    case KernelKind::rational_quadratic:
      return h.signal_variance * std::pow(1.0 + r2 / (2.0 * h.alpha * h.length_scale * h.length_scale), -h.alpha);
  }
  return 0.0;
}

inline Eigen::MatrixXd oracle_cov(const KernelSpec& spec, const ClusterPartition& p, const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      for (std::size_t z = 0; z < p.size(); ++z) {
        double r2 = 0.0;
        for (std::size_t c : p.group(z)) {
          const double d = a(i, static_cast<Eigen::Index>(c)) - b(j, static_cast<Eigen::Index>(c));
          r2 += d * d;
        }
        k(i, j) += oracle_base(spec.kind, spec.clusters[z], r2);
      }
    }
  }
  return k;
}

struct Problem {
  ClusterPartition partition{{}, 0};
  KernelSpec spec;
  Eigen::MatrixXd x;
  std::vector<double> y;
};

inline KernelSpec random_spec(std::mt19937_64& rng, KernelKind kind, std::size_t clusters) {
  std::uniform_real_distribution<double> lu(std::log(0.3), std::log(3.0));
  KernelSpec s;
  s.kind = kind;
  for (std::size_t z = 0; z < clusters; ++z) s.clusters.push_back({std::exp(lu(rng)), std::exp(lu(rng)), std::exp(lu(rng))});
  s.noise_variance = std::exp(lu(rng)) * 0.1;
  return s;
}

inline Problem random_problem(std::mt19937_64& rng, KernelKind kind, Eigen::Index n, Eigen::Index m, std::size_t clusters) {
  Problem p;
  std::vector<std::vector<std::size_t>> groups(clusters);
  for (Eigen::Index j = 0; j < m; ++j) groups[static_cast<std::size_t>(j) % clusters].push_back(static_cast<std::size_t>(j));
  p.partition = ClusterPartition(groups, static_cast<std::size_t>(m));
  p.spec = random_spec(rng, kind, clusters);
  p.x = testing::random_matrix(rng, n, m, 0.0, 2.0);
  p.y = testing::normals(rng, static_cast<std::size_t>(n));
  return p;
}

inline constexpr KernelKind kKinds[] = {KernelKind::matern52, KernelKind::matern32, KernelKind::rational_quadratic};

inline double dense_lml(const KernelSpec& spec, const ClusterPartition& p, const Eigen::MatrixXd& x, const std::vector<double>& y) {
  Eigen::MatrixXd k = oracle_cov(spec, p, x, x);
  k.diagonal().array() += spec.noise_variance;
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::MatrixXd inv = k.fullPivLu().inverse();
  const double n = static_cast<double>(y.size());
  return -0.5 * yv.dot(inv * yv) - 0.5 * std::log(k.determinant()) - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

inline Posterior dense_posterior(const Problem& p, const Eigen::MatrixXd& xs) {
  Eigen::MatrixXd k = oracle_cov(p.spec, p.partition, p.x, p.x);
  k.diagonal().array() += p.spec.noise_variance;
  const Eigen::MatrixXd inv = k.fullPivLu().inverse();
  const Eigen::MatrixXd ks = oracle_cov(p.spec, p.partition, p.x, xs);
  const Eigen::MatrixXd kss = oracle_cov(p.spec, p.partition, xs, xs);
  const Eigen::Map<const Eigen::VectorXd> y(p.y.data(), static_cast<Eigen::Index>(p.y.size()));
  return {ks.transpose() * inv * y, (kss - ks.transpose() * inv * ks).diagonal()};
}

// OLS with intercept by the normal equations, solved with a full-pivot LU.
inline std::pair<Eigen::VectorXd, double> normal_equations(const Eigen::MatrixXd& x, const std::vector<double>& y) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a << x, Eigen::VectorXd::Ones(x.rows());
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd beta = (a.transpose() * a).fullPivLu().solve(a.transpose() * yv);
  return {beta.head(x.cols()), beta[x.cols()]};
}

}  // namespace oracles
