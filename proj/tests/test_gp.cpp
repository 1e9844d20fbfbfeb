#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "oracles.hpp"
#include "support.hpp"
#include "ugcimpact/error.hpp"
#include "ugcimpact/gp.hpp"

using namespace ugcimpact;
using namespace ugcimpact::gp;
using namespace oracles;

TEST_CASE("kernel names") {
  for (auto k : kKinds) CHECK(parse_kernel_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_kernel_kind("rbf"), Error);
}

TEST_CASE("cluster partitions") {
  CHECK_THROWS_AS(ClusterPartition({{0, 1}, {1}}, 2), Error);
  CHECK_THROWS_AS(ClusterPartition({{0}}, 2), Error);
  CHECK_THROWS_AS(ClusterPartition({{0}, {}}, 1), Error);
  CHECK_THROWS_AS(ClusterPartition({{0, 3}}, 2), Error);
  const auto p = ClusterPartition::by_token_count({"flu", "sore throat", "a b c", "flu symptoms", "a b c d e", "fever"});
  CHECK(p.groups() == std::vector<std::vector<std::size_t>>{{0, 5}, {1, 3}, {2}, {4}});
  const auto q = ClusterPartition::by_token_count({"flu", "a b c"});
  CHECK(q.groups() == std::vector<std::vector<std::size_t>>{{0}, {1}});
  CHECK(ClusterPartition::single(3).groups() == std::vector<std::vector<std::size_t>>{{0, 1, 2}});
}

TEST_CASE("kernel_eval examples") {
  SUBCASE("matern52 at zero distance") {
    KernelSpec s{KernelKind::matern52, {{1.0, 0.7, 1.0}}, 0.25};
    const std::vector<double> x{0.3, 1.2};
    CHECK(kernel_eval(s, ClusterPartition::single(2), x, x, true) == doctest::Approx(1.25).epsilon(1e-15));
    CHECK(kernel_eval(s, ClusterPartition::single(2), x, x, false) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("rational quadratic at squared distance 2") {
    KernelSpec s{KernelKind::rational_quadratic, {{1.0, 1.0, 1.0}}, 0.1};
    CHECK(kernel_eval(s, ClusterPartition::single(2), std::vector<double>{0, 0}, std::vector<double>{1, 1}, false) ==
          doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("two clusters with identical sub-vectors") {
    KernelSpec s{KernelKind::matern32, {{1.0, 0.5, 1.0}, {1.0, 2.0, 1.0}}, 0.3};
    const ClusterPartition p({{0}, {1, 2}}, 3);
    CHECK(kernel_eval(s, p, std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}, false) ==
          doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("dimension mismatch") {
    KernelSpec s{KernelKind::matern52, {{1.0, 1.0, 1.0}}, 0.1};
    CHECK_THROWS_AS(kernel_eval(s, ClusterPartition::single(2), std::vector<double>{1, 2, 3}, std::vector<double>{1, 2},
                                false),
                    Error);
    KernelSpec two{KernelKind::matern52, {{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}}, 0.1};
    CHECK_THROWS_AS(kernel_eval(two, ClusterPartition::single(2), std::vector<double>{1, 2}, std::vector<double>{1, 2},
                                false),
                    Error);
  }
}

TEST_CASE("base kernels match closed forms") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 9.0);
  for (auto kind : kKinds) {
    for (int i = 0; i < 50; ++i) {
      const ClusterHyperparameters h{0.5 + u(rng), 0.2 + u(rng), 0.1 + u(rng)};
      const double r2 = u(rng);
      CHECK(base_kernel(kind, h, r2) == doctest::Approx(oracle_base(kind, h, r2)).epsilon(1e-13));
    }
  }
}

TEST_CASE("covariances are symmetric, PSD and additive") {
  std::mt19937_64 rng(17);
  for (auto kind : kKinds) {
    for (int trial = 0; trial < 5; ++trial) {
      auto p = random_problem(rng, kind, 30, 7, 3);
      const Eigen::MatrixXd k = covariance(p.spec, p.partition, p.x, p.x);
      CHECK((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-8);

      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(30, 30);
      for (std::size_t z = 0; z < p.partition.size(); ++z) sum += cluster_covariance(p.spec, p.partition, z, p.x, p.x);
      sum.diagonal().array() += p.spec.noise_variance;
      CHECK((training_covariance(p.spec, p.partition, p.x) - sum).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((k - oracle_cov(p.spec, p.partition, p.x, p.x)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("factorization jitter") {
  Eigen::MatrixXd singular(2, 2);
  singular << 1.0, 1.0, 1.0, 1.0;
  const auto f = factorize(singular);
  CHECK(f.jitter > 0.0);
  CHECK(f.jitter <= 1e-6);
  CHECK(factorize(Eigen::MatrixXd::Identity(3, 3)).jitter == 0.0);
  Eigen::MatrixXd negative = -Eigen::MatrixXd::Identity(2, 2);
  try {
    factorize(negative);
    FAIL("expected NotPositiveDefinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotPositiveDefinite);
  }
}

TEST_CASE("log marginal likelihood closed forms") {
  SUBCASE("n = 1, K = [[1]], y = 0") {
    KernelSpec s{KernelKind::matern52, {{0.5, 1.0, 1.0}}, 0.5};
    Eigen::MatrixXd x(1, 1);
    x << 2.0;
    const auto r = log_marginal_likelihood(s, ClusterPartition::single(1), x, std::vector<double>{0.0});
    CHECK(r.value == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
    CHECK(r.value == doctest::Approx(-0.9189).epsilon(1e-4));
  }
  SUBCASE("n = 2 against the explicit 2x2 inverse and determinant") {
    std::mt19937_64 rng(3);
    for (auto kind : kKinds) {
      auto p = random_problem(rng, kind, 2, 3, 1);
      Eigen::MatrixXd k = oracle_cov(p.spec, p.partition, p.x, p.x);
      k.diagonal().array() += p.spec.noise_variance;
      const double a = k(0, 0), b = k(0, 1), d = k(1, 1);
      const double det = a * d - b * b;
      const double quad = (d * p.y[0] * p.y[0] - 2.0 * b * p.y[0] * p.y[1] + a * p.y[1] * p.y[1]) / det;
      const double expected = -0.5 * quad - 0.5 * std::log(det) - std::log(2.0 * std::numbers::pi);
      CHECK(std::abs(log_marginal_likelihood(p.spec, p.partition, p.x, p.y).value - expected) <= 1e-10);
    }
  }
  SUBCASE("larger problems against a dense oracle") {
    std::mt19937_64 rng(4);
    for (auto kind : kKinds) {
      auto p = random_problem(rng, kind, 25, 6, 2);
      const double expected = dense_lml(p.spec, p.partition, p.x, p.y);
      CHECK(log_marginal_likelihood(p.spec, p.partition, p.x, p.y).value ==
            doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(23);
  for (auto kind : kKinds) {
    for (int trial = 0; trial < 4; ++trial) {
      auto p = random_problem(rng, kind, 10, 5, 2);
      const Eigen::VectorXd theta = p.spec.to_log();
      const auto analytic = log_marginal_likelihood(p.spec, p.partition, p.x, p.y).gradient;
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double h = 1e-5;
        Eigen::VectorXd up = theta, down = theta;
        up[i] += h;
        down[i] -= h;
        const double fd = (log_marginal_likelihood(KernelSpec::from_log(kind, 2, up), p.partition, p.x, p.y).value -
                           log_marginal_likelihood(KernelSpec::from_log(kind, 2, down), p.partition, p.x, p.y).value) /
                          (2.0 * h);
        CAPTURE(i);
        CHECK(std::abs(analytic[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("posterior matches a dense explicit-inverse oracle") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 9; ++trial) {
    const auto kind = kKinds[trial % 3];
    auto p = random_problem(rng, kind, 20, 4, 2);
    const Eigen::MatrixXd xs = testing::random_matrix(rng, 5, 4, 0.0, 2.0);
    const auto model = TrainedGP::condition(p.spec, p.partition, p.x, p.y);
    const auto pred = model.predict(xs);

    const auto oracle = dense_posterior(p, xs);
    for (Eigen::Index i = 0; i < 5; ++i) {
      CHECK(std::abs(pred[static_cast<std::size_t>(i)].mean - oracle.mean[i]) <= 1e-8);
      CHECK(std::abs(pred[static_cast<std::size_t>(i)].variance - oracle.variance[i]) <= 1e-8);
    }
  }
}

TEST_CASE("prediction limits") {
  std::mt19937_64 rng(31);
  SUBCASE("interpolation as noise vanishes") {
    Eigen::MatrixXd x(8, 1);
    for (int i = 0; i < 8; ++i) x(i, 0) = 3.0 * i;
    const auto y = testing::normals(rng, 8, 5.0, 2.0);
    KernelSpec s{KernelKind::matern52, {{25.0, 1.0, 1.0}}, 1e-12};
    const auto model = TrainedGP::condition(s, ClusterPartition::single(1), x, y);
    const auto pred = model.predict(x);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(pred[i].mean - y[i]) <= 1e-6);
  }
  SUBCASE("far from the data the prior returns") {
    auto p = random_problem(rng, KernelKind::rational_quadratic, 15, 4, 2);
    const auto model = TrainedGP::condition(p.spec, p.partition, p.x, p.y);
    const Eigen::MatrixXd far = Eigen::MatrixXd::Constant(1, 4, 1e6);
    const auto pred = model.predict(far);
    const double prior = p.spec.clusters[0].signal_variance + p.spec.clusters[1].signal_variance;
    CHECK(std::abs(pred[0].mean) <= 1e-6);
    CHECK(pred[0].variance == doctest::Approx(prior).epsilon(1e-6));
  }
  SUBCASE("column layout must match") {
    auto p = random_problem(rng, KernelKind::matern52, 10, 4, 2);
    const auto model = TrainedGP::condition(p.spec, p.partition, p.x, p.y);
    CHECK_THROWS_AS(model.predict(Eigen::MatrixXd::Zero(2, 3)), Error);
  }
}

TEST_CASE("training error grows with the noise variance") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 3; ++trial) {
    auto p = random_problem(rng, KernelKind::matern52, 30, 4, 2);
    double last = -1.0;
    for (double noise : {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0}) {
      p.spec.noise_variance = noise;
      const auto pred = TrainedGP::condition(p.spec, p.partition, p.x, p.y).predict(p.x);
      double mae = 0.0;
      for (std::size_t i = 0; i < p.y.size(); ++i) mae += std::abs(pred[i].mean - p.y[i]);
      mae /= static_cast<double>(p.y.size());
      CHECK(mae >= last - 1e-12);
      last = mae;
    }
  }
}

TEST_CASE("fit") {
  std::mt19937_64 rng(41);
  FitOptions options;
  options.restarts = 5;

  SUBCASE("optimum dominates the generating hyperparameters") {
    const Eigen::MatrixXd x = testing::random_matrix(rng, 60, 2, 0.0, 5.0);
    const auto partition = ClusterPartition::single(2);
    KernelSpec truth{KernelKind::matern52, {{2.0, 1.5, 1.0}}, 0.05};
    Eigen::MatrixXd k = training_covariance(truth, partition, x);
    const Eigen::MatrixXd l = k.llt().matrixL();
    const auto z = testing::normals(rng, 60);
    const Eigen::VectorXd yv = l * Eigen::Map<const Eigen::VectorXd>(z.data(), 60);
    const std::vector<double> y(yv.data(), yv.data() + 60);
    const auto model = fit(x, partition, y, KernelKind::matern52, options, 9);
    CHECK(model.log_marginal_likelihood() >= log_marginal_likelihood(truth, partition, x, y).value - 1e-6);
    CHECK(model.log_marginal_likelihood() ==
          doctest::Approx(log_marginal_likelihood(model.spec(), partition, x, y).value).epsilon(1e-9));
  }
  SUBCASE("zero targets give a zero mean everywhere") {
    const Eigen::MatrixXd x = testing::random_matrix(rng, 20, 3);
    const std::vector<double> y(20, 0.0);
    const auto model = fit(x, ClusterPartition::single(3), y, KernelKind::matern52, options, 1);
    for (const auto& p : model.predict(testing::random_matrix(rng, 10, 3, -1.0, 2.0))) CHECK(p.mean == 0.0);
  }
  SUBCASE("same seed, same data, same hyperparameters") {
    auto p = random_problem(rng, KernelKind::rational_quadratic, 25, 4, 2);
    const auto a = fit(p.x, p.partition, p.y, KernelKind::rational_quadratic, options, 77);
    const auto b = fit(p.x, p.partition, p.y, KernelKind::rational_quadratic, options, 77);
    CHECK(a.spec().to_log() == b.spec().to_log());
    FitOptions threaded = options;
    threaded.threads = 3;
    const auto c = fit(p.x, p.partition, p.y, KernelKind::rational_quadratic, threaded, 77);
    CHECK(a.spec().to_log() == c.spec().to_log());
  }
  SUBCASE("too few observations") {
    auto p = random_problem(rng, KernelKind::matern52, 3, 4, 2);
    CHECK_THROWS_AS(fit(p.x, p.partition, p.y, KernelKind::matern52, options, 1), Error);
  }
}

TEST_CASE("blocked folds") {
  const auto folds = blocked_folds(23, 4);
  REQUIRE(folds.size() == 4);
  CHECK(folds[0] == std::pair<std::size_t, std::size_t>{0, 6});
  CHECK(folds[1] == std::pair<std::size_t, std::size_t>{6, 12});
  CHECK(folds[2] == std::pair<std::size_t, std::size_t>{12, 18});
  CHECK(folds[3] == std::pair<std::size_t, std::size_t>{18, 23});
  CHECK_THROWS_AS(blocked_folds(7, 4), Error);
  CHECK_THROWS_AS(blocked_folds(10, 1), Error);
}

TEST_CASE("cross validation harness") {
  SUBCASE("constant predictions flag every fold") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(20, 1);
    std::vector<double> y(20);
    for (int i = 0; i < 20; ++i) y[static_cast<std::size_t>(i)] = i;
    const auto cv = ugcimpact::cross_validate(
        x, y, 4, [](std::size_t, const Eigen::MatrixXd&, std::span<const double>, const Eigen::MatrixXd& xs) {
          return std::vector<double>(static_cast<std::size_t>(xs.rows()), 5.0);
        });
    CHECK(cv.flagged_folds == 4);
    CHECK_FALSE(cv.mean_r.has_value());
    // Fold 0 holds 0..4, so its MAE is (5+4+3+2+1)/5.
    CHECK(cv.folds[0].mae == doctest::Approx(3.0));
  }
  SUBCASE("GP on noiseless linear data") {
    std::mt19937_64 rng(43);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 60, 1, 0.0, 10.0);
    std::vector<double> y(60);
    for (int i = 0; i < 60; ++i) y[static_cast<std::size_t>(i)] = 2.0 * x(i, 0) + 1.0;
    FitOptions options;
    options.restarts = 3;
    const auto cv = gp::cross_validate(x, ClusterPartition::single(1), y, 10, KernelKind::matern52, options, 5);
    CHECK(cv.folds.size() == 10);
    CHECK(cv.mean_mae <= 1e-3);
    REQUIRE(cv.mean_r.has_value());
    CHECK(*cv.mean_r >= 1.0 - 1e-3);
  }
}
