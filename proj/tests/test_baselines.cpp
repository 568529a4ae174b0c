#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gopa/baselines.hpp"
#include "gopa/errors.hpp"
#include "gopa/rng.hpp"

using namespace gopa;

namespace {

PrivateValues random_values(int n, double B, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> d(-B, B);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return PrivateValues(v, B);
}

}  // namespace

TEST_CASE("local-noise configuration") {
  LdpConfig cfg(0.5, 2.0);
  CHECK(cfg.scale() == doctest::Approx(8.0));  // b = 2B/eps
  CHECK_THROWS_AS(LdpConfig(0.0, 1.0), parameter_error);
  CHECK_THROWS_AS(LdpConfig(-1.0, 1.0), parameter_error);
  CHECK_THROWS_AS(LdpConfig(1.0, 0.0), parameter_error);
}

TEST_CASE("perturbation adds centered Laplace noise of the right scale") {
  const int n = 100000;
  LdpConfig cfg(1.0, 1.0);  // b = 2
  auto x = PrivateValues(Eigen::VectorXd::Zero(n), 1.0);
  auto y = ldp_perturb(x, cfg, 5);
  double mean = y.values.mean();
  double var = (y.values.array() - mean).square().sum() / (n - 1);
  // Laplace(b): variance 2 b^2 = 8
  CHECK(mean == doctest::Approx(0.0).epsilon(0.05).scale(cfg.scale()));
  CHECK(var == doctest::Approx(2.0 * cfg.scale() * cfg.scale()).epsilon(0.05));
  CHECK(y.bound >= y.values.cwiseAbs().maxCoeff());
}

TEST_CASE("perturbation is deterministic per seed and noise is independent") {
  auto x = random_values(200, 1.0, 1);
  LdpConfig cfg(0.5, 1.0);
  auto a = ldp_perturb(x, cfg, 9);
  auto b = ldp_perturb(x, cfg, 9);
  auto c = ldp_perturb(x, cfg, 10);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK((a.values - c.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("average error formula b * sqrt(2/n)") {
  LdpConfig cfg(0.1, 1.0);  // b = 20
  CHECK(ldp_rmse_formula(cfg, 10000) == doctest::Approx(20.0 * std::sqrt(2e-4)));
  CHECK(ldp_rmse_formula(cfg, 100) == doctest::Approx(20.0 * std::sqrt(0.02)));

  SUBCASE("matches the empirical root-mean-square error") {
    const int n = 2000, trials = 400;
    auto x = random_values(n, 1.0, 2);
    double truth = x.average();
    double se = 0.0;
    for (int t = 0; t < trials; ++t) {
      auto y = ldp_perturb(x, cfg, 100 + t);
      double err = y.average() - truth;
      se += err * err;
    }
    double rmse = std::sqrt(se / trials);
    CHECK(rmse == doctest::Approx(ldp_rmse_formula(cfg, n)).epsilon(0.10));
  }
}

TEST_CASE("tighter budgets mean more noise") {
  auto x = random_values(5000, 1.0, 3);
  double tight = (ldp_perturb(x, LdpConfig(0.1, 1.0), 4).values - x.values).norm();
  double loose = (ldp_perturb(x, LdpConfig(10.0, 1.0), 4).values - x.values).norm();
  CHECK(tight > loose);
}

TEST_CASE("centralized encrypted averaging is exact on the fixed-point grid") {
  SUBCASE("zeros") {
    auto x = PrivateValues(Eigen::VectorXd::Zero(10), 1.0);
    CHECK(central_paillier_average(x, 32, 6) == doctest::Approx(0.0));
  }
  SUBCASE("mixed-sign values") {
    Eigen::VectorXd v(4);
    v << 1.5, -2.25, 0.625, -0.875;  // all on the binary grid
    auto x = PrivateValues(v, 3.0);
    CHECK(central_paillier_average(x, 32, 7) == doctest::Approx(v.mean()));
  }
  SUBCASE("random values at grid resolution") {
    auto x = random_values(50, 10.0, 8);
    double got = central_paillier_average(x, 32, 9);
    CHECK(got == doctest::Approx(x.average()).epsilon(1e-9));
  }
  SUBCASE("deterministic per seed") {
    auto x = random_values(20, 1.0, 10);
    CHECK(central_paillier_average(x, 32, 11) ==
          central_paillier_average(x, 32, 11));
  }
}
