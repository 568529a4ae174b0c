#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gopa/errors.hpp"
#include "gopa/graph.hpp"
#include "gopa/privacy.hpp"
#include "gopa/protocol.hpp"
#include "gopa/rng.hpp"

using namespace gopa;

namespace {

NetworkGraph complete(int n) {
  std::vector<std::pair<int, int>> e;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) e.emplace_back(u, v);
  return NetworkGraph(n, std::move(e));
}

NetworkGraph star(int leaves) {
  std::vector<std::pair<int, int>> e;
  for (int v = 1; v <= leaves; ++v) e.emplace_back(0, v);
  return NetworkGraph(leaves + 1, std::move(e));
}

}  // namespace

TEST_CASE("smoothing solver basics") {
  auto g = complete(3);
  auto L = laplacian(g);
  SUBCASE("alpha = 0 is the identity") {
    Eigen::VectorXd y(3);
    y << 1.0, -2.0, 0.5;
    auto out = smoothing_apply(L, 0.0, y);
    CHECK((out - y).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("K3 with alpha = 1 on a basis vector") {
    // (I + L)^-1 e_1 = (1/2, 1/4, 1/4) by symmetry and row-sum 1.
    Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
    y[0] = 1.0;
    auto out = smoothing_apply(L, 1.0, y);
    CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("mass is conserved: column sums of M are 1") {
    auto g2 = generate_k_out(50, 3, 1);
    auto L2 = laplacian(g2);
    SmoothingSolver s(L2, 7.5);
    for (int j : {0, 13, 49}) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(50);
      e[j] = 1.0;
      CHECK(s.apply(e).sum() == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
  SUBCASE("kernel survives huge alpha") {
    Eigen::VectorXd y(3);
    y << 3.0, 0.0, 0.0;
    auto out = smoothing_apply(L, 1e12, y);
    // converges to the projection onto the all-ones kernel: mean 1 everywhere
    CHECK((out.array() - 1.0).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("preserved variance on small graphs") {
  SUBCASE("no noise means no privacy") {
    auto g = complete(4);
    CHECK(preserved_variance(g, 0, 1.0, 0.0) == doctest::Approx(0.0));
  }
  SUBCASE("K3 all honest, alpha = 1") {
    // rho = 1 - M_11 = 1 - 1/2.
    auto g = complete(3);
    CHECK(preserved_variance(g, 0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("infinite-noise limit is 1 - 1/h over the component") {
    auto g = generate_k_out(12, 2, 3);
    REQUIRE(is_connected(g));
    for (int u : {0, 5, 11})
      CHECK(preserved_variance(g, u, 1.0, 1e7) ==
            doctest::Approx(1.0 - 1.0 / 12).epsilon(1e-6));
  }
  SUBCASE("isolated honest user has rho = 0") {
    auto g = assign_roles(star(4), {0});  // malicious hub isolates the leaves
    CHECK(preserved_variance(g, 1, 1.0, 100.0) == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("malicious target is rejected") {
    auto g = assign_roles(complete(3), {2});
    CHECK_THROWS_AS(preserved_variance(g, 2, 1.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(preserved_variance(g, 0, 0.0, 1.0), parameter_error);
  }
}

TEST_CASE("smoothing matrix is symmetric doubly stochastic") {
  auto g = assign_roles(generate_k_out(40, 3, 4), 0.25, 5);
  auto h = honest_subgraph(g);
  auto L = laplacian(h);
  SmoothingSolver s(L, 2.0);
  Eigen::MatrixXd M(h.n(), h.n());
  for (int j = 0; j < h.n(); ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(h.n());
    e[j] = 1.0;
    M.col(j) = s.apply(e);
  }
  CHECK((M - M.transpose()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((M.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK((M.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK(M.minCoeff() >= -1e-12);
}

TEST_CASE("closed form matches the Gaussian-conditioning oracle") {
  // The two routes share no code: one inverts I + alpha L^H, the other builds
  // the adversary's linear system A = [I B] and takes a Schur complement.
  auto rng = make_rng(99);
  std::uniform_int_distribution<int> nd(4, 12);
  std::uniform_real_distribution<double> sd(0.2, 5.0);
  int tested = 0;
  for (int trial = 0; trial < 60; ++trial) {
    int n = nd(rng);
    auto g0 = generate_k_out(n, 2, trial);
    double f = (trial % 3 == 0) ? 0.0 : 0.3;
    auto g = assign_roles(g0, f, trial + 500);
    double sigma_x = sd(rng), sigma_delta = sd(rng);
    for (int u = 0; u < n; ++u) {
      if (!g.is_honest(u)) continue;
      double rho = preserved_variance(g, u, sigma_x, sigma_delta);
      double var = conditional_variance_oracle(g, u, sigma_x, sigma_delta);
      CHECK(rho == doctest::Approx(var / (sigma_x * sigma_x)).epsilon(1e-9));
      ++tested;
    }
  }
  CHECK(tested > 200);
}

TEST_CASE("oracle with per-user priors reduces to the scalar case") {
  auto g = generate_k_out(8, 2, 7);
  Eigen::VectorXd prior = Eigen::VectorXd::Constant(8, 2.25);  // sigma_x = 1.5
  for (int u = 0; u < 8; ++u)
    CHECK(conditional_variance_oracle(g, u, prior, 0.8) ==
          doctest::Approx(conditional_variance_oracle(g, u, 1.5, 0.8))
              .epsilon(1e-10));
}

TEST_CASE("local lower bound") {
  SUBCASE("closed-form values") {
    // h=0 gives 0; large h with large noise approaches sigma_x^2.
    CHECK(variance_lower_bound(0, 1.0, 1.0) == doctest::Approx(0.0));
    CHECK(variance_lower_bound(1, 1.0, 1.0) ==
          doctest::Approx(1.0 * (2.0 / 3.0) * 0.5).epsilon(1e-12));
    CHECK(variance_lower_bound(1000, 1.0, 100.0) ==
          doctest::Approx(1.0).epsilon(1e-2));
  }
  SUBCASE("never exceeds the exact preserved variance") {
    for (int trial = 0; trial < 30; ++trial) {
      auto g = assign_roles(generate_k_out(20, 3, trial), 0.3, trial + 50);
      auto rep = privacy_report(g, 1.0, 2.0);
      for (const auto& row : rep.rows) {
        CHECK(row.prop2_bound <= row.rho + 1e-9);
        CHECK(row.rho >= -1e-12);
        CHECK(row.rho <= 1.0 + 1e-12);
      }
    }
  }
  SUBCASE("tight on a star of honest users") {
    // The hub of an honest star: the bound is exact there.
    for (int h : {2, 3, 6}) {
      auto g = star(h);
      double exact = preserved_variance(g, 0, 1.3, 0.7) * 1.3 * 1.3;
      CHECK(variance_lower_bound(h, 1.3, 0.7) ==
            doctest::Approx(exact).epsilon(1e-9));
    }
  }
}

TEST_CASE("privacy report") {
  auto g = assign_roles(generate_k_out(30, 3, 8), 0.2, 9);
  auto rep = privacy_report(g, 1.0, 3.0);
  CHECK(rep.rows.size() == 24);
  CHECK(rep.alpha == doctest::Approx(9.0));
  for (const auto& r : rep.rows) {
    CHECK(r.epsilon == doctest::Approx(1.0 - r.rho).epsilon(1e-12));
    CHECK(r.rho == doctest::Approx(preserved_variance(g, r.user, 1.0, 3.0))
                       .epsilon(1e-9));
  }
  CHECK(rep.min_rho() <= rep.mean_rho());
  CHECK(rep.mean_rho() <= rep.max_rho());

  SUBCASE("user sampling restricts the rows") {
    auto sampled = privacy_report(g, 1.0, 3.0, {rep.rows[0].user, rep.rows[5].user});
    CHECK(sampled.rows.size() == 2);
    CHECK(sampled.rows[0].rho == doctest::Approx(rep.rows[0].rho));
  }
  SUBCASE("csv schema") {
    std::ostringstream out;
    write_privacy_csv(rep, out);
    std::string header;
    std::istringstream in(out.str());
    std::getline(in, header);
    CHECK(header == "user,honest_neighbors,rho,epsilon,prop2_bound");
  }
}

TEST_CASE("disconnected honest components are independent") {
  // Two honest triangles bridged only through a malicious user.
  std::vector<std::pair<int, int>> e = {{0, 1}, {1, 2}, {0, 2},
                                        {3, 4}, {4, 5}, {3, 5},
                                        {2, 6}, {6, 3}};
  auto g = assign_roles(NetworkGraph(7, std::move(e)), {6});
  double rho_left = preserved_variance(g, 0, 1.0, 2.0);
  double rho_right = preserved_variance(g, 3, 1.0, 2.0);
  auto tri = complete(3);
  double rho_iso = preserved_variance(tri, 0, 1.0, 2.0);
  CHECK(rho_left == doctest::Approx(rho_iso).epsilon(1e-10));
  CHECK(rho_right == doctest::Approx(rho_iso).epsilon(1e-10));
}

TEST_CASE("composition multiplies the preserved ratios") {
  CHECK(compose_privacy({0.5, 0.5}) == doctest::Approx(0.25));
  CHECK(compose_privacy({1.0, 0.9, 0.8}) == doctest::Approx(0.72));
  CHECK(compose_privacy({}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(compose_privacy({1.5}), parameter_error);
  // composed ratio never exceeds any single-run ratio
  std::vector<double> seq = {0.9, 0.7, 0.95};
  double c = compose_privacy(seq);
  for (double r : seq) CHECK(c <= r + 1e-12);
}

TEST_CASE("adversary view holds no honest-honest noise") {
  auto g = assign_roles(generate_k_out(20, 3, 10), 0.3, 11);
  auto rngv = make_rng(12);
  std::normal_distribution<double> nrm;
  Eigen::VectorXd vals(20);
  for (int i = 0; i < 20; ++i) vals[i] = nrm(rngv);
  PrivateValues x(vals, vals.cwiseAbs().maxCoeff());
  auto [state, ledger] = randomization_phase(g, x, 2.0, 13);
  auto view = AdversaryView::from_run(g, state, ledger, x);
  for (auto [edge, delta] : view.malicious_incident) {
    int u = static_cast<int>(edge >> 32), v = static_cast<int>(edge & 0xffffffffu);
    CHECK((!g.is_honest(u) || !g.is_honest(v)));
  }
  for (auto [u, xu] : view.malicious_values) CHECK_FALSE(g.is_honest(u));
}

TEST_CASE("posterior mean beats the noisy values as a predictor") {
  // Monte-Carlo: the oracle's squared error ratio matches 1 - rho.
  auto g = assign_roles(generate_k_out(10, 2, 14), 0.3, 15);
  auto h = honest_subgraph(g);
  double sigma_x = 1.0, sigma_delta = 2.0;
  auto rep = privacy_report(g, sigma_x, sigma_delta);

  const int trials = 20000;
  auto rng = make_rng(16);
  std::normal_distribution<double> nrm(0.0, sigma_x);
  Eigen::VectorXd se = Eigen::VectorXd::Zero(h.n());
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd vals(g.n());
    for (int i = 0; i < g.n(); ++i) vals[i] = nrm(rng);
    PrivateValues x(vals, 100.0);
    auto [state, ledger] = randomization_phase(g, x, sigma_delta, 1000 + t);
    auto view = AdversaryView::from_run(g, state, ledger, x);
    Eigen::VectorXd mean = oracle_posterior_mean(g, view, sigma_x, sigma_delta);
    for (int i = 0; i < h.n(); ++i) {
      double err = mean[i] - vals[h.original_ids()[i]];
      se[i] += err * err;
    }
  }
  for (int i = 0; i < h.n(); ++i) {
    double empirical_ratio = (se[i] / trials) / (sigma_x * sigma_x);
    int user = h.original_ids()[i];
    auto it = std::find_if(rep.rows.begin(), rep.rows.end(),
                           [&](const auto& r) { return r.user == user; });
    REQUIRE(it != rep.rows.end());
    CHECK(empirical_ratio == doctest::Approx(it->rho).epsilon(0.05));
    CHECK(expected_error_ratio(rep, user) == doctest::Approx(it->rho));
  }
}

TEST_CASE("more honest neighbors cannot hurt in the local bound") {
  for (int h = 0; h < 40; ++h)
    CHECK(variance_lower_bound(h + 1, 1.0, 1.0) >=
          variance_lower_bound(h, 1.0, 1.0));
}
