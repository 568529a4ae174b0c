#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gopa/baselines.hpp"
#include "gopa/errors.hpp"
#include "gopa/graph.hpp"
#include "gopa/paillier.hpp"
#include "gopa/privacy.hpp"
#include "gopa/protocol.hpp"
#include "gopa/rng.hpp"
#include "gopa/verification.hpp"

namespace {

constexpr const char* kSchemaComment = "# gopa-csv-v1\n";

struct CommonOpts {
  int n = 1000;
  int k = 10;
  double f = 0.0;
  double sigma_x = 1.0;
  double sigma_delta = 1.0;
  double tau = 0.01;
  double beta = 0.5;
  int trials = 10;
  std::uint64_t seed = 1;
  std::string mode = "float";
  std::string out = "gopa_out";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--n", o.n, "number of users")->check(CLI::Range(3, 1000000));
  cmd->add_option("--k", o.k, "k-out selections per user");
  cmd->add_option("--f", o.f, "malicious fraction")->check(CLI::Range(0.0, 0.999));
  cmd->add_option("--sigma-x", o.sigma_x, "prior std of private values");
  cmd->add_option("--sigma-delta", o.sigma_delta, "pairwise noise std");
  cmd->add_option("--tau", o.tau, "averaging-time target");
  cmd->add_option("--beta", o.beta, "unrevealed fraction in verification");
  cmd->add_option("--trials", o.trials, "Monte-Carlo trials");
  cmd->add_option("--seed", o.seed, "base RNG seed");
  cmd->add_option("--mode", o.mode, "float|fixed")
      ->check(CLI::IsMember({"float", "fixed"}));
  cmd->add_option("--out", o.out, "output path prefix");
}

gopa::PrivateValues draw_values(int n, double sigma_x, std::uint64_t seed) {
  auto rng = gopa::make_rng(seed);
  std::normal_distribution<double> prior(0.0, sigma_x);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = prior(rng);
  return gopa::PrivateValues(v, std::max(1.0, v.cwiseAbs().maxCoeff()));
}

int cmd_convergence(const CommonOpts& o, const std::vector<double>& grid,
                    int runs) {
  std::ofstream trace_csv(o.out + "_trace.csv");
  std::ofstream iters_csv(o.out + "_iters.csv");
  trace_csv << kSchemaComment << "sigma_delta2,t,mean_rel_error,std_rel_error\n";
  iters_csv << kSchemaComment << "sigma_delta2,mean_iters_to_1e2,std_iters_to_1e2\n";

  gopa::NetworkGraph g = gopa::generate_k_out(o.n, o.k, o.seed);
  const long max_iters = 40L * o.n;
  const long record_every = 50;

  for (double s2 : grid) {
    double sd = std::sqrt(s2);
    std::vector<std::vector<gopa::TracePoint>> traces;
    std::vector<double> iters_to_err;
    for (int r = 0; r < runs; ++r) {
      auto x = draw_values(o.n, o.sigma_x, gopa::derive_seed(o.seed, 10 + r));
      auto [state, ledger] = gopa::randomization_phase(
          g, x, sd, gopa::derive_seed(o.seed, 100 + r));
      gopa::run_averaging(state, g, max_iters,
                          gopa::derive_seed(o.seed, 200 + r), record_every);
      long hit = -1;
      for (const auto& p : state.trace)
        if (p.rel_error <= 1e-2) {
          hit = p.t;
          break;
        }
      if (hit >= 0) iters_to_err.push_back(static_cast<double>(hit));
      traces.push_back(std::move(state.trace));
    }
    const std::size_t points = traces.front().size();
    for (std::size_t i = 0; i < points; ++i) {
      double mean = 0, sq = 0;
      for (auto& tr : traces) mean += tr[i].rel_error;
      mean /= traces.size();
      for (auto& tr : traces) sq += (tr[i].rel_error - mean) * (tr[i].rel_error - mean);
      trace_csv << s2 << ',' << traces.front()[i].t << ',' << mean << ','
                << std::sqrt(sq / traces.size()) << '\n';
    }
    double mi = 0, si = 0;
    for (double v : iters_to_err) mi += v;
    mi = iters_to_err.empty() ? -1 : mi / iters_to_err.size();
    for (double v : iters_to_err) si += (v - mi) * (v - mi);
    si = iters_to_err.empty() ? 0 : std::sqrt(si / iters_to_err.size());
    iters_csv << s2 << ',' << mi << ',' << si << '\n';
  }
  return 0;
}

int cmd_privacy(const CommonOpts& o, const std::vector<int>& n_grid,
                const std::vector<double>& s2_grid, int graph_seeds,
                int sample_cap) {
  std::ofstream csv(o.out + "_privacy.csv");
  csv << kSchemaComment
      << "n,k,f,sigma_delta2,graph_seeds,mean_rho,std_rho,mean_prop2_bound\n";
  nlohmann::json summary;
  summary["k"] = o.k;
  summary["f"] = o.f;
  summary["n_grid"] = n_grid;
  summary["sigma_delta2_grid"] = s2_grid;
  summary["graph_seeds"] = graph_seeds;
  summary["note"] = "n grid is a tool default; override with --n-grid";
  summary["cells"] = nlohmann::json::array();

  for (int n : n_grid) {
    for (double s2 : s2_grid) {
      std::vector<double> rhos, bounds;
      for (int gs = 0; gs < graph_seeds; ++gs) {
        auto g = gopa::assign_roles(
            gopa::generate_k_out(n, o.k, gopa::derive_seed(o.seed, 7 * gs + 1)),
            o.f, gopa::derive_seed(o.seed, 7 * gs + 2));
        std::vector<int> sample;
        auto honest = g.honest_users();
        if (sample_cap > 0 && static_cast<int>(honest.size()) > sample_cap) {
          auto rng = gopa::make_rng(o.seed, 7 * gs + 3);
          std::shuffle(honest.begin(), honest.end(), rng);
          honest.resize(sample_cap);
          sample = honest;
        }
        auto rep = gopa::privacy_report(g, o.sigma_x, std::sqrt(s2), sample);
        for (auto& row : rep.rows) {
          rhos.push_back(row.rho);
          bounds.push_back(row.prop2_bound);
        }
      }
      double mean = std::accumulate(rhos.begin(), rhos.end(), 0.0) / rhos.size();
      double sq = 0;
      for (double r : rhos) sq += (r - mean) * (r - mean);
      double mb = std::accumulate(bounds.begin(), bounds.end(), 0.0) / bounds.size();
      csv << n << ',' << o.k << ',' << o.f << ',' << s2 << ',' << graph_seeds
          << ',' << mean << ',' << std::sqrt(sq / rhos.size()) << ',' << mb
          << '\n';
      summary["cells"].push_back({{"n", n},
                                  {"sigma_delta2", s2},
                                  {"mean_rho", mean},
                                  {"std_rho", std::sqrt(sq / rhos.size())}});
    }
  }
  std::ofstream(o.out + "_privacy.json") << summary.dump(2) << '\n';
  return 0;
}

int cmd_verify(const CommonOpts& o, const std::vector<double>& betas,
               const std::vector<int>& cheats) {
  std::ofstream csv(o.out + "_verify.csv");
  csv << kSchemaComment << "beta,C,trials,detected,empirical_rate,bound\n";

  std::vector<gopa::PaillierKeypair> keys;
  for (int u = 0; u < o.n; ++u)
    keys.push_back(gopa::paillier_keygen(128, gopa::derive_seed(o.seed, 5000 + u)));

  for (double beta : betas) {
    for (int C : cheats) {
      int detected = 0;
      for (int t = 0; t < o.trials; ++t) {
        gopa::VerifiedRunConfig cfg;
        cfg.n = o.n;
        cfg.k = o.k;
        cfg.f = o.f > 0 ? o.f : 0.3;
        cfg.sigma_x = o.sigma_x;
        cfg.sigma_delta = o.sigma_delta;
        cfg.beta = beta;
        cfg.seed = gopa::derive_seed(o.seed, 1000000ULL * C + 1000ULL * t);
        cfg.compute_privacy = false;
        cfg.shared_keys = &keys;
        if (C > 0) {
          auto g = gopa::assign_roles(
              gopa::generate_k_out(cfg.n, cfg.k, gopa::derive_seed(cfg.seed, 1)),
              cfg.f, gopa::derive_seed(cfg.seed, 2));
          cfg.script = gopa::make_random_cheat_script(
              g, C, 1LL << 20, gopa::derive_seed(cfg.seed, 99));
        }
        auto result = gopa::run_verified_protocol(cfg);
        bool caught = false;
        for (auto& a : cfg.script.asymmetric)
          if (result.cheaters.contains(a.cheater)) caught = true;
        if (caught) ++detected;
      }
      csv << beta << ',' << C << ',' << o.trials << ',' << detected << ','
          << static_cast<double>(detected) / o.trials << ','
          << gopa::detection_probability(beta, C) << '\n';
    }
  }
  return 0;
}

int cmd_baseline(const CommonOpts& o, double ldp_eps, double ldp_bound) {
  std::ofstream csv(o.out + "_baseline.csv");
  csv << kSchemaComment << "method,t,rel_error,sum_drift\n";

  // GOPA: run to the convergence bound, report the final relative error.
  auto g = gopa::generate_k_out(o.n, o.k, o.seed);
  auto x = draw_values(o.n, o.sigma_x, gopa::derive_seed(o.seed, 10));
  auto [state, ledger] =
      gopa::randomization_phase(g, x, o.sigma_delta, gopa::derive_seed(o.seed, 11));
  auto bound = gopa::tau_averaging_time_bound(g, o.tau, x.bound,
                                              6.0 * std::max(o.sigma_delta, 1e-6));
  long iters = static_cast<long>(std::ceil(bound.iterations));
  gopa::run_averaging(state, g, iters, gopa::derive_seed(o.seed, 12));
  csv << "gopa," << state.t << ',' << state.rel_error() << ','
      << state.sum_drift() << '\n';

  // Baseline 1: analytic one-shot LDP average, empirical RMSE over trials.
  gopa::LdpConfig cfg(ldp_eps, ldp_bound);
  auto rng = gopa::make_rng(o.seed, 13);
  std::uniform_real_distribution<double> unif(-ldp_bound, ldp_bound);
  Eigen::VectorXd vals(o.n);
  for (int i = 0; i < o.n; ++i) vals[i] = unif(rng);
  gopa::PrivateValues ldp_x(vals, ldp_bound);
  double mse = 0;
  for (int t = 0; t < o.trials; ++t) {
    auto noisy = gopa::ldp_perturb(ldp_x, cfg, gopa::derive_seed(o.seed, 100 + t));
    double err = noisy.average() - ldp_x.average();
    mse += err * err;
  }
  csv << "ldp,0," << std::sqrt(mse / o.trials) << ",0\n";
  csv << "# ldp formula rmse: " << gopa::ldp_rmse_formula(cfg, o.n) << '\n';

  // Baseline 2: exact at fixed-point resolution.
  double central =
      gopa::central_paillier_average(x, 32, gopa::derive_seed(o.seed, 14));
  csv << "central,0," << std::abs(central - x.average()) << ",0\n";
  return 0;
}

int cmd_graph(const CommonOpts& o) {
  auto g = gopa::assign_roles(gopa::generate_k_out(o.n, o.k, o.seed), o.f,
                              gopa::derive_seed(o.seed, 1));
  auto L = gopa::laplacian(g);
  std::cout << "n=" << g.n() << " k=" << o.k << " edges=" << g.num_edges()
            << " max_degree=" << g.max_degree()
            << " connected=" << (gopa::is_connected(g) ? "yes" : "no")
            << " lambda2=" << gopa::lambda2(L) << '\n';
  std::ofstream edges(o.out + "_graph.txt");
  gopa::write_edge_list(g, edges);
  std::ofstream deg(o.out + "_degrees.csv");
  gopa::write_degree_csv(g, deg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GOPA private-averaging simulator"};
  app.set_config("--config", "", "key-value config file; flags override");
  app.require_subcommand(1);

  CommonOpts o;
  std::vector<double> s2_grid{1, 10, 100, 1000, 10000};
  std::vector<int> n_grid{100, 1000, 10000};
  std::vector<double> betas{0.25, 0.5, 0.75};
  std::vector<int> cheat_grid{1, 2, 5};
  int runs = 10, graph_seeds = 10, sample_cap = 100;
  double ldp_eps = 0.1, ldp_bound = 0.5;
  std::string emit_config;

  auto* conv = app.add_subcommand("convergence", "noise-vs-convergence traces");
  add_common(conv, o);
  conv->add_option("--sigma-delta2-grid", s2_grid, "noise variance grid");
  conv->add_option("--runs", runs, "seeded runs per grid point");

  auto* priv = app.add_subcommand("privacy", "preserved-variance grids");
  add_common(priv, o);
  priv->add_option("--sigma-delta2-grid", s2_grid, "noise variance grid");
  priv->add_option("--n-grid", n_grid, "user-count grid");
  priv->add_option("--graph-seeds", graph_seeds, "graphs per cell");
  priv->add_option("--sample-users", sample_cap,
                   "honest-user sample cap per graph (0 = all)");

  auto* verify = app.add_subcommand("verify", "cheater-detection statistics");
  add_common(verify, o);
  verify->add_option("--beta-grid", betas, "unrevealed fractions");
  verify->add_option("--cheat-grid", cheat_grid, "cheat counts");

  auto* base = app.add_subcommand("baseline", "GOPA vs LDP vs central table");
  add_common(base, o);
  base->add_option("--ldp-epsilon", ldp_eps, "LDP budget");
  base->add_option("--ldp-bound", ldp_bound, "LDP value bound B");

  auto* graph = app.add_subcommand("graph", "topology statistics");
  add_common(graph, o);

  app.add_option("--emit-config", emit_config,
                 "write the parsed configuration to a file and continue");

  try {
    app.parse(argc, argv);
    if (!emit_config.empty())
      std::ofstream(emit_config) << app.config_to_str(false, false);
    if (conv->parsed()) return cmd_convergence(o, s2_grid, runs);
    if (priv->parsed()) return cmd_privacy(o, n_grid, s2_grid, graph_seeds, sample_cap);
    if (verify->parsed()) {
      if (o.trials == 10) o.trials = 100;  // heavier default for Monte-Carlo
      if (o.n == 1000) o.n = 20;           // detection rate does not need scale
      if (o.k == 10) o.k = 3;
      return cmd_verify(o, betas, cheat_grid);
    }
    if (base->parsed()) {
      if (o.trials == 10) o.trials = 1000;
      return cmd_baseline(o, ldp_eps, ldp_bound);
    }
    if (graph->parsed()) return cmd_graph(o);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const gopa::parameter_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const gopa::range_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const gopa::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
