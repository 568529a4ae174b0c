#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <vector>

#include "gopa/graph.hpp"
#include "gopa/protocol.hpp"

namespace gopa {

// Everything the colluding malicious users observe: all noisy values, the
// full graph, noise on edges incident to at least one malicious user, and
// the malicious users' own inputs. Never holds honest-honest noise or an
// honest private value.
struct AdversaryView {
  Eigen::VectorXd noisy;  // X~ for all users
  const NetworkGraph* graph;
  std::unordered_map<std::uint64_t, double> malicious_incident;  // (u<v) -> delta
  std::unordered_map<int, double> malicious_values;

  static AdversaryView from_run(const NetworkGraph& g, const ProtocolState& s,
                                const NoiseLedger& ledger,
                                const PrivateValues& x);

  // X^H_u = X~_u minus all noise u exchanged with malicious users, for each
  // honest u in honest-subgraph order. The right-hand side of the adversary's
  // linear system.
  Eigen::VectorXd honest_rhs() const;
};

struct PrivacyReport {
  double sigma_x2 = 0.0;
  double sigma_delta2 = 0.0;
  double alpha = 0.0;
  struct Row {
    int user;  // original id
    int honest_neighbors;
    double rho;      // preserved variance ratio
    double epsilon;  // 1 - rho
    double prop2_bound;  // local lower bound on rho
  };
  std::vector<Row> rows;

  double mean_rho() const;
  double min_rho() const;
  double max_rho() const;
};

// Applies M = (I + alpha L)^-1 to y. Solves the SPD system; no explicit
// inverse. Dense path below n=2000, CG above (tolerance 1e-12).
class SmoothingSolver {
 public:
  SmoothingSolver(const LaplacianMatrix& L, double alpha);
  Eigen::VectorXd apply(const Eigen::VectorXd& y) const;
  double condition_bound() const { return cond_bound_; }

 private:
  double alpha_;
  bool dense_;
  double cond_bound_;
  // Dense path keeps the eigendecomposition of L so the exact kernel
  // (per-component all-ones) survives extreme alpha.
  Eigen::MatrixXd eigvecs_;
  Eigen::VectorXd eigvals_;
  Eigen::SparseMatrix<double> system_;  // I + alpha L, CG path
};

Eigen::VectorXd smoothing_apply(const LaplacianMatrix& L_H, double alpha,
                                const Eigen::VectorXd& y);

// Exact preserved-variance ratio rho_u = 1 - e_u^T M e_u with M built from
// the honest subgraph. Valid for disconnected honest subgraphs too.
double preserved_variance(const NetworkGraph& g, int u, double sigma_x,
                          double sigma_delta);

// One factorization, all (or sampled) honest users.
PrivacyReport privacy_report(const NetworkGraph& g, double sigma_x,
                             double sigma_delta,
                             const std::vector<int>& user_sample = {});

// Local bound depending only on the honest-neighbor count h:
// sigma_x^2 * [sigma_d^2 (h+1) / (sigma_x^2 + sigma_d^2 (h+1))] * [h/(h+1)].
double variance_lower_bound(int num_honest_neighbors, double sigma_x,
                            double sigma_delta);

// Independent route: posterior variance at X_u from the adversary's linear
// system A = [I B^H] via the Gaussian Schur complement. Returns a variance,
// not a ratio. Optional per-user prior variances (honest-subgraph order).
double conditional_variance_oracle(const NetworkGraph& g, int u, double sigma_x,
                                   double sigma_delta);
double conditional_variance_oracle(const NetworkGraph& g, int u,
                                   const Eigen::VectorXd& sigma_x2_honest,
                                   double sigma_delta);

// Posterior mean of all honest values given the adversary view; used for the
// prediction-error check. Honest-subgraph order.
Eigen::VectorXd oracle_posterior_mean(const NetworkGraph& g,
                                      const AdversaryView& view, double sigma_x,
                                      double sigma_delta);

// Oriented incidence matrix of the honest subgraph (edges oriented low->high).
Eigen::MatrixXd honest_incidence(const NetworkGraph& g_honest);

// Sequential composition under the recursive-prior model: the caller supplies
// per-run ratios each computed with the previous posterior as prior.
double compose_privacy(const std::vector<double>& rho_sequence);

// rho_u read back as the adversary's squared-prediction-error ratio.
double expected_error_ratio(const PrivacyReport& report, int u);

// CSV: user, honest_neighbors, rho, epsilon, prop2_bound.
void write_privacy_csv(const PrivacyReport& report, std::ostream& out);

}  // namespace gopa
