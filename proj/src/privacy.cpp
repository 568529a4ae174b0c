#include "gopa/privacy.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <algorithm>
#include <cmath>
#include <ostream>

#include "gopa/errors.hpp"

namespace gopa {

namespace {

std::uint64_t pack_edge(int u, int v) {
  if (u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(v);
}

int honest_index(const NetworkGraph& g_honest, int original_u) {
  const auto& ids = g_honest.original_ids();
  auto it = std::find(ids.begin(), ids.end(), original_u);
  if (it == ids.end()) throw std::domain_error("user is not honest");
  return static_cast<int>(it - ids.begin());
}

}  // namespace

AdversaryView AdversaryView::from_run(const NetworkGraph& g,
                                      const ProtocolState& s,
                                      const NoiseLedger& ledger,
                                      const PrivateValues& x) {
  AdversaryView view;
  view.noisy = s.noisy;
  view.graph = &g;
  for (auto& [edge, d] : ledger.entries()) {
    auto [u, v] = edge;
    if (!g.is_honest(u) || !g.is_honest(v))
      view.malicious_incident[pack_edge(u, v)] = d;
  }
  for (int u = 0; u < g.n(); ++u)
    if (!g.is_honest(u)) view.malicious_values[u] = x.values[u];
  return view;
}

Eigen::VectorXd AdversaryView::honest_rhs() const {
  const NetworkGraph& g = *graph;
  std::vector<int> honest = g.honest_users();
  Eigen::VectorXd rhs(honest.size());
  for (std::size_t i = 0; i < honest.size(); ++i) {
    int u = honest[i];
    double b = noisy[u];
    for (int v : g.neighbors(u)) {
      if (g.is_honest(v)) continue;
      auto it = malicious_incident.find(pack_edge(u, v));
      if (it == malicious_incident.end())
        throw protocol_error("AdversaryView: missing malicious-incident noise");
      double d = it->second;          // stored in (min,max) orientation
      b -= (u < v) ? d : -d;          // delta_{u,v}
    }
    rhs[i] = b;
  }
  return rhs;
}

double PrivacyReport::mean_rho() const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (auto& r : rows) s += r.rho;
  return s / rows.size();
}

double PrivacyReport::min_rho() const {
  double m = 1.0;
  for (auto& r : rows) m = std::min(m, r.rho);
  return rows.empty() ? 0.0 : m;
}

double PrivacyReport::max_rho() const {
  double m = 0.0;
  for (auto& r : rows) m = std::max(m, r.rho);
  return m;
}

SmoothingSolver::SmoothingSolver(const LaplacianMatrix& L, double alpha)
    : alpha_(alpha), dense_(L.n() <= 2000) {
  if (alpha < 0) throw parameter_error("SmoothingSolver: alpha must be >= 0");
  double lmax_bound = 0.0;
  for (int i = 0; i < L.n(); ++i) lmax_bound = std::max(lmax_bound, 2.0 * L.mat.coeff(i, i));
  cond_bound_ = 1.0 + alpha * lmax_bound;

  if (dense_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L.dense());
    if (es.info() != Eigen::Success)
      throw numerical_error("SmoothingSolver: eigendecomposition failed");
    eigvecs_ = es.eigenvectors();
    eigvals_ = es.eigenvalues();
    // Clamp the numerically-perturbed kernel to exactly zero so huge alpha
    // reproduces the per-component mass limit.
    const double tol = 1e-9 * std::max(1.0, eigvals_.cwiseAbs().maxCoeff());
    for (int i = 0; i < eigvals_.size(); ++i) {
      if (eigvals_[i] < tol) eigvals_[i] = 0.0;
    }
  } else {
    system_ = L.mat * alpha;
    for (int i = 0; i < L.n(); ++i) system_.coeffRef(i, i) += 1.0;
    system_.makeCompressed();
  }
}

Eigen::VectorXd SmoothingSolver::apply(const Eigen::VectorXd& y) const {
  if (alpha_ == 0.0) return y;  // M = I, bit-exact
  if (dense_) {
    Eigen::VectorXd z = eigvecs_.transpose() * y;
    for (int i = 0; i < z.size(); ++i) z[i] /= 1.0 + alpha_ * eigvals_[i];
    return eigvecs_ * z;
  }
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-12);
  cg.compute(system_);
  Eigen::VectorXd s = cg.solve(y);
  if (cg.info() != Eigen::Success)
    throw numerical_error("SmoothingSolver: CG did not converge");
  return s;
}

Eigen::VectorXd smoothing_apply(const LaplacianMatrix& L_H, double alpha,
                                const Eigen::VectorXd& y) {
  if (y.size() != L_H.n())
    throw parameter_error("smoothing_apply: size mismatch");
  return SmoothingSolver(L_H, alpha).apply(y);
}

double preserved_variance(const NetworkGraph& g, int u, double sigma_x,
                          double sigma_delta) {
  if (sigma_x <= 0) throw parameter_error("preserved_variance: sigma_x must be > 0");
  if (!g.is_honest(u)) throw std::domain_error("preserved_variance: user is malicious");
  NetworkGraph gh = honest_subgraph(g);
  int idx = honest_index(gh, u);
  double alpha = (sigma_delta * sigma_delta) / (sigma_x * sigma_x);
  SmoothingSolver solver(laplacian(gh), alpha);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(gh.n());
  e[idx] = 1.0;
  return 1.0 - solver.apply(e)[idx];
}

PrivacyReport privacy_report(const NetworkGraph& g, double sigma_x,
                             double sigma_delta,
                             const std::vector<int>& user_sample) {
  if (sigma_x <= 0) throw parameter_error("privacy_report: sigma_x must be > 0");
  PrivacyReport rep;
  rep.sigma_x2 = sigma_x * sigma_x;
  rep.sigma_delta2 = sigma_delta * sigma_delta;
  rep.alpha = rep.sigma_delta2 / rep.sigma_x2;

  NetworkGraph gh = honest_subgraph(g);
  SmoothingSolver solver(laplacian(gh), rep.alpha);

  std::vector<int> users = user_sample.empty() ? gh.original_ids() : user_sample;
  rep.rows.reserve(users.size());
  for (int u : users) {
    if (!g.is_honest(u))
      throw std::domain_error("privacy_report: sampled user is malicious");
    int idx = honest_index(gh, u);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(gh.n());
    e[idx] = 1.0;
    double rho = 1.0 - solver.apply(e)[idx];
    int h = gh.degree(idx);
    double bound_ratio =
        variance_lower_bound(h, sigma_x, sigma_delta) / rep.sigma_x2;
    rep.rows.push_back({u, h, rho, 1.0 - rho, bound_ratio});
  }
  return rep;
}

double variance_lower_bound(int num_honest_neighbors, double sigma_x,
                            double sigma_delta) {
  if (num_honest_neighbors < 0)
    throw parameter_error("variance_lower_bound: h must be >= 0");
  if (num_honest_neighbors == 0) return 0.0;
  const double h = num_honest_neighbors;
  const double sx2 = sigma_x * sigma_x;
  const double sd2 = sigma_delta * sigma_delta;
  return sx2 * (sd2 * (h + 1) / (sx2 + sd2 * (h + 1))) * (h / (h + 1));
}

Eigen::MatrixXd honest_incidence(const NetworkGraph& g_honest) {
  Eigen::MatrixXd B =
      Eigen::MatrixXd::Zero(g_honest.n(), g_honest.num_edges());
  int e = 0;
  for (auto [u, v] : g_honest.edges()) {
    B(u, e) = 1.0;   // delta_{u,v} enters u's equation with +1
    B(v, e) = -1.0;  // and v's with -1 (v uses -delta)
    ++e;
  }
  return B;
}

namespace {

// Posterior covariance of V = (X^H, delta^H) given A V = b, with
// A = [I B^H] and diagonal prior Sigma. Returns the full matrix
// Sigma - Sigma A^T (A Sigma A^T)^-1 A Sigma restricted to what the caller
// extracts; built exactly as written, independent of the closed form.
struct OracleSystem {
  NetworkGraph gh;
  Eigen::MatrixXd A;
  Eigen::VectorXd sigma_diag;  // prior variances along V

  OracleSystem(const NetworkGraph& g, const Eigen::VectorXd& sigma_x2_honest,
               double sigma_delta)
      : gh(honest_subgraph(g)) {
    const int nh = gh.n();
    const int ne = static_cast<int>(gh.num_edges());
    if (sigma_x2_honest.size() != nh)
      throw parameter_error("oracle: prior variance vector size mismatch");
    A.resize(nh, nh + ne);
    A << Eigen::MatrixXd::Identity(nh, nh), honest_incidence(gh);
    sigma_diag.resize(nh + ne);
    sigma_diag.head(nh) = sigma_x2_honest;
    sigma_diag.tail(ne).setConstant(sigma_delta * sigma_delta);
  }

  Eigen::MatrixXd gram() const {  // A Sigma A^T
    return A * sigma_diag.asDiagonal() * A.transpose();
  }
};

}  // namespace

double conditional_variance_oracle(const NetworkGraph& g, int u,
                                   const Eigen::VectorXd& sigma_x2_honest,
                                   double sigma_delta) {
  if (!g.is_honest(u))
    throw std::domain_error("conditional_variance_oracle: user is malicious");
  OracleSystem sys(g, sigma_x2_honest, sigma_delta);
  int idx = honest_index(sys.gh, u);

  Eigen::MatrixXd S = sys.gram();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  if (ldlt.info() != Eigen::Success)
    throw numerical_error("conditional_variance_oracle: singular system");
  Eigen::MatrixXd SigmaAt = sys.sigma_diag.asDiagonal() * sys.A.transpose();
  Eigen::MatrixXd posterior =
      Eigen::MatrixXd(sys.sigma_diag.asDiagonal()) -
      SigmaAt * ldlt.solve(SigmaAt.transpose());
  return posterior(idx, idx);
}

double conditional_variance_oracle(const NetworkGraph& g, int u, double sigma_x,
                                   double sigma_delta) {
  if (sigma_x <= 0)
    throw parameter_error("conditional_variance_oracle: sigma_x must be > 0");
  int nh = honest_subgraph(g).n();
  Eigen::VectorXd prior = Eigen::VectorXd::Constant(nh, sigma_x * sigma_x);
  return conditional_variance_oracle(g, u, prior, sigma_delta);
}

Eigen::VectorXd oracle_posterior_mean(const NetworkGraph& g,
                                      const AdversaryView& view, double sigma_x,
                                      double sigma_delta) {
  OracleSystem sys(
      g, Eigen::VectorXd::Constant(honest_subgraph(g).n(), sigma_x * sigma_x),
      sigma_delta);
  Eigen::VectorXd b = view.honest_rhs();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sys.gram());
  Eigen::VectorXd mean_all =
      sys.sigma_diag.asDiagonal() * sys.A.transpose() * ldlt.solve(b);
  return mean_all.head(sys.gh.n());
}

double compose_privacy(const std::vector<double>& rho_sequence) {
  double total = 1.0;
  for (double r : rho_sequence) {
    if (r < 0.0 || r > 1.0)
      throw parameter_error("compose_privacy: ratio outside [0,1]");
    total *= r;
  }
  return total;
}

double expected_error_ratio(const PrivacyReport& report, int u) {
  for (auto& r : report.rows)
    if (r.user == u) return r.rho;
  throw parameter_error("expected_error_ratio: user not in report");
}

void write_privacy_csv(const PrivacyReport& report, std::ostream& out) {
  out << "user,honest_neighbors,rho,epsilon,prop2_bound\n";
  for (auto& r : report.rows)
    out << r.user << ',' << r.honest_neighbors << ',' << r.rho << ','
        << r.epsilon << ',' << r.prop2_bound << '\n';
}

}  // namespace gopa
