#include "gopa/graph.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>

#include "gopa/errors.hpp"
#include "gopa/rng.hpp"

namespace gopa {

namespace {

std::uint64_t pack_edge(int u, int v) {
  if (u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(v);
}

}  // namespace

NetworkGraph::NetworkGraph(int n, std::vector<std::pair<int, int>> edges,
                           std::vector<Role> roles)
    : n_(n), roles_(std::move(roles)) {
  if (n < 1) throw parameter_error("NetworkGraph: n must be >= 1");
  if (roles_.empty()) roles_.assign(n, Role::Honest);
  if (static_cast<int>(roles_.size()) != n)
    throw parameter_error("NetworkGraph: roles size mismatch");

  for (auto& [u, v] : edges) {
    if (u == v) throw parameter_error("NetworkGraph: self-loop");
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw parameter_error("NetworkGraph: vertex out of range");
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);

  adjacency_.resize(n);
  edge_set_.reserve(edges_.size() * 2);
  for (auto [u, v] : edges_) {
    adjacency_[u].push_back(v);
    adjacency_[v].push_back(u);
    edge_set_.insert(pack_edge(u, v));
  }
  original_ids_.resize(n);
  std::iota(original_ids_.begin(), original_ids_.end(), 0);
}

bool NetworkGraph::has_edge(int u, int v) const {
  if (u == v) return false;
  return edge_set_.count(pack_edge(u, v)) != 0;
}

int NetworkGraph::max_degree() const {
  int d = 0;
  for (int u = 0; u < n_; ++u) d = std::max(d, degree(u));
  return d;
}

std::vector<int> NetworkGraph::honest_users() const {
  std::vector<int> out;
  for (int u = 0; u < n_; ++u)
    if (roles_[u] == Role::Honest) out.push_back(u);
  return out;
}

int NetworkGraph::num_honest() const {
  return static_cast<int>(std::count(roles_.begin(), roles_.end(), Role::Honest));
}

double NetworkGraph::malicious_fraction() const {
  return 1.0 - static_cast<double>(num_honest()) / n_;
}

NetworkGraph generate_k_out(int n, int k, std::uint64_t rng_seed) {
  if (n < 3) throw parameter_error("generate_k_out: n must be >= 3");
  if (k < 1 || k >= n) throw parameter_error("generate_k_out: need 1 <= k < n");

  auto rng = make_rng(rng_seed);
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(n) * k);

  // Partial Fisher-Yates over the n-1 other users, per selector.
  std::vector<int> pool(n - 1);
  for (int u = 0; u < n; ++u) {
    int idx = 0;
    for (int v = 0; v < n; ++v)
      if (v != u) pool[idx++] = v;
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 2);
      std::swap(pool[i], pool[pick(rng)]);
      edges.emplace_back(u, pool[i]);
    }
  }
  NetworkGraph g(n, std::move(edges));
  g.k = k;
  g.seed = rng_seed;
  return g;
}

NetworkGraph assign_roles(const NetworkGraph& g, double f, std::uint64_t rng_seed) {
  if (f < 0.0 || f >= 1.0)
    throw parameter_error("assign_roles: need 0 <= f < 1");
  int m = static_cast<int>(std::floor(f * g.n()));
  auto rng = make_rng(rng_seed);
  std::vector<int> perm(g.n());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  perm.resize(m);
  return assign_roles(g, perm);
}

NetworkGraph assign_roles(const NetworkGraph& g, const std::vector<int>& malicious) {
  std::vector<Role> roles(g.n(), Role::Honest);
  for (int u : malicious) {
    if (u < 0 || u >= g.n()) throw parameter_error("assign_roles: bad user id");
    roles[u] = Role::Malicious;
  }
  NetworkGraph out(g.n(), g.edges(), std::move(roles));
  out.k = g.k;
  out.seed = g.seed;
  return out;
}

NetworkGraph honest_subgraph(const NetworkGraph& g) {
  std::vector<int> honest = g.honest_users();
  std::vector<int> new_id(g.n(), -1);
  for (std::size_t i = 0; i < honest.size(); ++i) new_id[honest[i]] = static_cast<int>(i);

  std::vector<std::pair<int, int>> edges;
  for (auto [u, v] : g.edges())
    if (new_id[u] >= 0 && new_id[v] >= 0)
      edges.emplace_back(new_id[u], new_id[v]);

  NetworkGraph sub(static_cast<int>(honest.size()), std::move(edges));
  sub.original_ids_ = honest;
  return sub;
}

LaplacianMatrix laplacian(const NetworkGraph& g) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(g.num_edges() * 2 + g.n());
  for (int u = 0; u < g.n(); ++u)
    trip.emplace_back(u, u, static_cast<double>(g.degree(u)));
  for (auto [u, v] : g.edges()) {
    trip.emplace_back(u, v, -1.0);
    trip.emplace_back(v, u, -1.0);
  }
  LaplacianMatrix L;
  L.mat.resize(g.n(), g.n());
  L.mat.setFromTriplets(trip.begin(), trip.end());
  return L;
}

namespace {

// Deflated inverse power iteration for lambda2 at scales where a full dense
// eigendecomposition is wasteful. Works on the complement of the all-ones
// kernel; inner solves by CG on L restricted to that subspace.
double lambda2_iterative(const Eigen::SparseMatrix<double>& L, double tol) {
  const int n = static_cast<int>(L.rows());
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
  auto deflate = [&](Eigen::VectorXd& v) { v -= ones.dot(v) * ones; };

  auto cg_solve = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r = b;
    Eigen::VectorXd p = r;
    double rs = r.squaredNorm();
    for (int it = 0; it < 10 * n && rs > 1e-24 * b.squaredNorm(); ++it) {
      Eigen::VectorXd Ap = L * p;
      double a = rs / p.dot(Ap);
      x += a * p;
      r -= a * Ap;
      deflate(r);
      double rs2 = r.squaredNorm();
      p = r + (rs2 / rs) * p;
      rs = rs2;
    }
    return x;
  };

  std::mt19937_64 rng(12345);
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(rng);
  deflate(v);
  v.normalize();

  double lam = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd w = cg_solve(v);
    deflate(w);
    double nrm = w.norm();
    if (nrm < 1e-300) return 0.0;  // kernel dimension > 1: disconnected
    w /= nrm;
    double lam_new = w.dot(L * w);
    if (std::abs(lam_new - lam) < tol * std::max(1.0, lam_new)) return lam_new;
    lam = lam_new;
    v = w;
  }
  return lam;
}

}  // namespace

double lambda2(const LaplacianMatrix& L) {
  const int n = L.n();
  if (n < 2) return 0.0;
  if (n <= 2000) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L.dense(),
                                                      Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
      throw numerical_error("lambda2: eigensolver failed");
    return std::max(0.0, es.eigenvalues()[1]);
  }
  return std::max(0.0, lambda2_iterative(L.mat, 1e-8));
}

bool is_connected(const NetworkGraph& g) {
  if (g.n() == 0) return false;
  std::vector<char> seen(g.n(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : g.neighbors(u)) {
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count == g.n();
}

void write_edge_list(const NetworkGraph& g, std::ostream& out) {
  out << g.n() << ' ' << g.k << ' ' << g.seed << '\n';
  for (auto [u, v] : g.edges()) out << u << ' ' << v << '\n';
  for (int u = 0; u < g.n(); ++u)
    out << u << ':' << (g.is_honest(u) ? 'H' : 'M') << '\n';
}

NetworkGraph read_edge_list(std::istream& in) {
  int n = 0, k = 0;
  std::uint64_t seed = 0;
  if (!(in >> n >> k >> seed))
    throw parameter_error("read_edge_list: bad header");
  std::vector<std::pair<int, int>> edges;
  std::vector<Role> roles(n, Role::Honest);
  std::string tok;
  while (in >> tok) {
    auto colon = tok.find(':');
    if (colon != std::string::npos) {
      int u = std::stoi(tok.substr(0, colon));
      if (u < 0 || u >= n) throw parameter_error("read_edge_list: bad role line");
      roles[u] = tok[colon + 1] == 'M' ? Role::Malicious : Role::Honest;
    } else {
      int u = std::stoi(tok);
      int v;
      if (!(in >> v)) throw parameter_error("read_edge_list: dangling edge");
      edges.emplace_back(u, v);
    }
  }
  NetworkGraph g(n, std::move(edges), std::move(roles));
  g.k = k;
  g.seed = seed;
  return g;
}

void write_degree_csv(const NetworkGraph& g, std::ostream& out) {
  out << "user,degree,honest_neighbors\n";
  for (int u = 0; u < g.n(); ++u) {
    int h = 0;
    for (int v : g.neighbors(u))
      if (g.is_honest(v)) ++h;
    out << u << ',' << g.degree(u) << ',' << h << '\n';
  }
}

}  // namespace gopa
