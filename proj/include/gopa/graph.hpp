#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace gopa {

enum class Role : std::uint8_t { Honest, Malicious };

// Undirected communication topology with honest/malicious labels.
// Immutable after construction; cheap to share across trials.
class NetworkGraph {
 public:
  NetworkGraph(int n, std::vector<std::pair<int, int>> edges,
               std::vector<Role> roles = {});

  int n() const { return n_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<int>& neighbors(int u) const { return adjacency_[u]; }
  int degree(int u) const { return static_cast<int>(adjacency_[u].size()); }
  int max_degree() const;
  bool has_edge(int u, int v) const;

  Role role(int u) const { return roles_[u]; }
  bool is_honest(int u) const { return roles_[u] == Role::Honest; }
  std::vector<int> honest_users() const;
  int num_honest() const;
  double malicious_fraction() const;

  // Generation metadata (0 when the graph was not produced by generate_k_out).
  int k = 0;
  std::uint64_t seed = 0;

  // Original vertex ids when this graph is an induced subgraph; identity
  // otherwise.
  const std::vector<int>& original_ids() const { return original_ids_; }

  friend NetworkGraph honest_subgraph(const NetworkGraph& g);

 private:
  int n_;
  std::vector<std::pair<int, int>> edges_;           // u < v, sorted, unique
  std::vector<std::vector<int>> adjacency_;
  std::unordered_set<std::uint64_t> edge_set_;
  std::vector<Role> roles_;
  std::vector<int> original_ids_;
};

// Graph Laplacian L = diag(d) - A, held sparse; densified on demand for
// small solves.
struct LaplacianMatrix {
  Eigen::SparseMatrix<double> mat;
  int n() const { return static_cast<int>(mat.rows()); }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(mat); }
};

// Random k-out graph: every user selects k distinct others uniformly;
// the edge set is the union of selections.
NetworkGraph generate_k_out(int n, int k, std::uint64_t rng_seed);

// Marks floor(f*n) uniformly chosen users malicious. An explicit list can be
// given instead for targeted placement.
NetworkGraph assign_roles(const NetworkGraph& g, double f, std::uint64_t rng_seed);
NetworkGraph assign_roles(const NetworkGraph& g, const std::vector<int>& malicious);

// Subgraph induced by the honest users, vertices relabelled 0..|U^H|-1
// (original ids retained in original_ids()).
NetworkGraph honest_subgraph(const NetworkGraph& g);

LaplacianMatrix laplacian(const NetworkGraph& g);

// Second-smallest eigenvalue of L; > 0 iff the graph is connected.
double lambda2(const LaplacianMatrix& L);

bool is_connected(const NetworkGraph& g);

// Edge-list text format: header "n k seed", one "u v" line per edge, then
// one "u:H" or "u:M" line per user.
void write_edge_list(const NetworkGraph& g, std::ostream& out);
NetworkGraph read_edge_list(std::istream& in);
void write_degree_csv(const NetworkGraph& g, std::ostream& out);

}  // namespace gopa
