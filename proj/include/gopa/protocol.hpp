#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <unordered_map>
#include <vector>

#include "gopa/graph.hpp"

namespace gopa {

// Per-user private inputs with the bound B_X used by the convergence bound.
struct PrivateValues {
  Eigen::VectorXd values;
  double bound;  // B_X, |X_u| <= bound

  PrivateValues(Eigen::VectorXd v, double b);
  int n() const { return static_cast<int>(values.size()); }
  double average() const { return values.mean(); }
};

// Record of exchanged noise terms, one per edge. Retrieval is antisymmetric:
// get(v, u) == -get(u, v).
class NoiseLedger {
 public:
  NoiseLedger(double sigma_delta, double bound)
      : sigma_delta_(sigma_delta), bound_(bound) {}

  void record(int u, int v, double delta);  // delta is the (u,v) orientation
  double get(int u, int v) const;
  bool has(int u, int v) const;
  std::size_t size() const { return terms_.size(); }
  double sigma_delta() const { return sigma_delta_; }
  double bound() const { return bound_; }  // B_delta

  // Entries in canonical (u < v) orientation.
  std::vector<std::pair<std::pair<int, int>, double>> entries() const;

 private:
  std::unordered_map<std::uint64_t, double> terms_;
  double sigma_delta_;
  double bound_;
};

struct TracePoint {
  long t;
  double rel_error;
  double sum_drift;
};

// Noisy values and gossip iterates of one protocol run.
struct ProtocolState {
  Eigen::VectorXd noisy;       // X~ (current iterate)
  Eigen::VectorXd noise_sums;  // Delta_u after randomization
  long t = 0;
  double target_average = 0.0;  // X^avg of the private inputs
  double input_norm = 0.0;      // ||X||
  double initial_sum = 0.0;     // sum X, for drift accounting
  std::vector<TracePoint> trace;

  double rel_error() const;
  double sum_drift() const;
};

// Algorithm: every edge (u,v), u<v, jointly draws delta ~ N(0, sigma^2);
// u adds it, v subtracts it. The global sum is unchanged.
std::pair<ProtocolState, NoiseLedger> randomization_phase(
    const NetworkGraph& g, const PrivateValues& x, double sigma_delta,
    std::uint64_t rng_seed);

// Fixed-point variant on scaled integers: conservation is exact. Noise is
// quantized to the same grid as the inputs.
struct FixedPointRun {
  std::vector<std::int64_t> noisy;
  std::vector<std::int64_t> noise_sums;
  std::vector<std::int64_t> inputs;
  NoiseLedger ledger;  // quantized values, stored as reals on the grid
};
FixedPointRun randomization_phase_fixed(const NetworkGraph& g,
                                        const PrivateValues& x,
                                        double sigma_delta, int scale_bits,
                                        std::uint64_t rng_seed);

// One pairwise-averaging activation along an existing edge.
void gossip_step(ProtocolState& state, const NetworkGraph& g, int u, int v);

// max_iters uniform random edge activations; the error trace is recorded
// every record_every steps (and at t = 0 and the final step).
void run_averaging(ProtocolState& state, const NetworkGraph& g, long max_iters,
                   std::uint64_t rng_seed, long record_every = 50);

struct TauBound {
  double iterations;
  bool degenerate;  // C_G hit the floor near 0 (e.g. tiny complete graphs)
};

// Convergence-time bound: 3 log(2 B_delta (d_max+3) / (tau B_X)) / log(1/C_G)
// with C_G = 1 - lambda2(L)/|E|.
TauBound tau_averaging_time_bound(const NetworkGraph& g, double tau, double B_X,
                                  double B_delta);

// Smallest recorded t such that for all recorded t' >= t the fraction of
// trials with rel_error >= tau is at most tau. Returns -1 if never reached.
long empirical_tau_averaging_time(const NetworkGraph& g, const PrivateValues& x,
                                  double sigma_delta, double tau, int trials,
                                  long max_iters, long record_every,
                                  std::uint64_t rng_seed);

enum class DropoutPolicy { Residual, Rollback };

struct DropoutResult {
  std::vector<int> survivors;
  Eigen::VectorXd surviving_noisy;   // indexed like survivors
  double survivor_noisy_sum;
  double survivor_private_sum;
  double residual_bias;  // survivor_noisy_sum - survivor_private_sum
};

DropoutResult simulate_dropout(const ProtocolState& state,
                               const NoiseLedger& ledger, const NetworkGraph& g,
                               const PrivateValues& x,
                               const std::vector<int>& dropouts,
                               DropoutPolicy policy);

// Trace CSV: columns t, rel_error, sum_drift.
void write_trace_csv(const ProtocolState& state, std::ostream& out);

}  // namespace gopa
