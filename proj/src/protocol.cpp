#include "gopa/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "gopa/errors.hpp"
#include "gopa/rng.hpp"

namespace gopa {

namespace {

std::uint64_t pack_edge(int u, int v) {
  if (u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(v);
}

}  // namespace

PrivateValues::PrivateValues(Eigen::VectorXd v, double b)
    : values(std::move(v)), bound(b) {
  if (bound <= 0) throw parameter_error("PrivateValues: bound must be > 0");
  for (int i = 0; i < values.size(); ++i)
    if (std::abs(values[i]) > bound)
      throw parameter_error("PrivateValues: |X_u| exceeds bound");
}

void NoiseLedger::record(int u, int v, double delta) {
  if (u == v) throw protocol_error("NoiseLedger: self pair");
  if (u > v) {
    std::swap(u, v);
    delta = -delta;
  }
  terms_[pack_edge(u, v)] = delta;
}

double NoiseLedger::get(int u, int v) const {
  auto it = terms_.find(pack_edge(u, v));
  if (it == terms_.end()) throw protocol_error("NoiseLedger: no entry");
  return u < v ? it->second : -it->second;
}

bool NoiseLedger::has(int u, int v) const {
  return terms_.count(pack_edge(u, v)) != 0;
}

std::vector<std::pair<std::pair<int, int>, double>> NoiseLedger::entries() const {
  std::vector<std::pair<std::pair<int, int>, double>> out;
  out.reserve(terms_.size());
  for (auto& [key, d] : terms_)
    out.push_back({{static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffu)}, d});
  return out;
}

double ProtocolState::rel_error() const {
  if (input_norm == 0.0) return 0.0;
  double sq = 0.0;
  for (int i = 0; i < noisy.size(); ++i) {
    double d = noisy[i] - target_average;
    sq += d * d;
  }
  return std::sqrt(sq) / input_norm;
}

double ProtocolState::sum_drift() const {
  double denom = std::max(std::abs(initial_sum), 1.0);
  return std::abs(noisy.sum() - initial_sum) / denom;
}

std::pair<ProtocolState, NoiseLedger> randomization_phase(
    const NetworkGraph& g, const PrivateValues& x, double sigma_delta,
    std::uint64_t rng_seed) {
  if (sigma_delta < 0)
    throw parameter_error("randomization_phase: sigma_delta must be >= 0");
  if (x.n() != g.n())
    throw parameter_error("randomization_phase: value/graph size mismatch");

  // Edges are visited in canonical order; the lower-indexed user's stream is
  // modelled by one run-level RNG, the ledger standing in for the channel.
  auto rng = make_rng(rng_seed);
  std::normal_distribution<double> noise(0.0, sigma_delta > 0 ? sigma_delta : 1.0);

  NoiseLedger ledger(sigma_delta, 6.0 * sigma_delta);
  ProtocolState state;
  state.noise_sums = Eigen::VectorXd::Zero(g.n());
  for (auto [u, v] : g.edges()) {
    double d = sigma_delta > 0 ? noise(rng) : 0.0;
    ledger.record(u, v, d);
    state.noise_sums[u] += d;
    state.noise_sums[v] -= d;
  }
  state.noisy = x.values + state.noise_sums;
  state.target_average = x.average();
  state.input_norm = x.values.norm();
  state.initial_sum = x.values.sum();
  state.trace.push_back({0, state.rel_error(), state.sum_drift()});
  return {std::move(state), std::move(ledger)};
}

FixedPointRun randomization_phase_fixed(const NetworkGraph& g,
                                        const PrivateValues& x,
                                        double sigma_delta, int scale_bits,
                                        std::uint64_t rng_seed) {
  if (sigma_delta < 0)
    throw parameter_error("randomization_phase_fixed: sigma_delta must be >= 0");
  auto rng = make_rng(rng_seed);
  std::normal_distribution<double> noise(0.0, sigma_delta > 0 ? sigma_delta : 1.0);
  const double scale = std::ldexp(1.0, scale_bits);

  FixedPointRun run{.noisy = {},
                    .noise_sums = std::vector<std::int64_t>(g.n(), 0),
                    .inputs = {},
                    .ledger = NoiseLedger(sigma_delta, 6.0 * sigma_delta)};
  run.inputs.resize(g.n());
  for (int u = 0; u < g.n(); ++u)
    run.inputs[u] = std::llround(x.values[u] * scale);

  for (auto [u, v] : g.edges()) {
    double d = sigma_delta > 0 ? noise(rng) : 0.0;
    std::int64_t q = std::llround(d * scale);
    run.ledger.record(u, v, static_cast<double>(q) / scale);
    run.noise_sums[u] += q;
    run.noise_sums[v] -= q;
  }
  run.noisy.resize(g.n());
  for (int u = 0; u < g.n(); ++u) run.noisy[u] = run.inputs[u] + run.noise_sums[u];
  return run;
}

void gossip_step(ProtocolState& state, const NetworkGraph& g, int u, int v) {
  if (!g.has_edge(u, v)) throw protocol_error("gossip_step: edge not in graph");
  double avg = 0.5 * (state.noisy[u] + state.noisy[v]);
  state.noisy[u] = avg;
  state.noisy[v] = avg;
  ++state.t;
}

void run_averaging(ProtocolState& state, const NetworkGraph& g, long max_iters,
                   std::uint64_t rng_seed, long record_every) {
  if (max_iters < 0) throw parameter_error("run_averaging: max_iters < 0");
  if (record_every < 1) record_every = 1;
  auto rng = make_rng(rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, g.num_edges() - 1);

  for (long it = 0; it < max_iters; ++it) {
    auto [u, v] = g.edges()[pick(rng)];
    double avg = 0.5 * (state.noisy[u] + state.noisy[v]);
    state.noisy[u] = avg;
    state.noisy[v] = avg;
    ++state.t;
    if (state.t % record_every == 0 || it + 1 == max_iters)
      state.trace.push_back({state.t, state.rel_error(), state.sum_drift()});
  }
}

TauBound tau_averaging_time_bound(const NetworkGraph& g, double tau, double B_X,
                                  double B_delta) {
  if (tau <= 0 || tau >= 1)
    throw parameter_error("tau_averaging_time_bound: need 0 < tau < 1");
  if (B_X <= 0 || B_delta <= 0)
    throw parameter_error("tau_averaging_time_bound: bounds must be > 0");
  const double l2 = lambda2(laplacian(g));
  if (l2 <= 0)
    throw numerical_error("tau_averaging_time_bound: bound undefined (graph disconnected)");

  double C_G = 1.0 - l2 / static_cast<double>(g.num_edges());
  bool degenerate = false;
  if (C_G <= 0) {  // complete tiny graphs: log(1/C_G) would blow up
    C_G = std::numeric_limits<double>::epsilon();
    degenerate = true;
  }
  const double numerator =
      3.0 * std::log(2.0 * B_delta * (g.max_degree() + 3) / (tau * B_X));
  double bound = numerator / std::log(1.0 / C_G);
  if (degenerate) bound = std::max(1.0, std::ceil(bound));
  return {bound, degenerate};
}

long empirical_tau_averaging_time(const NetworkGraph& g, const PrivateValues& x,
                                  double sigma_delta, double tau, int trials,
                                  long max_iters, long record_every,
                                  std::uint64_t rng_seed) {
  if (trials < 1) throw parameter_error("empirical_tau_averaging_time: trials < 1");
  std::vector<std::vector<TracePoint>> traces(trials);
  for (int r = 0; r < trials; ++r) {
    auto [state, ledger] =
        randomization_phase(g, x, sigma_delta, derive_seed(rng_seed, 2 * r));
    run_averaging(state, g, max_iters, derive_seed(rng_seed, 2 * r + 1),
                  record_every);
    traces[r] = std::move(state.trace);
  }
  // All traces share checkpoint times. Scan from the end for the earliest
  // checkpoint after which the failure frequency stays <= tau.
  const std::size_t points = traces[0].size();
  long answer = -1;
  for (std::size_t i = points; i-- > 0;) {
    int failures = 0;
    for (int r = 0; r < trials; ++r)
      if (traces[r][i].rel_error >= tau) ++failures;
    if (static_cast<double>(failures) / trials <= tau)
      answer = traces[0][i].t;
    else
      break;
  }
  return answer;
}

DropoutResult simulate_dropout(const ProtocolState& state,
                               const NoiseLedger& ledger, const NetworkGraph& g,
                               const PrivateValues& x,
                               const std::vector<int>& dropouts,
                               DropoutPolicy policy) {
  std::vector<char> dropped(g.n(), 0);
  for (int u : dropouts) {
    if (u < 0 || u >= g.n()) throw parameter_error("simulate_dropout: bad user");
    dropped[u] = 1;
  }

  DropoutResult res;
  std::vector<double> vals;
  for (int u = 0; u < g.n(); ++u) {
    if (dropped[u]) continue;
    double value = x.values[u] + state.noise_sums[u];
    if (policy == DropoutPolicy::Rollback) {
      for (int v : g.neighbors(u))
        if (dropped[v] && ledger.has(u, v)) value -= ledger.get(u, v);
    }
    res.survivors.push_back(u);
    vals.push_back(value);
  }
  res.surviving_noisy =
      Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size());
  res.survivor_noisy_sum = res.surviving_noisy.sum();
  res.survivor_private_sum = 0.0;
  for (int u : res.survivors) res.survivor_private_sum += x.values[u];
  res.residual_bias = res.survivor_noisy_sum - res.survivor_private_sum;
  return res;
}

void write_trace_csv(const ProtocolState& state, std::ostream& out) {
  out << "t,rel_error,sum_drift\n";
  for (const auto& p : state.trace)
    out << p.t << ',' << p.rel_error << ',' << p.sum_drift << '\n';
}

}  // namespace gopa
