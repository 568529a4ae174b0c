#pragma once

#include <cstdint>

#include "gopa/protocol.hpp"

namespace gopa {

// Local-DP gossip baseline: independent Laplace(b) noise, b = 2B/epsilon.
struct LdpConfig {
  double epsilon;  // DP budget, > 0
  double bound;    // B, |X_u| <= B

  LdpConfig(double eps, double B);
  double scale() const { return 2.0 * bound / epsilon; }  // b
};

// Each value plus independent Laplace(b) noise.
PrivateValues ldp_perturb(const PrivateValues& x, const LdpConfig& cfg,
                          std::uint64_t rng_seed);

// RMSE of the perturbed average: b * sqrt(2/n).
double ldp_rmse_formula(const LdpConfig& cfg, int n);

// Centralized baseline: server keygen, per-user encryption, third-party
// homomorphic product, server decryption. Exact at fixed-point resolution.
double central_paillier_average(const PrivateValues& x, int scale_bits,
                                std::uint64_t rng_seed, int prime_bits = 128);

}  // namespace gopa
