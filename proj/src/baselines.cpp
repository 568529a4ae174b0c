#include "gopa/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "gopa/errors.hpp"
#include "gopa/paillier.hpp"
#include "gopa/rng.hpp"

namespace gopa {

LdpConfig::LdpConfig(double eps, double B) : epsilon(eps), bound(B) {
  if (eps <= 0) throw parameter_error("LdpConfig: epsilon must be > 0");
  if (B <= 0) throw parameter_error("LdpConfig: bound must be > 0");
}

PrivateValues ldp_perturb(const PrivateValues& x, const LdpConfig& cfg,
                          std::uint64_t rng_seed) {
  for (int i = 0; i < x.n(); ++i)
    if (std::abs(x.values[i]) > cfg.bound)
      throw parameter_error("ldp_perturb: |X_u| exceeds the LDP bound");

  auto rng = make_rng(rng_seed);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  const double b = cfg.scale();

  Eigen::VectorXd out = x.values;
  for (int i = 0; i < out.size(); ++i) {
    // inverse-CDF Laplace draw
    double u = unif(rng);
    double eta = -b * std::copysign(std::log1p(-2.0 * std::abs(u)), u);
    out[i] += eta;
  }
  // Perturbed values are unbounded; the recorded bound tracks the realization.
  return PrivateValues(out, std::max(x.bound, out.cwiseAbs().maxCoeff()));
}

double ldp_rmse_formula(const LdpConfig& cfg, int n) {
  if (n < 1) throw parameter_error("ldp_rmse_formula: n must be >= 1");
  return cfg.scale() * std::sqrt(2.0 / n);
}

double central_paillier_average(const PrivateValues& x, int scale_bits,
                                std::uint64_t rng_seed, int prime_bits) {
  PaillierKeypair server = paillier_keygen(prime_bits, derive_seed(rng_seed, 1));
  const mpz_class& N = server.pub.N;
  const double scale = std::ldexp(1.0, scale_bits);

  // Per-user encodings plus the network-wide sum must fit the half-range.
  double worst = (std::abs(x.values.sum()) + x.bound) * scale;
  if (worst >= 9e15 || mpz_class(static_cast<unsigned long>(worst)) * 4 >= N)
    throw range_error("central_paillier_average: sum exceeds half-range");

  PaillierRng prng(derive_seed(rng_seed, 2));
  Ciphertext acc = paillier_encrypt(server.pub, encode_fixed(0.0, scale_bits, N),
                                    mpz_class(1));
  for (int u = 0; u < x.n(); ++u) {
    Ciphertext c = paillier_encrypt(
        server.pub, encode_fixed(x.values[u], scale_bits, N), prng);
    acc = hom_add(server.pub, acc, c);
  }
  double sum = decode_fixed(paillier_decrypt(server, acc), scale_bits, N);
  return sum / x.n();
}

}  // namespace gopa
