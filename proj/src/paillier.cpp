#include "gopa/paillier.hpp"

#include <cmath>
#include <limits>

#include "gopa/errors.hpp"
#include "gopa/rng.hpp"

namespace gopa {

namespace {

constexpr int kMillerRabinRounds = 64;

mpz_class l_function(const mpz_class& x, const mpz_class& N) {
  return (x - 1) / N;
}

mpz_class powm(const mpz_class& base, const mpz_class& exp, const mpz_class& mod) {
  mpz_class out;
  mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  return out;
}

mpz_class random_prime(gmp_randclass& rng, int bits) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    mpz_class cand = rng.get_z_bits(bits);
    mpz_setbit(cand.get_mpz_t(), bits - 1);  // full bit length
    mpz_setbit(cand.get_mpz_t(), 0);         // odd
    if (mpz_probab_prime_p(cand.get_mpz_t(), kMillerRabinRounds) > 0)
      return cand;
  }
  throw crypto_error("paillier_keygen: prime generation failed");
}

std::uint64_t key_fingerprint(const mpz_class& N) {
  // low 64 bits of N, decorrelated
  mpz_class low = N & mpz_class(static_cast<unsigned long>(0xffffffffffffffffULL));
  return mix64(mpz_get_ui(low.get_mpz_t()));
}

}  // namespace

PaillierKeypair paillier_keygen(int prime_bits, std::uint64_t rng_seed,
                                bool general_g) {
  if (prime_bits < 128)
    throw parameter_error("paillier_keygen: prime_bits must be >= 128");
  gmp_randclass rng(gmp_randinit_mt);
  rng.seed(static_cast<unsigned long>(rng_seed));

  PaillierKeypair kp;
  kp.p = random_prime(rng, prime_bits);
  do {
    kp.q = random_prime(rng, prime_bits);
  } while (kp.q == kp.p);

  kp.pub.N = kp.p * kp.q;
  kp.pub.N2 = kp.pub.N * kp.pub.N;
  mpz_class pm1 = kp.p - 1, qm1 = kp.q - 1;
  mpz_lcm(kp.lambda.get_mpz_t(), pm1.get_mpz_t(), qm1.get_mpz_t());

  // gcd(N, (p-1)(q-1)) must be 1 for decryption to be well defined; holds
  // for same-size primes but is cheap to confirm.
  mpz_class chk;
  mpz_class phi = pm1 * qm1;
  mpz_gcd(chk.get_mpz_t(), kp.pub.N.get_mpz_t(), phi.get_mpz_t());
  if (chk != 1) throw crypto_error("paillier_keygen: gcd(N, phi) != 1");

  if (!general_g) {
    kp.pub.g = kp.pub.N + 1;
    kp.pub.default_g = true;
    kp.mu = kp.lambda;  // L(g^lambda) = lambda for g = N+1
  } else {
    kp.pub.default_g = false;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000)
        throw crypto_error("paillier_keygen: no valid generator found");
      kp.pub.g = rng.get_z_range(kp.pub.N2 - 1) + 1;
      mpz_gcd(chk.get_mpz_t(), kp.pub.g.get_mpz_t(), kp.pub.N2.get_mpz_t());
      if (chk != 1) continue;
      mpz_class lg = l_function(powm(kp.pub.g, kp.lambda, kp.pub.N2), kp.pub.N);
      mpz_gcd(chk.get_mpz_t(), lg.get_mpz_t(), kp.pub.N.get_mpz_t());
      if (chk != 1) continue;
      kp.mu = lg;
      break;
    }
  }
  // stored as the value to invert at decryption time
  if (mpz_invert(kp.mu.get_mpz_t(), kp.mu.get_mpz_t(), kp.pub.N.get_mpz_t()) == 0)
    throw crypto_error("paillier_keygen: mu not invertible");
  kp.pub.fingerprint = key_fingerprint(kp.pub.N);
  return kp;
}

PaillierRng::PaillierRng(std::uint64_t seed) : state_(gmp_randinit_mt) {
  state_.seed(static_cast<unsigned long>(seed));
}

mpz_class PaillierRng::unit_mod(const mpz_class& N) {
  mpz_class r, d;
  do {
    r = state_.get_z_range(N - 1) + 1;
    mpz_gcd(d.get_mpz_t(), r.get_mpz_t(), N.get_mpz_t());
  } while (d != 1);
  return r;
}

Ciphertext paillier_encrypt(const PaillierPublicKey& pub, const mpz_class& m,
                            const mpz_class& r) {
  if (m < 0 || m >= pub.N)
    throw parameter_error("paillier_encrypt: message outside Z_N");
  if (r <= 0 || r >= pub.N)
    throw parameter_error("paillier_encrypt: randomizer outside Z_N");
  mpz_class d;
  mpz_gcd(d.get_mpz_t(), r.get_mpz_t(), pub.N.get_mpz_t());
  if (d != 1)
    throw parameter_error("paillier_encrypt: randomizer not coprime with N");

  mpz_class gm;
  if (pub.default_g) {
    gm = (1 + m * pub.N) % pub.N2;  // (N+1)^m mod N^2
  } else {
    gm = powm(pub.g, m, pub.N2);
  }
  Ciphertext c;
  c.value = (gm * powm(r, pub.N, pub.N2)) % pub.N2;
  c.key_fingerprint = pub.fingerprint;
  return c;
}

Ciphertext paillier_encrypt(const PaillierPublicKey& pub, const mpz_class& m,
                            PaillierRng& rng, mpz_class* r_out) {
  mpz_class r = rng.unit_mod(pub.N);
  if (r_out) *r_out = r;
  return paillier_encrypt(pub, m, r);
}

mpz_class paillier_decrypt(const PaillierKeypair& kp, const Ciphertext& c) {
  if (c.key_fingerprint != kp.pub.fingerprint)
    throw protocol_error("paillier_decrypt: ciphertext under a different key");
  if (c.value <= 0 || c.value >= kp.pub.N2)
    throw crypto_error("paillier_decrypt: ciphertext outside Z_{N^2}");
  mpz_class d;
  mpz_gcd(d.get_mpz_t(), c.value.get_mpz_t(), kp.pub.N2.get_mpz_t());
  if (d != 1) throw crypto_error("paillier_decrypt: ciphertext not a unit");

  mpz_class num = l_function(powm(c.value, kp.lambda, kp.pub.N2), kp.pub.N);
  return (num * kp.mu) % kp.pub.N;
}

Ciphertext hom_add(const PaillierPublicKey& pub, const Ciphertext& c1,
                   const Ciphertext& c2) {
  if (c1.key_fingerprint != pub.fingerprint ||
      c2.key_fingerprint != pub.fingerprint)
    throw protocol_error("hom_add: key mismatch");
  Ciphertext out;
  out.value = (c1.value * c2.value) % pub.N2;
  out.key_fingerprint = pub.fingerprint;
  return out;
}

mpz_class encode_fixed(double x, int scale_bits, const mpz_class& N) {
  if (!std::isfinite(x)) throw range_error("encode_fixed: non-finite value");
  double scaled = std::nearbyint(std::ldexp(x, scale_bits));  // half-to-even
  if (std::abs(scaled) >= 9.007199254740992e15)  // 2^53, exact int64 territory
    throw range_error("encode_fixed: value too large for the scaled grid");
  return encode_fixed_raw(static_cast<std::int64_t>(scaled), N);
}

mpz_class encode_fixed_raw(std::int64_t scaled, const mpz_class& N) {
  mpz_class mag = static_cast<unsigned long>(scaled < 0
                      ? static_cast<std::uint64_t>(-(scaled + 1)) + 1
                      : static_cast<std::uint64_t>(scaled));
  if (2 * mag >= N) throw range_error("encode_fixed: half-range overflow");
  if (scaled >= 0) return mag;
  return N - mag;
}

std::int64_t decode_fixed_raw(const mpz_class& m, const mpz_class& N) {
  if (m < 0 || m >= N) throw range_error("decode_fixed: value outside Z_N");
  mpz_class half = N / 2;
  mpz_class mag = (m <= half) ? m : N - m;
  if (!mag.fits_slong_p())
    throw range_error("decode_fixed: magnitude exceeds representable range");
  long v = mpz_get_si(mag.get_mpz_t());
  return (m <= half) ? v : -v;
}

double decode_fixed(const mpz_class& m, int scale_bits, const mpz_class& N) {
  return std::ldexp(static_cast<double>(decode_fixed_raw(m, N)), -scale_bits);
}

bool fixed_point_fits(double B_X, double B_delta, int d_max, int scale_bits,
                      const mpz_class& N) {
  // |X~_u| <= B_X + d_max * B_delta; everything scaled by 2^s must stay
  // below N/2 (with slack for the network-wide sum used by Baseline 2).
  double worst = (B_X + d_max * B_delta) * std::ldexp(1.0, scale_bits);
  mpz_class limit = N / 4;
  return mpz_class(static_cast<unsigned long>(std::min(worst, 1e18))) < limit &&
         worst < 9e15;
}

std::string to_hex(const mpz_class& v) { return v.get_str(16); }

mpz_class from_hex(const std::string& s) {
  mpz_class v;
  if (v.set_str(s, 16) != 0) throw parameter_error("from_hex: bad payload");
  return v;
}

}  // namespace gopa
