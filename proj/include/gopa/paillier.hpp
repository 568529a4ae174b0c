#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <optional>
#include <string>

namespace gopa {

// Additively homomorphic Paillier cryptosystem over Z_{N^2}, with a signed
// fixed-point encoding of reals into Z_N.
//
// NOT constant-time and NOT hardened: this is simulation-grade crypto whose
// correctness (the homomorphism and the randomizer algebra) is what matters.

struct PaillierPublicKey {
  mpz_class N;
  mpz_class g;
  mpz_class N2;
  std::uint64_t fingerprint = 0;  // identifies the keypair behind a ciphertext
  bool default_g = true;          // g == N + 1
};

struct PaillierKeypair {
  PaillierPublicKey pub;
  mpz_class p, q;
  mpz_class lambda;  // lcm(p-1, q-1)
  mpz_class mu;      // (L(g^lambda mod N^2))^-1 mod N
};

struct Ciphertext {
  mpz_class value;  // element of Z*_{N^2}
  std::uint64_t key_fingerprint = 0;

  bool operator==(const Ciphertext& o) const {
    return key_fingerprint == o.key_fingerprint && value == o.value;
  }
};

// Deterministic per seed. prime_bits is the size of each prime factor, so N
// has about 2*prime_bits bits. Minimum 128 bits per prime in test mode.
PaillierKeypair paillier_keygen(int prime_bits, std::uint64_t rng_seed,
                                bool general_g = false);

// RNG for randomizers; deterministic per seed.
class PaillierRng {
 public:
  explicit PaillierRng(std::uint64_t seed);
  mpz_class unit_mod(const mpz_class& N);  // uniform element of Z*_N

 private:
  gmp_randclass state_;
};

// eps(m) = g^m * r^N mod N^2. The randomizer can be supplied explicitly
// (required by the verification chaining) or drawn from the rng.
Ciphertext paillier_encrypt(const PaillierPublicKey& pub, const mpz_class& m,
                            const mpz_class& r);
Ciphertext paillier_encrypt(const PaillierPublicKey& pub, const mpz_class& m,
                            PaillierRng& rng, mpz_class* r_out = nullptr);

mpz_class paillier_decrypt(const PaillierKeypair& kp, const Ciphertext& c);

// Product mod N^2; decrypts to m1 + m2 mod N. Randomizers multiply mod N.
Ciphertext hom_add(const PaillierPublicKey& pub, const Ciphertext& c1,
                   const Ciphertext& c2);

// Signed fixed-point encoding: nonnegative values map to [0, N/2), negative
// ones to (N/2, N) as N - |x * 2^s|. Round-half-to-even on encode.
mpz_class encode_fixed(double x, int scale_bits, const mpz_class& N);
double decode_fixed(const mpz_class& m, int scale_bits, const mpz_class& N);

// Raw scaled-integer versions used by the fixed-point protocol path.
mpz_class encode_fixed_raw(std::int64_t scaled, const mpz_class& N);
std::int64_t decode_fixed_raw(const mpz_class& m, const mpz_class& N);

// True when every per-user value is guaranteed to fit the half-range given
// the bounds and maximum degree (the noise sum has at most d_max terms).
bool fixed_point_fits(double B_X, double B_delta, int d_max, int scale_bits,
                      const mpz_class& N);

std::string to_hex(const mpz_class& v);
mpz_class from_hex(const std::string& s);

}  // namespace gopa
