#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gopa/graph.hpp"
#include "gopa/paillier.hpp"
#include "gopa/privacy.hpp"
#include "gopa/protocol.hpp"

namespace gopa {

// Append-only record of everything users publish: keys, ciphertexts and the
// plain-text reveals added during verification. Re-publication of a slot is
// rejected. Record offsets serve as evidence references.
class PublicationBoard {
 public:
  struct Record {
    int user;
    std::string slot;
    std::string payload;  // hex
  };

  std::size_t publish(int user, const std::string& slot, std::string payload);
  bool has(int user, const std::string& slot) const;
  const std::string& get(int user, const std::string& slot) const;
  std::size_t offset(int user, const std::string& slot) const;
  const std::vector<Record>& records() const { return records_; }

  // Line format: user|slot|hex-payload
  void serialize(std::ostream& out) const;
  static PublicationBoard parse(std::istream& in);

 private:
  std::vector<Record> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Scripted deviations for malicious users. C (total_cheats) counts the
// averaging-relevant deviations: asymmetric noise pairs.
struct CheatScript {
  struct AsymmetricPair {
    int cheater;            // must be malicious; its claimed delta is shifted
    int peer;               // neighbor on the cheated edge
    std::int64_t discrepancy;  // scaled-integer shift
  };
  std::vector<AsymmetricPair> asymmetric;
  // user -> scaled offset added to the published Delta slot (coherence break)
  std::map<int, std::int64_t> wrong_delta;
  std::vector<int> refuse_reveal;

  int total_cheats() const { return static_cast<int>(asymmetric.size()); }
  bool empty() const {
    return asymmetric.empty() && wrong_delta.empty() && refuse_reveal.empty();
  }
};

// Picks C distinct edges with a malicious endpoint and shifts the malicious
// side's claimed noise. Throws if fewer than C such edges exist.
CheatScript make_random_cheat_script(const NetworkGraph& g, int cheats,
                                     std::int64_t discrepancy,
                                     std::uint64_t rng_seed);

struct Accusation {
  int user;
  enum class Check { Coherence, CrossCheck, Refusal } check;
  std::string detail;
  std::size_t evidence_offset;
};

struct CheaterList {
  std::vector<Accusation> accusations;
  bool contains(int user) const;
  bool empty() const { return accusations.empty(); }
  std::string to_json() const;
};

// What each user keeps private during the publication phase; the simulation
// hands it to the reveal stage in lieu of live parties.
struct UserSecrets {
  std::int64_t x_scaled = 0;
  std::int64_t delta_sum_scaled = 0;
  std::map<int, std::int64_t> claimed_delta;  // neighbor -> scaled delta_{u,v}
  mpz_class r_x, r_delta_sum, r_noisy;
  std::map<int, mpz_class> r_delta;
  bool refuses_reveal = false;
};

struct PublishResult {
  PublicationBoard board;
  std::vector<UserSecrets> secrets;
  std::vector<PaillierKeypair> keys;
};

// Honest users publish truthfully with chained randomizers
// (r_Delta = product of the delta randomizers, r_noisy = r_X * r_Delta mod N)
// so the ciphertext equality checks hold bit-exactly. Malicious users deviate
// per script. Keys are generated per user unless a pre-built set is supplied.
PublishResult publish_phase(const NetworkGraph& g, const PrivateValues& x,
                            const NoiseLedger& ledger, const CheatScript& script,
                            int scale_bits, std::uint64_t rng_seed,
                            const std::vector<PaillierKeypair>* keys = nullptr);

// Per-user check that the published Delta and noisy-value ciphertexts equal
// the homomorphic recombination of the published parts.
CheaterList coherence_check(const PublicationBoard& board, const NetworkGraph& g);

struct CrossCheckResult {
  CheaterList cheaters;
  // honest-honest edges revealed in plain text (privacy accounting)
  std::vector<std::pair<int, int>> revealed_honest_edges;
};

// Publicly seeded reveal of a (1-beta) fraction of each user's noise terms,
// then pairwise consistency checks across the two endpoints' schemes.
CrossCheckResult reveal_and_cross_check(PublicationBoard& board,
                                        const NetworkGraph& g,
                                        const std::vector<UserSecrets>& secrets,
                                        const std::vector<PaillierKeypair>& keys,
                                        double beta, std::uint64_t rng_seed);

// Lower bound 1 - beta^(2C) on catching at least one cheater.
double detection_probability(double beta, int cheats);

struct VerifiedRunConfig {
  int n = 20;
  int k = 3;
  double f = 0.3;
  double sigma_x = 1.0;
  double sigma_delta = 1.0;
  double beta = 0.5;
  int scale_bits = 32;
  int prime_bits = 128;
  std::uint64_t seed = 1;
  CheatScript script;
  bool compute_privacy = true;
  const std::vector<PaillierKeypair>* shared_keys = nullptr;  // reuse across trials
};

struct VerifiedRunResult {
  double average;       // decoded from the published noisy values
  double true_average;  // X^avg of the drawn inputs
  CheaterList cheaters;
  std::vector<std::pair<int, int>> revealed_honest_edges;
  std::optional<PrivacyReport> post_reveal_privacy;
};

// End-to-end: fixed-point randomization with publication, verification, and
// the exact sum of the published noisy values.
VerifiedRunResult run_verified_protocol(const VerifiedRunConfig& config);

}  // namespace gopa
