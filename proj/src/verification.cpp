#include "gopa/verification.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gopa/errors.hpp"
#include "gopa/rng.hpp"

namespace gopa {

namespace {

std::string slot_key(int user, const std::string& slot) {
  return std::to_string(user) + '|' + slot;
}

std::string delta_slot(int v) { return "delta:" + std::to_string(v); }
std::string reveal_delta_slot(int v) { return "reveal-delta:" + std::to_string(v); }
std::string reveal_r_slot(int v) { return "reveal-r:" + std::to_string(v); }

PaillierPublicKey parse_pubkey(const std::string& payload) {
  auto comma = payload.find(',');
  if (comma == std::string::npos)
    throw parameter_error("PublicationBoard: malformed pubkey payload");
  PaillierPublicKey pub;
  pub.N = from_hex(payload.substr(0, comma));
  pub.g = from_hex(payload.substr(comma + 1));
  pub.N2 = pub.N * pub.N;
  pub.default_g = (pub.g == pub.N + 1);
  pub.fingerprint = 0;  // recomputed below for check-time encryptions
  mpz_class low = pub.N & mpz_class(static_cast<unsigned long>(0xffffffffffffffffULL));
  pub.fingerprint = mix64(mpz_get_ui(low.get_mpz_t()));
  return pub;
}

}  // namespace

std::size_t PublicationBoard::publish(int user, const std::string& slot,
                                      std::string payload) {
  auto key = slot_key(user, slot);
  if (index_.count(key))
    throw protocol_error("PublicationBoard: slot already published (user " +
                         std::to_string(user) + ", " + slot + ")");
  records_.push_back({user, slot, std::move(payload)});
  std::size_t off = records_.size() - 1;
  index_[key] = off;
  return off;
}

bool PublicationBoard::has(int user, const std::string& slot) const {
  return index_.count(slot_key(user, slot)) != 0;
}

const std::string& PublicationBoard::get(int user, const std::string& slot) const {
  auto it = index_.find(slot_key(user, slot));
  if (it == index_.end())
    throw protocol_error("PublicationBoard: missing publication from user " +
                         std::to_string(user) + " in slot " + slot);
  return records_[it->second].payload;
}

std::size_t PublicationBoard::offset(int user, const std::string& slot) const {
  auto it = index_.find(slot_key(user, slot));
  if (it == index_.end())
    throw protocol_error("PublicationBoard: no such record");
  return it->second;
}

void PublicationBoard::serialize(std::ostream& out) const {
  for (const auto& r : records_)
    out << r.user << '|' << r.slot << '|' << r.payload << '\n';
}

PublicationBoard PublicationBoard::parse(std::istream& in) {
  PublicationBoard board;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto p1 = line.find('|');
    auto p2 = line.find('|', p1 + 1);
    if (p1 == std::string::npos || p2 == std::string::npos)
      throw parameter_error("PublicationBoard: malformed line");
    board.publish(std::stoi(line.substr(0, p1)),
                  line.substr(p1 + 1, p2 - p1 - 1), line.substr(p2 + 1));
  }
  return board;
}

CheatScript make_random_cheat_script(const NetworkGraph& g, int cheats,
                                     std::int64_t discrepancy,
                                     std::uint64_t rng_seed) {
  std::vector<std::pair<int, int>> candidates;  // (cheater, peer)
  for (auto [u, v] : g.edges()) {
    if (!g.is_honest(u))
      candidates.emplace_back(u, v);
    else if (!g.is_honest(v))
      candidates.emplace_back(v, u);
  }
  if (static_cast<int>(candidates.size()) < cheats)
    throw parameter_error("make_random_cheat_script: not enough malicious-incident edges");
  auto rng = make_rng(rng_seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  CheatScript script;
  for (int i = 0; i < cheats; ++i)
    script.asymmetric.push_back(
        {candidates[i].first, candidates[i].second, discrepancy});
  return script;
}

bool CheaterList::contains(int user) const {
  for (const auto& a : accusations)
    if (a.user == user) return true;
  return false;
}

std::string CheaterList::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : accusations) {
    const char* check = a.check == Accusation::Check::Coherence ? "coherence"
                        : a.check == Accusation::Check::CrossCheck ? "cross-check"
                                                                   : "refusal";
    arr.push_back({{"user", a.user},
                   {"check", check},
                   {"detail", a.detail},
                   {"evidence_offset", a.evidence_offset}});
  }
  return arr.dump(2);
}

PublishResult publish_phase(const NetworkGraph& g, const PrivateValues& x,
                            const NoiseLedger& ledger, const CheatScript& script,
                            int scale_bits, std::uint64_t rng_seed,
                            const std::vector<PaillierKeypair>* keys) {
  const double scale = std::ldexp(1.0, scale_bits);
  PublishResult out;
  out.secrets.resize(g.n());

  if (keys) {
    if (static_cast<int>(keys->size()) < g.n())
      throw parameter_error("publish_phase: not enough pre-built keys");
    out.keys.assign(keys->begin(), keys->begin() + g.n());
  } else {
    out.keys.reserve(g.n());
    for (int u = 0; u < g.n(); ++u)
      out.keys.push_back(
          paillier_keygen(128, derive_seed(rng_seed, 1000 + u)));
  }

  // Claimed noise values: ledger values on the fixed-point grid, shifted for
  // scripted asymmetric cheats on the cheater's side only.
  std::vector<std::map<int, std::int64_t>> claimed(g.n());
  for (auto [u, v] : g.edges()) {
    std::int64_t q = std::llround(ledger.get(u, v) * scale);
    claimed[u][v] = q;
    claimed[v][u] = -q;
  }
  for (const auto& cheat : script.asymmetric) {
    if (g.is_honest(cheat.cheater))
      throw parameter_error("publish_phase: scripted cheater is honest");
    if (!g.has_edge(cheat.cheater, cheat.peer))
      throw parameter_error("publish_phase: scripted cheat on a non-edge");
    claimed[cheat.cheater][cheat.peer] += cheat.discrepancy;
  }

  for (int u = 0; u < g.n(); ++u) {
    const PaillierKeypair& kp = out.keys[u];
    const mpz_class& N = kp.pub.N;
    if (!fixed_point_fits(x.bound, ledger.bound() > 0 ? ledger.bound() : 1.0,
                          g.max_degree(), scale_bits, N))
      throw range_error("publish_phase: fixed-point encoding does not fit Z_N");
    UserSecrets& sec = out.secrets[u];
    PaillierRng prng(derive_seed(rng_seed, 2000 + u));

    sec.x_scaled = std::llround(x.values[u] * scale);
    sec.claimed_delta = claimed[u];
    sec.delta_sum_scaled = 0;
    for (auto& [v, q] : sec.claimed_delta) sec.delta_sum_scaled += q;
    sec.refuses_reveal =
        std::count(script.refuse_reveal.begin(), script.refuse_reveal.end(), u) > 0;

    out.board.publish(u, "pubkey", to_hex(N) + "," + to_hex(kp.pub.g));
    auto cx = paillier_encrypt(kp.pub, encode_fixed_raw(sec.x_scaled, N), prng,
                               &sec.r_x);
    out.board.publish(u, "X", to_hex(cx.value));

    sec.r_delta_sum = 1;
    for (int v : g.neighbors(u)) {
      mpz_class r;
      auto cd = paillier_encrypt(kp.pub, encode_fixed_raw(sec.claimed_delta[v], N),
                                 prng, &r);
      sec.r_delta[v] = r;
      sec.r_delta_sum = (sec.r_delta_sum * r) % N;  // running product
      out.board.publish(u, delta_slot(v), to_hex(cd.value));
    }
    sec.r_noisy = (sec.r_x * sec.r_delta_sum) % N;

    std::int64_t published_delta_sum = sec.delta_sum_scaled;
    auto it = script.wrong_delta.find(u);
    if (it != script.wrong_delta.end()) {
      if (g.is_honest(u))
        throw parameter_error("publish_phase: scripted cheater is honest");
      published_delta_sum += it->second;
    }
    auto cD = paillier_encrypt(kp.pub, encode_fixed_raw(published_delta_sum, N),
                               sec.r_delta_sum);
    out.board.publish(u, "Delta", to_hex(cD.value));
    auto cX = paillier_encrypt(
        kp.pub, encode_fixed_raw(sec.x_scaled + sec.delta_sum_scaled, N),
        sec.r_noisy);
    out.board.publish(u, "Xtilde", to_hex(cX.value));
  }
  return out;
}

CheaterList coherence_check(const PublicationBoard& board, const NetworkGraph& g) {
  CheaterList list;
  for (int u = 0; u < g.n(); ++u) {
    PaillierPublicKey pub = parse_pubkey(board.get(u, "pubkey"));

    mpz_class prod = 1;
    for (int v : g.neighbors(u))
      prod = (prod * from_hex(board.get(u, delta_slot(v)))) % pub.N2;

    const std::string& delta_pub = board.get(u, "Delta");
    if (from_hex(delta_pub) != prod)
      list.accusations.push_back({u, Accusation::Check::Coherence,
                                  "Delta does not match product of noise terms",
                                  board.offset(u, "Delta")});

    mpz_class recomb =
        (from_hex(board.get(u, "X")) * from_hex(delta_pub)) % pub.N2;
    if (from_hex(board.get(u, "Xtilde")) != recomb)
      list.accusations.push_back({u, Accusation::Check::Coherence,
                                  "Xtilde does not match X * Delta",
                                  board.offset(u, "Xtilde")});
  }
  return list;
}

CrossCheckResult reveal_and_cross_check(PublicationBoard& board,
                                        const NetworkGraph& g,
                                        const std::vector<UserSecrets>& secrets,
                                        const std::vector<PaillierKeypair>& keys,
                                        double beta, std::uint64_t rng_seed) {
  if (beta < 0.0 || beta > 1.0)
    throw parameter_error("reveal_and_cross_check: need 0 <= beta <= 1");
  CrossCheckResult out;
  auto flag = [&](int user, const std::string& detail, std::size_t off) {
    out.cheaters.accusations.push_back(
        {user, Accusation::Check::CrossCheck, detail, off});
  };

  for (int u = 0; u < g.n(); ++u) {
    const int d = g.degree(u);
    const int reveal_count =
        static_cast<int>(std::ceil((1.0 - beta) * d));
    if (reveal_count == 0) continue;

    // Public draw: anyone can re-derive V_u from the published seed.
    std::vector<int> subset = g.neighbors(u);
    auto rng = make_rng(rng_seed, static_cast<std::uint64_t>(u));
    std::shuffle(subset.begin(), subset.end(), rng);
    subset.resize(reveal_count);

    if (secrets[u].refuses_reveal) {
      out.cheaters.accusations.push_back(
          {u, Accusation::Check::Refusal, "refused to reveal", 0});
      continue;
    }

    for (int v : subset) {
      const mpz_class& Nu = keys[u].pub.N;
      const mpz_class& Nv = keys[v].pub.N;
      std::int64_t delta_uv = secrets[u].claimed_delta.at(v);

      // An edge may be drawn from both endpoints; slots are published once.
      std::size_t off_d;
      if (!board.has(u, reveal_delta_slot(v))) {
        off_d = board.publish(u, reveal_delta_slot(v),
                              to_hex(encode_fixed_raw(delta_uv, Nu)));
        if (!board.has(u, reveal_r_slot(v)))
          board.publish(u, reveal_r_slot(v), to_hex(secrets[u].r_delta.at(v)));
      } else {
        off_d = board.offset(u, reveal_delta_slot(v));
      }

      if (secrets[v].refuses_reveal) {
        out.cheaters.accusations.push_back(
            {v, Accusation::Check::Refusal, "refused to reveal", off_d});
        continue;
      }
      if (!board.has(v, reveal_r_slot(u)))
        board.publish(v, reveal_r_slot(u), to_hex(secrets[v].r_delta.at(u)));

      // eps_u^P(delta_{u,v}) must be an encryption of the revealed value...
      auto cu = paillier_encrypt(keys[u].pub, encode_fixed_raw(delta_uv, Nu),
                                 secrets[u].r_delta.at(v));
      bool u_ok = to_hex(cu.value) == board.get(u, delta_slot(v));
      // ...and eps_v^P(delta_{v,u}) an encryption of its negation.
      auto cv = paillier_encrypt(keys[v].pub, encode_fixed_raw(-delta_uv, Nv),
                                 secrets[v].r_delta.at(u));
      bool v_ok = to_hex(cv.value) == board.get(v, delta_slot(u));

      if (!u_ok || !v_ok) {
        flag(u, "noise pair mismatch on edge (" + std::to_string(u) + "," +
                    std::to_string(v) + ")",
             off_d);
        flag(v, "noise pair mismatch on edge (" + std::to_string(u) + "," +
                    std::to_string(v) + ")",
             off_d);
      } else if (g.is_honest(u) && g.is_honest(v)) {
        int a = std::min(u, v), b = std::max(u, v);
        if (std::find(out.revealed_honest_edges.begin(),
                      out.revealed_honest_edges.end(),
                      std::make_pair(a, b)) == out.revealed_honest_edges.end())
          out.revealed_honest_edges.emplace_back(a, b);
      }
    }
  }
  // Revealed honest-honest edges leave the privacy analysis even when the
  // check passed; collect them for flagged pairs too.
  return out;
}

double detection_probability(double beta, int cheats) {
  if (beta < 0.0 || beta > 1.0)
    throw parameter_error("detection_probability: need 0 <= beta <= 1");
  if (cheats < 0) throw parameter_error("detection_probability: C < 0");
  if (cheats == 0) return 0.0;
  return 1.0 - std::pow(beta, 2.0 * cheats);
}

VerifiedRunResult run_verified_protocol(const VerifiedRunConfig& config) {
  NetworkGraph g = assign_roles(
      generate_k_out(config.n, config.k, derive_seed(config.seed, 1)), config.f,
      derive_seed(config.seed, 2));

  auto rng = make_rng(config.seed, 3);
  std::normal_distribution<double> prior(0.0, config.sigma_x);
  Eigen::VectorXd values(config.n);
  for (int i = 0; i < config.n; ++i) values[i] = prior(rng);
  PrivateValues x(values, std::max(1.0, values.cwiseAbs().maxCoeff()));

  FixedPointRun run = randomization_phase_fixed(
      g, x, config.sigma_delta, config.scale_bits, derive_seed(config.seed, 4));

  PublishResult pub =
      publish_phase(g, x, run.ledger, config.script, config.scale_bits,
                    derive_seed(config.seed, 5), config.shared_keys);

  VerifiedRunResult result;
  result.cheaters = coherence_check(pub.board, g);
  CrossCheckResult cross = reveal_and_cross_check(
      pub.board, g, pub.secrets, pub.keys, config.beta, derive_seed(config.seed, 6));
  for (auto& a : cross.cheaters.accusations)
    result.cheaters.accusations.push_back(a);
  result.revealed_honest_edges = cross.revealed_honest_edges;

  // Exact fixed-point sum of the published noisy values; flagged users are
  // excluded once any accusation exists.
  const double scale = std::ldexp(1.0, config.scale_bits);
  std::int64_t sum = 0;
  int counted = 0;
  for (int u = 0; u < config.n; ++u) {
    if (!result.cheaters.empty() && result.cheaters.contains(u)) continue;
    sum += pub.secrets[u].x_scaled + pub.secrets[u].delta_sum_scaled;
    ++counted;
  }
  result.average = counted > 0 ? (static_cast<double>(sum) / scale) / counted : 0.0;
  result.true_average = x.average();

  if (config.compute_privacy) {
    // Plain-text reveals drop the corresponding honest edges from G^H.
    std::vector<std::pair<int, int>> kept;
    for (auto [a, b] : g.edges()) {
      bool revealed =
          std::find(result.revealed_honest_edges.begin(),
                    result.revealed_honest_edges.end(),
                    std::make_pair(a, b)) != result.revealed_honest_edges.end();
      if (!revealed) kept.emplace_back(a, b);
    }
    std::vector<Role> roles(g.n());
    for (int u = 0; u < g.n(); ++u) roles[u] = g.role(u);
    NetworkGraph pruned(g.n(), kept, roles);
    result.post_reveal_privacy =
        privacy_report(pruned, config.sigma_x, config.sigma_delta);
  }
  return result;
}

}  // namespace gopa
