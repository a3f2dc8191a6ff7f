#include "mdiqds/signature_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mdiqds/entropy_math.hpp"
#include "mdiqds/security_engine.hpp"

namespace mdiqds {

void SecretChannel::send(Recipient to, std::vector<KeyRecord> records) {
    auto& box = inbox_[static_cast<int>(to)];
    box.insert(box.end(), records.begin(), records.end());
    ++messages_;
}

std::vector<KeyRecord> SecretChannel::receive(Recipient to) {
    std::vector<KeyRecord> out;
    out.swap(inbox_[static_cast<int>(to)]);
    return out;
}

namespace {

/// First `count` entries of a uniformly random permutation of 0..n-1.
std::vector<std::size_t> random_subset(std::size_t n, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    return idx;
}

BitString random_bits(std::size_t n, Rng& rng) {
    BitString bits(n);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
    return bits;
}

void sort_key(Key& key) {
    std::sort(key.begin(), key.end(), [](const KeyRecord& a, const KeyRecord& b) { return a.position < b.position; });
}

/// Splits one recipient's string into the kept half and the half it sends.
std::pair<Key, Key> split_half(const BitString& bits, std::size_t offset, SourceKgp source, Rng& rng) {
    const std::size_t L = bits.size();
    std::vector<std::uint8_t> forward(L, 0);
    for (std::size_t i : random_subset(L, L / 2, rng)) forward[i] = 1;
    Key kept;
    Key sent;
    kept.reserve(L / 2);
    sent.reserve(L / 2);
    for (std::size_t i = 0; i < L; ++i) {
        if (forward[i]) {
            sent.push_back({offset + i, bits[i], Origin::forwarded, source});
        } else {
            kept.push_back({offset + i, bits[i], Origin::direct, source});
        }
    }
    return {std::move(kept), std::move(sent)};
}

}  // namespace

SymmetrizedKeys symmetrize(const BitString& k_b, const BitString& k_c, SecretChannel& channel, Rng& rng) {
    if (k_b.size() != k_c.size()) throw std::invalid_argument("symmetrize: strings differ in length");
    if (k_b.empty() || k_b.size() % 2 != 0) throw std::invalid_argument("symmetrize: length must be even and positive");
    const std::size_t L = k_b.size();

    auto [bob_kept, bob_sent] = split_half(k_b, 0, SourceKgp::alice_bob, rng);
    auto [charlie_kept, charlie_sent] = split_half(k_c, L, SourceKgp::alice_charlie, rng);
    channel.send(Recipient::charlie, std::move(bob_sent));
    channel.send(Recipient::bob, std::move(charlie_sent));

    SymmetrizedKeys keys;
    keys.bob = std::move(bob_kept);
    for (auto& r : channel.receive(Recipient::bob)) keys.bob.push_back(r);
    keys.charlie = std::move(charlie_kept);
    for (auto& r : channel.receive(Recipient::charlie)) keys.charlie.push_back(r);
    sort_key(keys.bob);
    sort_key(keys.charlie);
    return keys;
}

SignedKeyState distribute(const std::array<BitString, 2>& alice_b, const std::array<BitString, 2>& alice_c,
                          const std::array<BitString, 2>& k_b, const std::array<BitString, 2>& k_c, Rng& rng) {
    SignedKeyState state;
    state.L = k_b[0].size();
    SecretChannel channel;
    for (int m = 0; m < 2; ++m) {
        if (alice_b[m].size() != state.L || alice_c[m].size() != state.L || k_b[m].size() != state.L ||
            k_c[m].size() != state.L) {
            throw std::invalid_argument("distribute: all strings must have length L");
        }
        auto keys = symmetrize(k_b[m], k_c[m], channel, rng);
        state.alice_b[m] = alice_b[m];
        state.alice_c[m] = alice_c[m];
        state.bob[m] = std::move(keys.bob);
        state.charlie[m] = std::move(keys.charlie);
    }
    return state;
}

Declaration sign(const SignedKeyState& state, std::uint8_t message) {
    if (message > 1) throw std::invalid_argument("sign: message must be 0 or 1");
    return {message, state.alice_b[message], state.alice_c[message]};
}

std::vector<Declaration> sign_bits(const std::vector<SignedKeyState>& states, const BitString& bits) {
    if (states.size() != bits.size()) throw std::invalid_argument("sign_bits: one distribution stage per bit");
    std::vector<Declaration> out;
    out.reserve(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) out.push_back(sign(states[i], bits[i]));
    return out;
}

bool mismatch_acceptable(std::size_t mismatches, double threshold, std::size_t L) {
    return static_cast<double>(mismatches) < threshold * static_cast<double>(L) / 2.0;
}

VerificationResult verify_unchecked(const Declaration& decl, const Key& key, double threshold, std::size_t L) {
    if (decl.sig_b.size() != L || decl.sig_c.size() != L) {
        throw std::invalid_argument("verify: malformed declaration, signature strings must have length L");
    }
    if (key.size() != L) throw std::invalid_argument("verify: key must hold L records");
    VerificationResult result;
    result.threshold_used = threshold;
    for (const auto& rec : key) {
        if (rec.position >= 2 * L) throw std::invalid_argument("verify: key position out of range");
        const std::uint8_t expected = rec.position < L ? decl.sig_b[rec.position] : decl.sig_c[rec.position - L];
        if (expected == rec.bit) continue;
        if (rec.origin == Origin::direct) {
            ++result.mismatches_direct;
        } else {
            ++result.mismatches_forwarded;
        }
    }
    result.accepted = mismatch_acceptable(result.mismatches_direct, threshold, L) &&
                      mismatch_acceptable(result.mismatches_forwarded, threshold, L);
    return result;
}

VerificationResult verify(const Declaration& decl, const Key& key, double threshold, std::size_t L) {
    if (!(threshold > 0.0 && threshold < 0.5)) throw std::invalid_argument("verify: threshold must lie in (0, 1/2)");
    return verify_unchecked(decl, key, threshold, L);
}

double RateEstimate::rate() const {
    return trials ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0;
}

double RateEstimate::standard_error(double reference) const {
    if (trials == 0) return 0.0;
    const double p = std::clamp(reference, 0.0, 1.0);
    return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

namespace {

struct SessionStrings {
    double e_obs = 0.0;
    std::array<BitString, 2> alice;
    std::array<BitString, 2> recipient;
};

/// 2L + R bits over a binary symmetric channel; R disclosed at random.
SessionStrings run_bsc_session(std::size_t L, std::size_t R, double error_rate, Rng& rng) {
    const std::size_t n = 2 * L + R;
    BitString a = random_bits(n, rng);
    BitString b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = a[i] ^ static_cast<std::uint8_t>(bernoulli(rng, error_rate));
    std::vector<std::uint8_t> disclosed(n, 0);
    std::size_t mismatches = 0;
    for (std::size_t i : random_subset(n, R, rng)) {
        disclosed[i] = 1;
        mismatches += a[i] != b[i];
    }
    SessionStrings s;
    s.e_obs = R ? static_cast<double>(mismatches) / static_cast<double>(R) : 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (disclosed[i]) continue;
        const int m = used < L ? 0 : 1;
        s.alice[m].push_back(a[i]);
        s.recipient[m].push_back(b[i]);
        ++used;
    }
    return s;
}

std::string describe(const char* who, const VerificationResult& v) {
    std::ostringstream os;
    os << who << " verifies at " << v.threshold_used << ": direct mismatches " << v.mismatches_direct
       << ", forwarded mismatches " << v.mismatches_forwarded << (v.accepted ? ", accept" : ", reject");
    return os.str();
}

}  // namespace

HonestTranscript simulate_honest_run(const HonestRunParams& p, std::uint64_t seed) {
    if (p.L == 0 || p.L % 2 != 0) throw std::invalid_argument("simulate_honest_run: L must be even and positive");
    if (p.R == 0 || p.R > p.L / 2) throw std::invalid_argument("simulate_honest_run: need 1 <= R <= L/2");
    Rng rng = make_stream(seed, 0);
    HonestTranscript t;

    const SessionStrings bob = run_bsc_session(p.L, p.R, p.error_rate, rng);
    const SessionStrings charlie = run_bsc_session(p.L, p.R, p.error_rate, rng);
    const double half = static_cast<double>(p.L) / 2.0;
    t.e_obs = {bob.e_obs, charlie.e_obs};
    t.e_bar = {true_error_upper_bound(bob.e_obs, half, static_cast<double>(p.R), p.eps_PE),
               true_error_upper_bound(charlie.e_obs, half, static_cast<double>(p.R), p.eps_PE)};
    t.E_bar = std::max(t.e_bar[0], t.e_bar[1]);
    for (int s = 0; s < 2; ++s) {
        std::ostringstream os;
        os << (s == 0 ? "kgp alice-bob" : "kgp alice-charlie") << ": E_obs " << t.e_obs[s] << ", E_bar "
           << t.e_bar[s];
        t.events.push_back(os.str());
    }
    try {
        const Thresholds th = choose_thresholds(t.E_bar, p.p_E);
        t.s_a = th.s_a;
        t.s_v = th.s_v;
    } catch (const InfeasibleError& e) {
        t.outcome = HonestOutcome::infeasible;
        t.events.push_back(e.what());
        return t;
    }

    const SignedKeyState state = distribute(bob.alice, charlie.alice, bob.recipient, charlie.recipient, rng);
    t.events.push_back("distribution: keys symmetrized over the secret channel");
    t.message = static_cast<std::uint8_t>(rng() >> 63);
    const Declaration decl = sign(state, t.message);
    t.events.push_back("alice signs message " + std::to_string(t.message));

    t.bob = verify_unchecked(decl, state.bob[t.message], t.s_a, p.L);
    t.events.push_back(describe("bob", t.bob));
    if (!t.bob.accepted) {
        t.outcome = HonestOutcome::bob_rejected;
        return t;
    }
    t.charlie = verify_unchecked(decl, state.charlie[t.message], t.s_v, p.L);
    t.events.push_back(describe("charlie", t.charlie));
    t.outcome = t.charlie.accepted ? HonestOutcome::transferred : HonestOutcome::charlie_rejected;
    return t;
}

HonestRates simulate_honest_runs(const HonestRunParams& params, std::uint64_t trials, std::uint64_t seed) {
    HonestRates rates;
    rates.abort.trials = trials;
    rates.non_transfer.trials = trials;
    for (std::uint64_t i = 0; i < trials; ++i) {
        const auto t = simulate_honest_run(params, derive_seed(seed, i));
        if (t.outcome == HonestOutcome::infeasible) throw InfeasibleError("simulate_honest_runs: infeasible thresholds");
        rates.abort.successes += t.outcome == HonestOutcome::bob_rejected;
        rates.non_transfer.successes += t.outcome == HonestOutcome::charlie_rejected;
    }
    return rates;
}

RateEstimate simulate_repudiating_alice(double e_b, double e_c, std::size_t L, double s_a, double s_v,
                                        std::uint64_t trials, std::uint64_t seed) {
    if (!(e_b >= 0.0 && e_b <= 1.0 && e_c >= 0.0 && e_c <= 1.0)) {
        throw std::invalid_argument("simulate_repudiating_alice: error rates must lie in [0,1]");
    }
    const auto w_b = static_cast<std::size_t>(std::floor(e_b * static_cast<double>(L)));
    const auto w_c = static_cast<std::size_t>(std::floor(e_c * static_cast<double>(L)));
    RateEstimate est;
    est.trials = trials;
    for (std::uint64_t i = 0; i < trials; ++i) {
        Rng rng = make_stream(seed, i);
        const BitString k_b = random_bits(L, rng);
        const BitString k_c = random_bits(L, rng);
        Declaration decl{0, k_b, k_c};
        for (std::size_t pos : random_subset(L, w_b, rng)) decl.sig_b[pos] ^= 1;
        for (std::size_t pos : random_subset(L, w_c, rng)) decl.sig_c[pos] ^= 1;
        SecretChannel channel;
        const SymmetrizedKeys keys = symmetrize(k_b, k_c, channel, rng);
        const bool bob_accepts = verify_unchecked(decl, keys.bob, s_a, L).accepted;
        if (!bob_accepts) continue;
        est.successes += !verify_unchecked(decl, keys.charlie, s_v, L).accepted;
    }
    return est;
}

RateEstimate simulate_forging_bob(ForgeStrategy strategy, std::size_t L, double s_v, std::uint64_t trials,
                                  std::uint64_t seed) {
    RateEstimate est;
    est.trials = trials;
    for (std::uint64_t i = 0; i < trials; ++i) {
        Rng rng = make_stream(seed, i);
        const BitString k_b = random_bits(L, rng);
        const BitString k_c = random_bits(L, rng);
        SecretChannel channel;
        const SymmetrizedKeys keys = symmetrize(k_b, k_c, channel, rng);

        Declaration decl{0, random_bits(L, rng), random_bits(L, rng)};
        if (strategy == ForgeStrategy::copy_known_half_randomize_rest) {
            decl.sig_b = k_b;
            for (const auto& rec : keys.bob) {
                if (rec.source_kgp == SourceKgp::alice_charlie) decl.sig_c[rec.position - L] = rec.bit;
            }
        }
        est.successes += verify_unchecked(decl, keys.charlie, s_v, L).accepted;
    }
    return est;
}

double forging_guess_bound(std::size_t L, double s_v) {
    const std::uint64_t half = L / 2;
    const double r = std::ceil(s_v * static_cast<double>(half)) - 1.0;
    if (r < 0.0) return 0.0;
    const auto rr = static_cast<std::uint64_t>(std::min(r, static_cast<double>(half)));
    const LogProb tail = binomial_tail_log2_exact(half, rr);
    return std::exp2(tail.log2_value - static_cast<double>(half));
}

std::string to_string(HonestOutcome outcome) {
    switch (outcome) {
        case HonestOutcome::transferred: return "transferred";
        case HonestOutcome::bob_rejected: return "bob_rejected";
        case HonestOutcome::charlie_rejected: return "charlie_rejected";
        case HonestOutcome::infeasible: return "infeasible";
    }
    return "?";
}

std::string to_string(ForgeStrategy strategy) {
    return strategy == ForgeStrategy::random_guess ? "random-guess" : "copy-known-half-randomize-rest";
}

nlohmann::json to_json(const VerificationResult& r) {
    return {{"accepted", r.accepted},
            {"mismatches_direct", r.mismatches_direct},
            {"mismatches_forwarded", r.mismatches_forwarded},
            {"threshold_used", r.threshold_used}};
}

nlohmann::json to_json(const HonestTranscript& t) {
    return {{"e_obs", {t.e_obs[0], t.e_obs[1]}},
            {"e_bar", {t.e_bar[0], t.e_bar[1]}},
            {"E_bar", t.E_bar},
            {"s_a", t.s_a},
            {"s_v", t.s_v},
            {"message", t.message},
            {"bob", to_json(t.bob)},
            {"charlie", to_json(t.charlie)},
            {"outcome", to_string(t.outcome)},
            {"events", t.events}};
}

nlohmann::json to_json(const RateEstimate& e) {
    return {{"successes", e.successes}, {"trials", e.trials}, {"rate", e.rate()}};
}

}  // namespace mdiqds
