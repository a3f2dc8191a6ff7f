#pragma once

// Three-party signature scheme on top of two key generation sessions:
// distribution (symmetrization over the Bob-Charlie secret channel),
// messaging (sign, verify, forward) and adversary simulators.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdiqds/rng.hpp"

namespace mdiqds {

using BitString = std::vector<std::uint8_t>;

enum class Origin : std::uint8_t { direct, forwarded };
enum class SourceKgp : std::uint8_t { alice_bob, alice_charlie };
enum class Recipient : std::uint8_t { bob, charlie };

/// Positions [0, L) belong to the Alice-Bob string, [L, 2L) to the
/// Alice-Charlie string.
struct KeyRecord {
    std::size_t position = 0;
    std::uint8_t bit = 0;
    Origin origin = Origin::direct;
    SourceKgp source_kgp = SourceKgp::alice_bob;
};

using Key = std::vector<KeyRecord>;

/// Ideal authenticated secret channel between Bob and Charlie.
class SecretChannel {
public:
    void send(Recipient to, std::vector<KeyRecord> records);
    std::vector<KeyRecord> receive(Recipient to);
    [[nodiscard]] std::size_t messages_sent() const { return messages_; }

private:
    std::array<std::vector<KeyRecord>, 2> inbox_;
    std::size_t messages_ = 0;
};

struct SymmetrizedKeys {
    Key bob;
    Key charlie;
};

/**
 * Each recipient keeps a uniformly random half of its string and sends the
 * other half, positions and bits, to the other recipient. Both results hold
 * L/2 direct and L/2 forwarded records, sorted by position.
 * Throws std::invalid_argument for odd or unequal lengths.
 */
SymmetrizedKeys symmetrize(const BitString& k_b, const BitString& k_c, SecretChannel& channel, Rng& rng);

/// Keys for both possible one-bit messages.
struct SignedKeyState {
    std::size_t L = 0;
    std::array<BitString, 2> alice_b;  // A^B_m
    std::array<BitString, 2> alice_c;  // A^C_m
    std::array<Key, 2> bob;            // S^B_m
    std::array<Key, 2> charlie;        // S^C_m
};

/// Distribution stage from the four strings of each message.
SignedKeyState distribute(const std::array<BitString, 2>& alice_b, const std::array<BitString, 2>& alice_c,
                          const std::array<BitString, 2>& k_b, const std::array<BitString, 2>& k_c, Rng& rng);

struct Declaration {
    std::uint8_t message = 0;
    BitString sig_b;
    BitString sig_c;
};

Declaration sign(const SignedKeyState& state, std::uint8_t message);

/// One declaration per bit, each from its own distribution stage.
std::vector<Declaration> sign_bits(const std::vector<SignedKeyState>& states, const BitString& bits);

struct VerificationResult {
    bool accepted = false;
    std::size_t mismatches_direct = 0;
    std::size_t mismatches_forwarded = 0;
    double threshold_used = 0.0;
};

/// Accepts iff both counts are strictly below threshold * L / 2.
bool mismatch_acceptable(std::size_t mismatches, double threshold, std::size_t L);

/**
 * Counts mismatches of `key` against the declaration, separately for direct
 * and forwarded records. Requires threshold in (0, 1/2) and |key| = L;
 * throws std::invalid_argument on a malformed declaration.
 */
VerificationResult verify(const Declaration& decl, const Key& key, double threshold, std::size_t L);

/// Same counting without the range check on the threshold; simulators use
/// it to explore thresholds the protocol itself forbids.
VerificationResult verify_unchecked(const Declaration& decl, const Key& key, double threshold, std::size_t L);

struct HonestRunParams {
    std::size_t L = 1000;
    /// Bits per session disclosed for the error estimate.
    std::size_t R = 200;
    /// Flip probability of both Alice-recipient channels.
    double error_rate = 0.02;
    double eps_PE = 1e-5;
    /// Adversary error floor used to place the thresholds.
    double p_E = 0.5;
};

enum class HonestOutcome { transferred, bob_rejected, charlie_rejected, infeasible };

struct HonestTranscript {
    std::array<double, 2> e_obs{};   // Alice-Bob, Alice-Charlie
    std::array<double, 2> e_bar{};
    double E_bar = 0.0;
    double s_a = 0.0;
    double s_v = 0.0;
    std::uint8_t message = 0;
    VerificationResult bob;
    VerificationResult charlie;
    HonestOutcome outcome = HonestOutcome::infeasible;
    std::vector<std::string> events;
};

/// Key generation over binary symmetric channels, distribution, signing,
/// Bob's check at s_a and Charlie's check of the forwarded declaration at s_v.
HonestTranscript simulate_honest_run(const HonestRunParams& params, std::uint64_t seed);

struct RateEstimate {
    std::uint64_t successes = 0;
    std::uint64_t trials = 0;
    [[nodiscard]] double rate() const;
    /// sqrt(p (1 - p) / trials) at p = min(reference, 1).
    [[nodiscard]] double standard_error(double reference) const;
};

/// Fraction of runs that abort at Bob or fail at Charlie.
struct HonestRates {
    RateEstimate abort;
    RateEstimate non_transfer;
};

HonestRates simulate_honest_runs(const HonestRunParams& params, std::uint64_t trials, std::uint64_t seed);

/**
 * Alice plants floor(e_b L) and floor(e_c L) mismatches at random positions
 * of her two signature strings. Success: Bob accepts at s_a and Charlie
 * rejects the forwarded declaration at s_v.
 */
RateEstimate simulate_repudiating_alice(double e_b, double e_c, std::size_t L, double s_a, double s_v,
                                        std::uint64_t trials, std::uint64_t seed);

enum class ForgeStrategy { random_guess, copy_known_half_randomize_rest };

/**
 * Bob builds a declaration for Charlie. He knows his whole Alice-Bob string
 * (the half he forwarded is now in Charlie's key) and the half of Charlie's
 * string that Charlie forwarded to him; the half Charlie kept is unknown.
 */
RateEstimate simulate_forging_bob(ForgeStrategy strategy, std::size_t L, double s_v, std::uint64_t trials,
                                  std::uint64_t seed);

/// Forging bound for a fully unknown half: sum_{m<=r} C(L/2, m) 2^{-L/2},
/// r = ceil(s_v L / 2) - 1.
double forging_guess_bound(std::size_t L, double s_v);

std::string to_string(HonestOutcome outcome);
std::string to_string(ForgeStrategy strategy);

nlohmann::json to_json(const VerificationResult& result);
nlohmann::json to_json(const HonestTranscript& transcript);
nlohmann::json to_json(const RateEstimate& estimate);

}  // namespace mdiqds
