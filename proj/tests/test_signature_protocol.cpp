#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mdiqds/signature_protocol.hpp"
#include "oracles.hpp"

using namespace mdiqds;

namespace {

BitString bits(std::size_t n, Rng& rng) {
    BitString b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng() & 1);
    return b;
}

// |rate - p| <= 3 sigma, with sigma from the exact p
void expect_within_3_sigma(const RateEstimate& est, double p) {
    const double sigma = std::sqrt(std::max(p * (1 - p), 1e-12) / static_cast<double>(est.trials));
    EXPECT_LE(std::abs(est.rate() - p), 3 * sigma) << est.successes << "/" << est.trials << " vs " << p;
}

}  // namespace

TEST(Symmetrize, HalvesAreComplementary) {
    Rng rng = make_stream(1, 0);
    const std::size_t L = 40;
    const BitString kb = bits(L, rng);
    const BitString kc = bits(L, rng);
    SecretChannel channel;
    const SymmetrizedKeys keys = symmetrize(kb, kc, channel, rng);
    EXPECT_EQ(channel.messages_sent(), 2u);
    ASSERT_EQ(keys.bob.size(), L);
    ASSERT_EQ(keys.charlie.size(), L);
    std::set<std::size_t> all;
    for (const Key* key : {&keys.bob, &keys.charlie}) {
        std::size_t direct = 0;
        for (std::size_t i = 0; i < key->size(); ++i) {
            const KeyRecord& rec = (*key)[i];
            if (i > 0) EXPECT_LT((*key)[i - 1].position, rec.position);
            direct += rec.origin == Origin::direct;
            const BitString& src = rec.source_kgp == SourceKgp::alice_bob ? kb : kc;
            const std::size_t offset = rec.source_kgp == SourceKgp::alice_bob ? 0 : L;
            EXPECT_EQ(rec.bit, src[rec.position - offset]);
            all.insert(rec.position);
        }
        EXPECT_EQ(direct, L / 2);
    }
    EXPECT_EQ(all.size(), 2 * L);
    for (const auto& rec : keys.bob)
        EXPECT_EQ(rec.origin == Origin::direct, rec.source_kgp == SourceKgp::alice_bob);
    EXPECT_THROW(symmetrize(BitString(3), BitString(3), channel, rng), std::invalid_argument);
    EXPECT_THROW(symmetrize(BitString(4), BitString(6), channel, rng), std::invalid_argument);
}

TEST(Verify, CountsMismatchesPerHalf) {
    Rng rng = make_stream(2, 0);
    const std::size_t L = 20;
    std::array<BitString, 2> ab{bits(L, rng), bits(L, rng)};
    std::array<BitString, 2> ac{bits(L, rng), bits(L, rng)};
    const SignedKeyState state = distribute(ab, ac, ab, ac, rng);
    Declaration decl = sign(state, 1);
    EXPECT_EQ(decl.message, 1);
    VerificationResult v = verify(decl, state.bob[1], 0.1, L);
    EXPECT_TRUE(v.accepted);
    EXPECT_EQ(v.mismatches_direct + v.mismatches_forwarded, 0u);

    // flip one bit of each of Bob's records in the direct half
    std::size_t flipped = 0;
    for (const auto& rec : state.bob[1])
        if (rec.origin == Origin::direct && flipped < 2) {
            decl.sig_b[rec.position] ^= 1;
            ++flipped;
        }
    v = verify(decl, state.bob[1], 0.3, L);
    EXPECT_EQ(v.mismatches_direct, 2u);
    EXPECT_EQ(v.mismatches_forwarded, 0u);
    EXPECT_TRUE(v.accepted);  // 2 < 0.3 * 10
    EXPECT_FALSE(verify(decl, state.bob[1], 0.2, L).accepted);  // 2 == 0.2 * 10 rejects
    EXPECT_THROW(verify(decl, state.bob[1], 0.5, L), std::invalid_argument);
    EXPECT_THROW(verify(decl, state.bob[1], 0.0, L), std::invalid_argument);
    Declaration bad = decl;
    bad.sig_b.pop_back();
    EXPECT_THROW(verify(bad, state.bob[1], 0.3, L), std::invalid_argument);
}

TEST(Verify, StrictThreshold) {
    EXPECT_TRUE(mismatch_acceptable(4, 0.1, 100));
    EXPECT_FALSE(mismatch_acceptable(5, 0.1, 100));
    EXPECT_TRUE(mismatch_acceptable(5, 0.1001, 100));
    EXPECT_TRUE(mismatch_acceptable(0, 0.001, 100));
}

TEST(SignBits, OneDeclarationPerBit) {
    Rng rng = make_stream(3, 0);
    std::vector<SignedKeyState> states;
    for (int i = 0; i < 3; ++i) {
        std::array<BitString, 2> s{bits(10, rng), bits(10, rng)};
        states.push_back(distribute(s, s, s, s, rng));
    }
    const auto decls = sign_bits(states, {1, 0, 1});
    ASSERT_EQ(decls.size(), 3u);
    EXPECT_EQ(decls[1].message, 0);
    EXPECT_EQ(decls[2].sig_b, states[2].alice_b[1]);
}

TEST(HonestRun, TranscriptIsDeterministic) {
    HonestRunParams p;
    p.eps_PE = 1e-2;
    const HonestTranscript a = simulate_honest_run(p, 5);
    const HonestTranscript b = simulate_honest_run(p, 5);
    EXPECT_EQ(to_json(a), to_json(b));
    EXPECT_EQ(a.outcome, HonestOutcome::transferred);
    EXPECT_LT(a.E_bar, a.s_a);
    EXPECT_LT(a.s_a, a.s_v);
    EXPECT_FALSE(a.events.empty());
}

TEST(HonestRun, InfeasibleWhenFloorTooLow) {
    HonestRunParams p;
    p.p_E = 0.01;
    EXPECT_EQ(simulate_honest_run(p, 1).outcome, HonestOutcome::infeasible);
    EXPECT_THROW(simulate_honest_runs(p, 3, 1), std::runtime_error);
}

TEST(ExactOracles, HonestRunSmallBlocks) {
    for (auto [L, R, e] : {std::tuple{30u, 10u, 0.05}, std::tuple{20u, 10u, 0.1}, std::tuple{30u, 15u, 0.15}}) {
        HonestRunParams p;
        p.L = L;
        p.R = R;
        p.error_rate = e;
        p.eps_PE = 0.1;
        p.p_E = 0.5;
        const auto exact = oracle::honest_run_exact(L, R, e, p.eps_PE, p.p_E);
        const std::uint64_t trials = 20000;
        std::array<RateEstimate, 4> est;
        for (auto& x : est) x.trials = trials;
        for (std::uint64_t i = 0; i < trials; ++i) {
            const auto t = simulate_honest_run(p, derive_seed(77, i));
            ++est[static_cast<int>(t.outcome)].successes;
        }
        expect_within_3_sigma(est[static_cast<int>(HonestOutcome::bob_rejected)], exact.bob_rejected);
        expect_within_3_sigma(est[static_cast<int>(HonestOutcome::charlie_rejected)], exact.charlie_rejected);
        expect_within_3_sigma(est[static_cast<int>(HonestOutcome::transferred)], exact.transferred);
        expect_within_3_sigma(est[static_cast<int>(HonestOutcome::infeasible)], exact.infeasible);
        EXPECT_NEAR(exact.bob_rejected + exact.charlie_rejected + exact.transferred + exact.infeasible, 1.0, 1e-12);
    }
}

TEST(ExactOracles, RepudiationSmallBlocks) {
    for (auto [L, eb, ec, sa, sv] :
         {std::tuple{30u, 0.2, 0.2, 0.15, 0.35}, std::tuple{24u, 0.25, 0.1, 0.2, 0.3}, std::tuple{30u, 0.3, 0.3, 0.25, 0.35}}) {
        const auto wb = static_cast<unsigned>(std::floor(eb * L));
        const auto wc = static_cast<unsigned>(std::floor(ec * L));
        const double exact = oracle::repudiation_exact(L, wb, wc, sa, sv);
        expect_within_3_sigma(simulate_repudiating_alice(eb, ec, L, sa, sv, 40000, 9), exact);
    }
}

TEST(ExactOracles, ForgingSmallBlocks) {
    for (unsigned L : {10u, 20u, 30u})
        for (double sv : {0.2, 0.3, 0.45}) {
            const double known_half = oracle::random_guess_exact(L, sv);
            EXPECT_NEAR(forging_guess_bound(L, sv), known_half, 1e-12);
            expect_within_3_sigma(simulate_forging_bob(ForgeStrategy::copy_known_half_randomize_rest, L, sv, 40000, 4),
                                  known_half);
            // guessing every bit must beat both halves independently
            expect_within_3_sigma(simulate_forging_bob(ForgeStrategy::random_guess, L, sv, 40000, 5),
                                  known_half * known_half);
        }
}

TEST(ForgingBound, MonotoneInThresholdAndLength) {
    EXPECT_LT(forging_guess_bound(1000, 0.2), forging_guess_bound(1000, 0.3));
    EXPECT_LT(forging_guess_bound(2000, 0.3), forging_guess_bound(1000, 0.3));
    EXPECT_EQ(forging_guess_bound(100, 0.0), 0.0);
}

TEST(RateEstimate, Arithmetic) {
    RateEstimate r{25, 100};
    EXPECT_DOUBLE_EQ(r.rate(), 0.25);
    EXPECT_DOUBLE_EQ(r.standard_error(0.25), std::sqrt(0.25 * 0.75 / 100));
    EXPECT_DOUBLE_EQ(r.standard_error(2.0), 0.0);
}
