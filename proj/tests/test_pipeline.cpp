#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "mdiqds/pipeline.hpp"

using namespace mdiqds;

namespace {

PipelineOptions worked_options() {
    PipelineOptions o;
    o.budget = ErrorBudget::uniform(1e-10, 1e-5, 1e-5);
    return o;
}

KgpSummary fake_summary(double e_bar, double p_E, double n_k) {
    KgpSummary s;
    s.usable = true;
    s.e_bar = e_bar;
    s.e_obs = e_bar - 0.003;
    s.p_E = p_E;
    s.n_k = n_k;
    s.r_k = n_k / 17;
    s.c_k1 = 0.2;
    s.h_min = 0.1 * n_k;
    return s;
}

KgpSetup snspd_setup() {
    KgpSetup s;
    s.profile.detector_efficiency = 0.93;
    s.profile.dark_count_prob = 1e-6;
    return s;
}

}  // namespace

TEST(SampleSizes, RoundingRules) {
    const SampleSizes s = sample_sizes(1000, 0.055);
    EXPECT_EQ(s.r_k, 55);
    EXPECT_EQ(s.n_k, 944);
    EXPECT_EQ(sample_sizes(0, 0.055).n_k, 0);
    const SampleSizes t = sample_sizes(1001, 0.055);
    EXPECT_EQ(t.r_k, 56);
    EXPECT_EQ(t.n_k, 944);
}

TEST(Replay, WorkedExample) {
    const auto start = std::chrono::steady_clock::now();
    const SecurityReport r = replay_report(ReplayInputs{}, worked_options());
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
    ASSERT_TRUE(r.feasible);
    EXPECT_NEAR(r.E_bar, 0.0239, 5e-4);
    EXPECT_NEAR(r.h_min, 8.69e5, 0.02 * 8.69e5);
    EXPECT_NEAR(r.p_E, 0.0302, 5e-4);
    EXPECT_NEAR(r.s_a, 0.0260, 5e-4);
    EXPECT_NEAR(r.s_v, 0.0281, 5e-4);
    EXPECT_EQ(r.pr_honest_abort, 2e-5);
    EXPECT_NEAR(r.pr_forge, 3e-5, 1e-6);
    EXPECT_GT(r.pr_repudiation, 9.857e-5 / 2);
    EXPECT_LT(r.pr_repudiation, 9.857e-5 * 2);
    EXPECT_NEAR(r.t_r_seconds / 60.0, 93.0, 0.5);
    EXPECT_TRUE(report_invariants_hold(r));
}

TEST(BuildReport, AggregatesWorstCase) {
    const PipelineOptions o = worked_options();
    const SecurityReport r = build_report({fake_summary(0.02, 0.06, 2e7), fake_summary(0.025, 0.05, 1e7)}, o);
    EXPECT_DOUBLE_EQ(r.E_bar, 0.025);
    EXPECT_DOUBLE_EQ(r.p_E, 0.05);
    EXPECT_DOUBLE_EQ(r.n_k, 1e7);
    EXPECT_TRUE(r.feasible);
    EXPECT_NEAR(r.s_a, 0.025 + 0.025 / 3, 1e-15);

    const SecurityReport mixed =
        build_report({fake_summary(0.03, 0.05, 2e7), fake_summary(0.02, 0.04, 3e7)}, o);
    EXPECT_DOUBLE_EQ(mixed.E_bar, 0.03);
    EXPECT_DOUBLE_EQ(mixed.p_E, 0.04);
    EXPECT_DOUBLE_EQ(mixed.n_k, 2e7);
}

TEST(BuildReport, UnusableOrInfeasibleSessions) {
    const PipelineOptions o = worked_options();
    KgpSummary bad;
    bad.reason = "no usable code string";
    const SecurityReport r = build_report({fake_summary(0.02, 0.05, 1e7), bad}, o);
    EXPECT_FALSE(r.feasible);
    EXPECT_EQ(r.pr_forge, 1.0);
    EXPECT_EQ(r.pr_honest_abort, 1.0);
    EXPECT_EQ(r.pr_repudiation, 1.0);
    EXPECT_EQ(r.note, "no usable code string");

    const SecurityReport floor = build_report({fake_summary(0.05, 0.04, 1e7), fake_summary(0.02, 0.05, 1e7)}, o);
    EXPECT_FALSE(floor.feasible);
    EXPECT_EQ(floor.pr_forge, 1.0);
    EXPECT_TRUE(report_invariants_hold(floor));
}

TEST(SummarizeKgp, PicksSmallestPhaseErrorBound) {
    const KgpSetup s = snspd_setup();
    const ExpectedRates rates = expected_rates(s.alice, s.peer, s.profile);
    const PhotonPopulation pop(s.alice, s.peer);
    const PipelineOptions o = worked_options();
    std::array<SetCounts, 2> counts{rates.expected_counts(BellState::psi_minus, 1e12),
                                    rates.expected_counts(BellState::psi_plus, 1e12)};
    const KgpSummary sum = summarize_kgp(counts, {0.02, 0.02}, pop, o);
    ASSERT_TRUE(sum.usable);
    const int other = 1 - index(sum.selected);
    EXPECT_LE(sum.e_k1, sum.yields[other].e_k1);
    EXPECT_NEAR(sum.c_k1, 2 * sum.yields[index(sum.selected)].n_k1 / sum.n_k, 1e-15);
    EXPECT_NEAR(sum.e_bar, true_error_upper_bound(0.02, sum.n_k / 2, sum.r_k, o.budget.eps_PE), 1e-15);

    // too few events: both states discarded with a reason
    std::array<SetCounts, 2> tiny{rates.expected_counts(BellState::psi_minus, 1e3),
                                  rates.expected_counts(BellState::psi_plus, 1e3)};
    const KgpSummary none = summarize_kgp(tiny, {0.0, 0.0}, pop, o);
    EXPECT_FALSE(none.usable);
    EXPECT_FALSE(none.reason.empty());
}

TEST(AnalyticModel, FeasibilityImprovesWithPulses) {
    const AnalyticModel model(snspd_setup(), snspd_setup());
    const PipelineOptions o = worked_options();
    const PipelineResult small = model.evaluate(1e8, o);
    const PipelineResult large = model.evaluate(1e13, o);
    EXPECT_FALSE(small.report.feasible);
    ASSERT_TRUE(large.report.feasible);
    EXPECT_TRUE(report_invariants_hold(large.report));
    EXPECT_LT(large.report.max_failure(), 1e-4);
    EXPECT_DOUBLE_EQ(large.report.t_r_seconds, 1e13 / 1e9);
}

TEST(AnalyticModel, SearchFindsSmallestPassingCount) {
    const AnalyticModel model(snspd_setup(), snspd_setup());
    const PipelineOptions o = worked_options();
    const SearchResult found = signature_length_search(model, o, 1e-4);
    EXPECT_TRUE(found.result.report.feasible);
    EXPECT_LE(found.result.report.max_failure(), 1e-4);
    const PipelineResult below = model.evaluate(found.N_sig / 1.002, o);
    EXPECT_FALSE(below.report.feasible && below.report.max_failure() <= 1e-4);
    // same order of magnitude as the published SNSPD signature length
    EXPECT_GT(found.N_sig, 1e10);
    EXPECT_LT(found.N_sig, 1e13);
    EXPECT_THROW(signature_length_search(model, o, 1e-4, 1e6, 1e8), InfeasibleError);
}

TEST(MonteCarlo, DeterministicForSeed) {
    KgpSetup s = snspd_setup();
    s.profile.distance_km = 0.0;
    s.alice.intensities = s.peer.intensities = {0.5, 0.1, 0.01};
    PipelineOptions o;
    o.budget = ErrorBudget::uniform(1e-2);
    const MonteCarloResult a = run_montecarlo(s, s, o, 2000000, 42, {1u << 18, 1});
    const MonteCarloResult b = run_montecarlo(s, s, o, 2000000, 42, {1u << 18, 2});
    EXPECT_EQ(a.kgps[0].data.set_size, b.kgps[0].data.set_size);
    EXPECT_EQ(a.result.report.E_obs, b.result.report.E_obs);
    EXPECT_EQ(a.result.report.p_E, b.result.report.p_E);
    EXPECT_NE(a.kgps[0].data.set_size, a.kgps[1].data.set_size);
    EXPECT_EQ(a.result.report.N_sig, 2e6);
    for (const auto& kgp : a.kgps)
        for (BellState k : kBellStates) {
            EXPECT_GT(kgp.truth[index(k)].keep_single, 0.0);
            EXPECT_GE(kgp.truth[index(k)].phase_error, 0.0);
        }
}
