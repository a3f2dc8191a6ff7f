// One PASS/FAIL line per acceptance criterion, with the measured values.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdiqds/entropy_math.hpp"
#include "mdiqds/pipeline.hpp"
#include "mdiqds/scenario.hpp"
#include "mdiqds/security_engine.hpp"
#include "mdiqds/signature_protocol.hpp"
#include "oracles.hpp"

using namespace mdiqds;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool within(double value, double center, double tol) { return std::abs(value - center) <= tol; }

// P(X >= k) for X ~ Bin(n, p)
double binomial_upper_tail(unsigned n, unsigned k, double p) {
    double tail = 0.0;
    for (unsigned i = k; i <= n; ++i) tail += oracle::binomial_pmf(n, i, p);
    return std::min(tail, 1.0);
}

double log_binomial_pmf(std::uint64_t n, std::uint64_t k, double p) {
    const auto nd = static_cast<double>(n);
    const auto kd = static_cast<double>(k);
    return std::lgamma(nd + 1) - std::lgamma(kd + 1) - std::lgamma(nd - kd + 1) + kd * std::log(p) +
           (nd - kd) * std::log1p(-p);
}

// Exact two-sided binomial p-value: 2 min(P(X <= k), P(X >= k)).
double binomial_two_sided(std::uint64_t n, std::uint64_t k, double p) {
    if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return k == n ? 1.0 : 0.0;
    double lower = 0.0;
    double upper = 0.0;
    for (std::uint64_t i = 0; i <= n; ++i) {
        const double term = std::exp(log_binomial_pmf(n, i, p));
        if (i <= k) lower += term;
        if (i >= k) upper += term;
    }
    return std::min(1.0, 2.0 * std::min(lower, upper));
}

Outcome worked_example_replay() {
    Outcome o;
    PipelineOptions options;
    options.budget = ErrorBudget::uniform(1e-10, 1e-5, 1e-5);
    const auto start = std::chrono::steady_clock::now();
    const SecurityReport r = replay_report(ReplayInputs{}, options);
    const double elapsed = seconds_since(start);
    o.detail << "E_bar=" << r.E_bar << " H_min=" << r.h_min << " p_E=" << r.p_E << " s_a=" << r.s_a
             << " s_v=" << r.s_v << " abort=" << r.pr_honest_abort << " forge=" << r.pr_forge
             << " repudiation=" << r.pr_repudiation;
    o.require(r.feasible, "feasible");
    o.require(within(r.E_bar, 0.0239, 5e-4), "E_bar");
    o.require(within(r.h_min, 8.69e5, 0.02 * 8.69e5), "H_min");
    o.require(within(r.p_E, 0.0302, 5e-4), "p_E");
    o.require(within(r.s_a, 0.0260, 5e-4), "s_a");
    o.require(within(r.s_v, 0.0281, 5e-4), "s_v");
    o.require(r.pr_honest_abort == 2.0e-5, "honest abort");
    o.require(within(r.pr_forge, 3e-5, 1e-6), "forge");
    o.require(r.pr_repudiation >= 9.857e-5 / 2 && r.pr_repudiation <= 9.857e-5 * 2, "repudiation");
    o.require(elapsed < 5.0, "runtime");
    return o;
}

Outcome table_replay() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    const auto rows = table_arithmetic(1e9);
    const double elapsed = seconds_since(start);
    for (const auto& row : rows) {
        o.detail << (row.level == SecurityLevel::order_1e5 ? "1e-5/" : "1e-10/") << row.detector << "=" << row.minutes
                 << " ";
        o.require(row.matches, row.detector);
    }
    o.require(rows.size() == 8, "row count");
    o.require(elapsed < 1.0, "runtime");
    return o;
}

PulseRecord photon(Party party, Basis basis, int bit) {
    PulseRecord r;
    r.party = party;
    r.basis = basis;
    r.bit = static_cast<std::uint8_t>(bit);
    r.photon_number = 1;
    return r;
}

Outcome relay_physics() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();

    // exact: interferometer output against the permanent oracle
    double worst = 0.0;
    for (Basis ab : kBases)
        for (Basis pb : kBases)
            for (int x = 0; x < 2; ++x)
                for (int y = 0; y < 2; ++y) {
                    std::array<int, 2> a{0, 0}, b{0, 0};
                    a[x] = 1;
                    b[y] = 1;
                    const auto ref = oracle::fock_distribution(ab, a, pb, b);
                    const FockOutput& out = interferometer_output(ab, a, pb, b);
                    std::map<ModeOccupation, double> got;
                    for (std::size_t i = 0; i < out.patterns.size(); ++i) got[out.patterns[i]] += out.probabilities[i];
                    for (const auto& [occ, p] : ref) worst = std::max(worst, std::abs(got[occ] - p));
                    for (const auto& [occ, p] : got)
                        if (!ref.count(occ)) worst = std::max(worst, p);
                }
    o.require(worst < 1e-12, "Fock distribution");

    // no success pattern heralds a phi state
    for (int mask = 0; mask < 16; ++mask) {
        const BsmResult r = classify_clicks(static_cast<std::uint8_t>(mask));
        const bool psi = mask == (kD1H | kD2V) || mask == (kD1V | kD2H) || mask == (kD1H | kD1V) ||
                         mask == (kD2H | kD2V);
        o.require((r != BsmResult::failure) == psi, "click classification");
    }

    SystemProfile ideal;
    ideal.distance_km = 0.0;
    ideal.detector_efficiency = 1.0;
    ideal.dark_count_prob = 0.0;
    ideal.misalignment = 0.0;
    const int shots = 1000000;
    Rng rng = make_stream(20240601, 0);
    double worst_sigma = 0.0;
    std::uint64_t phi_like = 0;
    for (Basis basis : kBases)
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y) {
                const PulseRecord a = photon(Party::alice, basis, x);
                const PulseRecord b = photon(Party::peer, basis, y);
                std::array<std::uint64_t, 3> counts{};
                for (int i = 0; i < shots; ++i) {
                    const BsmOutcome out = relay_bsm(a, b, ideal, rng);
                    ++counts[static_cast<int>(out.result)];
                    const bool psi_pattern = out.click_pattern == (kD1H | kD2V) ||
                                             out.click_pattern == (kD1V | kD2H) ||
                                             out.click_pattern == (kD1H | kD1V) || out.click_pattern == (kD2H | kD2V);
                    if (out.result != BsmResult::failure && !psi_pattern) ++phi_like;
                }
                const auto ref = oracle::click_pattern_distribution(basis, x, basis, y, 1.0, 0.0);
                const std::array<double, 3> expected{ref[kD1H | kD2V] + ref[kD1V | kD2H],
                                                     ref[kD1H | kD1V] + ref[kD2H | kD2V], 0.0};
                for (int k = 0; k < 2; ++k) {
                    const double p = expected[k];
                    const double freq = static_cast<double>(counts[k]) / shots;
                    if (p == 0.0 || p == 1.0) {
                        o.require(counts[k] == static_cast<std::uint64_t>(p * shots), "exact outcome");
                        continue;
                    }
                    const double z = std::abs(freq - p) / std::sqrt(p * (1 - p) / shots);
                    worst_sigma = std::max(worst_sigma, z);
                    o.require(z <= 3.0, "3 sigma");
                }
                const bool same = x == y;
                if (basis == Basis::Z) {
                    // HV and VH: psi- and psi+ at one half each; HH and VV never succeed
                    o.require(same ? expected[0] + expected[1] == 0.0
                                   : within(expected[0], 0.5, 1e-12) && within(expected[1], 0.5, 1e-12),
                              "Z-basis oracle");
                }
            }
    o.require(phi_like == 0, "phi emitted");
    const double elapsed = seconds_since(start);
    o.require(elapsed < 60.0, "runtime");
    o.detail << "oracle max diff=" << worst << " shots/input=" << shots << " max |z|=" << worst_sigma
             << " phi-like successes=" << phi_like << " time=" << elapsed << "s";
    return o;
}

Outcome estimator_soundness() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    KgpSetup setup;
    setup.alice.intensities = {0.5, 0.1, 0.01};
    setup.alice.intensity_probs = {0.34, 0.33, 0.33};
    setup.alice.basis_probs = {0.5, 0.5};
    setup.peer = setup.alice;
    setup.profile.distance_km = 0.0;
    setup.profile.detector_efficiency = 0.93;
    setup.profile.dark_count_prob = 1e-6;
    PipelineOptions options;
    options.budget = ErrorBudget::uniform(1e-2);
    const ErrorBudget& b = options.budget;

    const unsigned sessions = 200;
    const std::uint64_t pulses = 10000000;
    unsigned estimates = 0;
    std::array<unsigned, 3> violations{};
    std::array<unsigned, 3> informative{};
    for (unsigned s = 0; s < sessions; ++s) {
        const MonteCarloKgp mc = run_montecarlo_kgp(setup, options, StopRule::budget(pulses), derive_seed(4242, s));
        for (BellState k : kBellStates) {
            const YieldEstimate& y = mc.summary.yields[index(k)];
            if (!y.usable) continue;
            const SessionTruth& t = mc.truth[index(k)];
            ++estimates;
            violations[0] += y.n_k0 > t.keep_vacuum;
            violations[1] += y.n_k1 > t.keep_single;
            violations[2] += y.e_k1 < t.phase_error;
            informative[0] += y.n_k0 > 0.0;
            informative[1] += y.n_k1 > 0.0;
            informative[2] += y.e_k1 < 0.5;
        }
    }
    const std::array<double, 3> eps{b.eps_k0(), b.eps_k1(), b.eps_ke()};
    const char* names[3] = {"n_k0", "n_k1", "e_k1"};
    o.require(estimates >= sessions, "usable estimates");
    for (int i = 0; i < 3; ++i) {
        // reject when violations are improbably many for the budgeted rate
        const double p_value = binomial_upper_tail(estimates, violations[i], eps[i]);
        o.require(p_value >= 0.01, names[i]);
        o.detail << names[i] << ": " << violations[i] << "/" << estimates << " violations (eps " << eps[i]
                 << ", p=" << p_value << ", informative " << informative[i] << ") ";
    }
    const double elapsed = seconds_since(start);
    o.require(elapsed < 600.0, "runtime");
    o.detail << "sessions=" << sessions << " pulses=" << pulses << " time=" << elapsed << "s";
    return o;
}

Outcome protocol_conformance() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    const Scenario s = parse_scenario({{"mode", "protocol"}, {"seed", 31337}, {"protocol", {{"L", 1000}, {"trials", 10000}}}});
    const RunOutput out = run(s);
    o.require(out.exit_code == kExitOk, "protocol mode exit code");
    for (const auto& e : out.json["experiments"]) {
        o.detail << e["experiment"].get<std::string>() << " " << e["successes"] << "/" << e["trials"]
                 << " bound=" << e["bound"] << " ";
        o.require(e["pass"].get<bool>(), e["experiment"].get<std::string>());
    }
    o.require(out.json["experiments"].size() == 3, "experiment count");

    // exact oracles for short blocks against Monte-Carlo
    const std::uint64_t trials = 20000;
    // exact binomial test at the two-sided 3 sigma level
    double min_p_value = 1.0;
    const auto check = [&](const RateEstimate& est, double exact, const std::string& what) {
        const double p_value = binomial_two_sided(est.trials, est.successes, exact);
        min_p_value = std::min(min_p_value, p_value);
        o.require(p_value >= 0.0027, what);
    };
    int oracle_checks = 0;
    for (unsigned L : {10u, 20u, 30u}) {
        for (double sv : {0.2, 0.4}) {
            const double f = oracle::random_guess_exact(L, sv);
            o.require(std::abs(forging_guess_bound(L, sv) - f) < 1e-12, "forging bound exact");
            check(simulate_forging_bob(ForgeStrategy::random_guess, L, sv, trials, 100 + L), f * f, "forge L<=30");
            check(simulate_forging_bob(ForgeStrategy::copy_known_half_randomize_rest, L, sv, trials, 200 + L), f,
                  "forge copy L<=30");
            oracle_checks += 3;
        }
        const double sa = 0.15;
        const double sv = 0.35;
        const double e = (sa + sv) / 2;
        const auto w = static_cast<unsigned>(std::floor(e * L));
        check(simulate_repudiating_alice(e, e, L, sa, sv, trials, 300 + L), oracle::repudiation_exact(L, w, w, sa, sv),
              "repudiation L<=30");
        ++oracle_checks;

        HonestRunParams p{L, L / 2, 0.05, 0.1, 0.5};
        const auto exact = oracle::honest_run_exact(L, L / 2, 0.05, 0.1, 0.5);
        // rare outcomes need enough trials for a meaningful count
        const std::uint64_t honest_trials = 2000000;
        std::array<RateEstimate, 4> est;
        for (auto& x : est) x.trials = honest_trials;
        for (std::uint64_t i = 0; i < honest_trials; ++i) ++est[static_cast<int>(simulate_honest_run(p, derive_seed(400 + L, i)).outcome)].successes;
        check(est[static_cast<int>(HonestOutcome::bob_rejected)], exact.bob_rejected, "honest abort L<=30");
        check(est[static_cast<int>(HonestOutcome::charlie_rejected)], exact.charlie_rejected, "non-transfer L<=30");
        oracle_checks += 2;
    }
    const double elapsed = seconds_since(start);
    o.require(elapsed < 600.0, "runtime");
    o.detail << " oracle comparisons=" << oracle_checks << " min p-value=" << min_p_value << " time=" << elapsed << "s";
    return o;
}

Outcome kernel_oracles() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    double worst_tail = 0.0;
    for (unsigned n = 0; n <= 30; ++n)
        for (unsigned r = 0; r <= n; ++r) {
            const double ref = oracle::binomial_sum_log2(n, r);
            const double got = binomial_tail_log2(n, r).log2_value;
            worst_tail = std::max(worst_tail, std::abs(got - ref));
        }
    o.require(worst_tail < 1e-10, "binomial tail");

    double worst_inverse = 0.0;
    for (int i = 0; i <= 10000; ++i) {
        const double p = 0.5 * i / 10000.0;
        worst_inverse = std::max(worst_inverse, std::abs(inverse_binary_entropy(binary_entropy(p)) - p));
    }
    o.require(worst_inverse <= 1e-10, "entropy inverse");

    double worst_smoothing = 0.0;
    for (double ep : {1e-20, 1e-10, 5e-11, 1e-3})
        for (double eh : {1e-20, 5e-11, 1e-2})
            for (double n1 : {0.0, 1e3, 8.69e5, 4.45e6}) {
                const double diff = min_entropy_approx(1e4, n1, 0.03) - min_entropy_bound(1e4, n1, 0.03, ep, eh);
                worst_smoothing = std::max(worst_smoothing, std::abs(diff - 2.0 * std::log2(2.0 / (ep * eh))));
            }
    o.require(worst_smoothing < 1e-8, "min-entropy smoothing term");
    const double elapsed = seconds_since(start);
    o.require(elapsed < 60.0, "runtime");
    o.detail << "tail max diff=" << worst_tail << " inverse max diff=" << worst_inverse
             << " smoothing max diff=" << worst_smoothing;
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"worked-example analytic replay", worked_example_replay},
        {"raw-key-time table arithmetic", table_replay},
        {"relay physics oracle", relay_physics},
        {"estimator soundness", estimator_soundness},
        {"protocol bound conformance", protocol_conformance},
        {"kernel oracle suite", kernel_oracles},
    };
    bool all = true;
    int number = 0;
    for (const auto& [name, fn] : criteria) {
        ++number;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        all = all && o.pass;
        std::printf("criterion %d %s: %s (%.2fs) %s\n", number, o.pass ? "PASS" : "FAIL", name.c_str(),
                    seconds_since(start), o.detail.str().c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
