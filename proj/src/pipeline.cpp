#include "mdiqds/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mdiqds/entropy_math.hpp"

namespace mdiqds {

bool KgpSetup::operator==(const KgpSetup& o) const {
    const auto same_source = [](const DecoySourceConfig& a, const DecoySourceConfig& b) {
        return a.intensities == b.intensities && a.intensity_probs == b.intensity_probs &&
               a.basis_probs == b.basis_probs && a.pulse_rate == b.pulse_rate;
    };
    const auto& p = profile;
    const auto& q = o.profile;
    return same_source(alice, o.alice) && same_source(peer, o.peer) && p.distance_km == q.distance_km &&
           p.loss_db_per_km == q.loss_db_per_km && p.detector_efficiency == q.detector_efficiency &&
           p.dark_count_prob == q.dark_count_prob && p.misalignment == q.misalignment &&
           p.alice_link_share == q.alice_link_share;
}

SampleSizes sample_sizes(double z_signal_size, double r_fraction) {
    SampleSizes s;
    if (!(z_signal_size > 0.0)) return s;
    s.r_k = std::ceil(r_fraction * z_signal_size);
    s.n_k = 2.0 * std::floor(std::max(z_signal_size - s.r_k, 0.0) / 2.0);
    return s;
}

KgpSummary summarize_kgp(const std::array<SetCounts, 2>& counts, const std::array<double, 2>& e_obs,
                         const PhotonPopulation& pop, const PipelineOptions& options) {
    KgpSummary out;
    int best = -1;
    for (BellState k : kBellStates) {
        const int i = index(k);
        const double z = counts[i].z_size[0][0];
        const SampleSizes sizes = sample_sizes(z, options.r_fraction);
        auto& y = out.yields[i];
        if (sizes.r_k < 1.0 || sizes.n_k / 2.0 < sizes.r_k) {
            y.budget = options.budget;
            y.z_signal_size = z;
            y.discard_reason = "too few signal-signal Z events for the error sample";
            continue;
        }
        try {
            y = estimate_yields(counts[i], pop, sizes.n_k / 2.0, options.budget);
        } catch (const EstimationError& e) {
            y = YieldEstimate{};
            y.budget = options.budget;
            y.z_signal_size = z;
            y.discard_reason = e.what();
            continue;
        }
        if (y.usable && (best < 0 || y.e_k1 < out.yields[best].e_k1)) best = i;
    }
    if (best < 0) {
        out.reason = "no usable code string: " + out.yields[0].discard_reason + "; " + out.yields[1].discard_reason;
        return out;
    }

    const YieldEstimate& y = out.yields[best];
    const SampleSizes sizes = sample_sizes(y.z_signal_size, options.r_fraction);
    out.usable = true;
    out.selected = static_cast<BellState>(best);
    out.z_signal_size = y.z_signal_size;
    out.r_k = sizes.r_k;
    out.n_k = sizes.n_k;
    out.e_obs = e_obs[best];
    out.e_bar = true_error_upper_bound(out.e_obs, out.n_k / 2.0, out.r_k, options.budget.eps_PE);
    out.c_k0 = 2.0 * y.n_k0 / out.n_k;
    out.c_k1 = 2.0 * y.n_k1 / out.n_k;
    out.e_k1 = y.e_k1;
    out.h_min = min_entropy_bound(y.n_k0, y.n_k1, y.e_k1, options.budget.eps_k_prime(), options.budget.eps_k_hat());
    out.h_min_approx = min_entropy_approx(y.n_k0, y.n_k1, y.e_k1);
    out.p_E = solve_p_E(out.c_k0, out.c_k1, out.e_k1, &out.p_E_clamped);
    return out;
}

namespace {

void mark_infeasible(SecurityReport& r, const std::string& why) {
    r.feasible = false;
    r.note = why;
    r.pr_honest_abort = r.pr_repudiation = r.pr_forge = r.p_F = 1.0;
    r.pr_repudiation_raw = r.pr_forge_raw = 1.0;
}

/// Thresholds, failure probabilities and key length once h_min, c values,
/// E_bar, p_E and n_k are set.
void complete_report(SecurityReport& r, const PipelineOptions& options) {
    r.budget = options.budget;
    r.g = options.budget.g;
    r.zeta = options.zeta;
    r.c_k0_rate = r.c_k0 / 2.0;
    r.c_k1_rate = r.c_k1 / 2.0;
    r.feasibility_margin = r.c_k0 + r.c_k1 * (1.0 - binary_entropy(r.e_k1)) - binary_entropy(r.E_bar);
    const KeyLength key = mdi_qkd_key_length(r.n_k, r.c_k0, r.c_k1, r.e_k1, r.E_bar, r.zeta, options.budget);
    r.l_k = key.full;
    r.l_k_asymptotic = key.asymptotic;
    try {
        const Thresholds t = choose_thresholds(r.E_bar, r.p_E);
        r.s_a = t.s_a;
        r.s_v = t.s_v;
    } catch (const InfeasibleError& e) {
        mark_infeasible(r, e.what());
        return;
    }
    r.feasible = true;
    r = abort_repudiation_forge_bounds(r, options.budget);
}

}  // namespace

SecurityReport build_report(const std::array<KgpSummary, 2>& sessions, const PipelineOptions& options) {
    SecurityReport r;
    r.budget = options.budget;
    r.g = options.budget.g;
    r.zeta = options.zeta;
    for (const auto& s : sessions) {
        if (!s.usable) {
            mark_infeasible(r, s.reason);
            return r;
        }
    }
    const int worst = sessions[1].p_E < sessions[0].p_E ? 1 : 0;
    const int noisiest = sessions[1].e_bar > sessions[0].e_bar ? 1 : 0;
    const KgpSummary& w = sessions[worst];
    r.E_bar = sessions[noisiest].e_bar;
    r.E_obs = sessions[noisiest].e_obs;
    r.p_E = w.p_E;
    r.p_E_clamped = w.p_E_clamped;
    r.n_k = std::min(sessions[0].n_k, sessions[1].n_k);
    r.r_k = w.r_k;
    r.c_k0 = w.c_k0;
    r.c_k1 = w.c_k1;
    r.e_k1 = w.e_k1;
    r.h_min = w.h_min;
    r.h_min_approx = w.h_min_approx;
    r.selected_bell_state = std::string(to_string(w.selected));
    complete_report(r, options);
    return r;
}

AnalyticModel::AnalyticModel(const KgpSetup& bob, const KgpSetup& charlie) : setups_{bob, charlie} {
    rates_[0] = expected_rates(bob.alice, bob.peer, bob.profile);
    rates_[1] = charlie == bob ? rates_[0] : expected_rates(charlie.alice, charlie.peer, charlie.profile);
}

PipelineResult AnalyticModel::evaluate(double pulses, const PipelineOptions& options) const {
    PipelineResult out;
    for (int s = 0; s < 2; ++s) {
        const PhotonPopulation pop(setups_[s].alice, setups_[s].peer);
        std::array<SetCounts, 2> counts;
        std::array<double, 2> e_obs{};
        for (BellState k : kBellStates) {
            counts[index(k)] = rates_[s].expected_counts(k, pulses);
            e_obs[index(k)] = rates_[s].at(Basis::Z, Intensity::signal, Intensity::signal).error_rate[index(k)];
        }
        out.sessions[s] = summarize_kgp(counts, e_obs, pop, options);
    }
    out.report = build_report(out.sessions, options);
    out.report.N_sig = pulses;
    out.report.pulse_rate = pulse_rate();
    out.report.t_r_seconds = pulses / pulse_rate();
    return out;
}

SearchResult signature_length_search(const AnalyticModel& model, const PipelineOptions& options,
                                     double target_security, double lower, double upper) {
    if (!(lower > 0.0 && upper > lower)) throw std::invalid_argument("signature_length_search: bad search range");
    const auto passes = [&](double n, PipelineResult& result) {
        result = model.evaluate(n, options);
        return result.report.feasible && result.report.max_failure() <= target_security;
    };
    SearchResult out;
    PipelineResult probe;
    double lo = lower;
    double hi = lower;
    // bracket by decades from below, then bisect in log space
    while (!passes(hi, probe)) {
        if (hi >= upper) {
            throw InfeasibleError("signature_length_search: no pulse count up to " + std::to_string(upper) +
                                  " reaches the target (" + probe.report.note + ")");
        }
        lo = hi;
        hi = std::min(hi * 10.0, upper);
    }
    while (hi / lo > 1.001) {
        const double mid = std::sqrt(lo * hi);
        if (passes(mid, probe)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    out.N_sig = std::ceil(hi);
    out.result = model.evaluate(out.N_sig, options);
    out.n_k = out.result.report.n_k;
    out.t_r_seconds = out.result.report.t_r_seconds;
    return out;
}

SecurityReport replay_report(const ReplayInputs& in, const PipelineOptions& options) {
    SecurityReport r;
    const double half = in.n_k / 2.0;
    const double n_k0 = in.c_k0 * half;
    const double n_k1 = in.c_k1 * half;
    r.n_k = in.n_k;
    r.r_k = in.r_k;
    r.E_obs = in.e_obs;
    r.E_bar = true_error_upper_bound(in.e_obs, half, in.r_k, options.budget.eps_PE);
    r.c_k0 = in.c_k0;
    r.c_k1 = in.c_k1;
    r.e_k1 = in.e_k1;
    r.h_min = min_entropy_bound(n_k0, n_k1, in.e_k1, options.budget.eps_k_prime(), options.budget.eps_k_hat());
    r.h_min_approx = min_entropy_approx(n_k0, n_k1, in.e_k1);
    r.p_E = solve_p_E(in.c_k0, in.c_k1, in.e_k1, &r.p_E_clamped);
    r.N_sig = in.N_sig;
    r.pulse_rate = in.pulse_rate;
    r.t_r_seconds = in.N_sig / in.pulse_rate;
    r.selected_bell_state = "replay";
    complete_report(r, options);
    return r;
}

MonteCarloKgp run_montecarlo_kgp(const KgpSetup& setup, const PipelineOptions& options, const StopRule& stop,
                                 std::uint64_t seed, const SessionOptions& session) {
    MonteCarloKgp out;
    out.data = run_kgp_session(setup.alice, setup.peer, setup.profile, stop, derive_seed(seed, 1), session);
    Rng rng = make_stream(derive_seed(seed, 2), 0);
    const PhotonPopulation pop(setup.alice, setup.peer);

    std::array<SetCounts, 2> counts;
    std::array<double, 2> e_obs{};
    for (BellState k : kBellStates) {
        const int i = index(k);
        counts[i] = out.data.counts(k);
        out.truth[i].phase_error = photon_pair_yield(1, 1, Basis::X, setup.profile).error_rate(k);
        const SampleSizes sizes = sample_sizes(counts[i].z_size[0][0], options.r_fraction);
        if (sizes.r_k < 1.0 || sizes.n_k < 2.0) continue;
        ErrorSample sample = observed_error_rate(out.data, k, static_cast<std::size_t>(sizes.r_k), rng);
        e_obs[i] = sample.e_obs;
        auto& code = sample.code_indices;
        std::shuffle(code.begin(), code.end(), rng);
        const auto half = static_cast<std::size_t>(sizes.n_k / 2.0);
        for (std::size_t j = 0; j < half; ++j) {
            const SiftedEvent& e = out.data.events[code[j]];
            out.truth[i].keep_vacuum += e.peer_photons == 0;
            out.truth[i].keep_single += e.alice_photons == 1 && e.peer_photons == 1;
        }
    }
    out.summary = summarize_kgp(counts, e_obs, pop, options);
    return out;
}

MonteCarloResult run_montecarlo(const KgpSetup& bob, const KgpSetup& charlie, const PipelineOptions& options,
                                std::uint64_t pulses, std::uint64_t seed, const SessionOptions& session) {
    MonteCarloResult out;
    const StopRule stop = StopRule::budget(pulses);
    out.kgps[0] = run_montecarlo_kgp(bob, options, stop, derive_seed(seed, 10), session);
    out.kgps[1] = run_montecarlo_kgp(charlie, options, stop, derive_seed(seed, 11), session);
    out.result.sessions = {out.kgps[0].summary, out.kgps[1].summary};
    out.result.report = build_report(out.result.sessions, options);
    out.result.report.N_sig = static_cast<double>(pulses);
    out.result.report.pulse_rate = bob.peer.pulse_rate;
    out.result.report.t_r_seconds = static_cast<double>(pulses) / bob.peer.pulse_rate;
    return out;
}

}  // namespace mdiqds
