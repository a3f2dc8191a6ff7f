#pragma once

// End-to-end evaluation: expected or simulated set counts -> yield
// estimates for both Bell states -> code string selection -> the security
// report over the Alice-Bob and Alice-Charlie sessions.

#include <array>
#include <cstdint>
#include <string>

#include "mdiqds/decoy_estimation.hpp"
#include "mdiqds/photon_channel.hpp"
#include "mdiqds/security_engine.hpp"

namespace mdiqds {

/// One key generation session: Alice and one recipient at the relay.
struct KgpSetup {
    DecoySourceConfig alice;
    DecoySourceConfig peer;
    SystemProfile profile;

    bool operator==(const KgpSetup& other) const;
};

struct PipelineOptions {
    ErrorBudget budget;
    /// Fraction of Z_k^{s,s} disclosed for the error estimate.
    double r_fraction = 0.055;
    double zeta = 1.16;
};

/// R_k = ceil(r_fraction |Z|), n_k = largest even number <= |Z| - R_k.
struct SampleSizes {
    double r_k = 0.0;
    double n_k = 0.0;
};
SampleSizes sample_sizes(double z_signal_size, double r_fraction);

struct KgpSummary {
    std::array<YieldEstimate, 2> yields;
    BellState selected = BellState::psi_minus;
    double z_signal_size = 0.0;
    double r_k = 0.0;
    double n_k = 0.0;
    double e_obs = 0.0;
    double e_bar = 0.0;
    double c_k0 = 0.0;
    double c_k1 = 0.0;
    double e_k1 = 0.5;
    double h_min = 0.0;
    double h_min_approx = 0.0;
    double p_E = 0.0;
    bool p_E_clamped = false;
    /// False when neither Bell state gives a usable code string.
    bool usable = false;
    std::string reason;
};

/// Estimates both Bell states and keeps the usable one with the smallest
/// e_k1. `e_obs[k]` is the disclosed-sample error rate of state k.
KgpSummary summarize_kgp(const std::array<SetCounts, 2>& counts, const std::array<double, 2>& e_obs,
                         const PhotonPopulation& pop, const PipelineOptions& options);

/// Aggregates the two sessions (E_bar = max, p_E = min, n_k = min) and
/// fills thresholds and failure probabilities. Infeasible sessions give a
/// report with feasible = false and all failure probabilities at 1.
SecurityReport build_report(const std::array<KgpSummary, 2>& sessions, const PipelineOptions& options);

struct PipelineResult {
    SecurityReport report;
    std::array<KgpSummary, 2> sessions;
};

/// Expected-count evaluation; rates are computed once per distinct setup.
class AnalyticModel {
public:
    AnalyticModel(const KgpSetup& bob, const KgpSetup& charlie);

    [[nodiscard]] PipelineResult evaluate(double pulses, const PipelineOptions& options) const;
    [[nodiscard]] const ExpectedRates& rates(int session) const { return rates_[session]; }
    [[nodiscard]] const KgpSetup& setup(int session) const { return setups_[session]; }
    [[nodiscard]] double pulse_rate() const { return setups_[0].peer.pulse_rate; }

private:
    std::array<KgpSetup, 2> setups_;
    std::array<ExpectedRates, 2> rates_;
};

struct SearchResult {
    double N_sig = 0.0;
    double n_k = 0.0;
    double t_r_seconds = 0.0;
    PipelineResult result;
};

/**
 * Smallest pulse count (to 0.1% relative) in [lower, upper] whose report
 * is feasible with honest abort, repudiation and forging all at most
 * `target_security`. Throws InfeasibleError if `upper` does not qualify.
 */
SearchResult signature_length_search(const AnalyticModel& model, const PipelineOptions& options,
                                     double target_security, double lower = 1e6, double upper = 1e17);

/// Inputs for replaying published intermediate values.
struct ReplayInputs {
    double e_obs = 0.0207;
    double n_k = 8.9e6;
    double r_k = 5.18e5;
    double c_k0 = 0.0;
    double c_k1 = 0.19528;
    double e_k1 = 0.0;
    double N_sig = 5.58e12;
    double pulse_rate = 1e9;
};

SecurityReport replay_report(const ReplayInputs& in, const PipelineOptions& options);

/// Ground truth of one simulated session for the selected-state checks.
struct SessionTruth {
    /// Events in the kept half where the recipient emitted vacuum.
    double keep_vacuum = 0.0;
    /// Events in the kept half where both emitted one photon.
    double keep_single = 0.0;
    /// Bit error rate a single-photon pair would show in the X basis.
    double phase_error = 0.0;
};

struct MonteCarloKgp {
    SiftedData data;
    KgpSummary summary;
    std::array<SessionTruth, 2> truth;
};

/**
 * Simulates one session, discloses R_k events of each Z_k^{s,s} at random,
 * picks the kept half from the rest and estimates. The summary's selection
 * rule applies; truth is reported for both states.
 */
MonteCarloKgp run_montecarlo_kgp(const KgpSetup& setup, const PipelineOptions& options, const StopRule& stop,
                                 std::uint64_t seed, const SessionOptions& session = {});

struct MonteCarloResult {
    PipelineResult result;
    std::array<MonteCarloKgp, 2> kgps;
};

MonteCarloResult run_montecarlo(const KgpSetup& bob, const KgpSetup& charlie, const PipelineOptions& options,
                                std::uint64_t pulses, std::uint64_t seed, const SessionOptions& session = {});

}  // namespace mdiqds
