#pragma once

// Photon-number-level model of the key generation phase: decoy-state
// sources, lossy links, the linear-optics Bell-state relay and sifting.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "mdiqds/rng.hpp"

namespace mdiqds {

/// Photon numbers above this are folded into the top bucket.
inline constexpr int kPhotonCutoff = 10;
inline constexpr int kIntensityCount = 3;
inline constexpr int kBellStateCount = 2;

enum class Intensity : std::uint8_t { signal = 0, decoy1 = 1, decoy2 = 2 };
enum class Basis : std::uint8_t { Z = 0, X = 1 };
enum class Party : std::uint8_t { alice = 0, peer = 1 };
enum class BellState : std::uint8_t { psi_minus = 0, psi_plus = 1 };
enum class BsmResult : std::uint8_t { psi_minus = 0, psi_plus = 1, failure = 2 };

inline constexpr std::array<Intensity, 3> kIntensities{Intensity::signal, Intensity::decoy1, Intensity::decoy2};
inline constexpr std::array<BellState, 2> kBellStates{BellState::psi_minus, BellState::psi_plus};
inline constexpr std::array<Basis, 2> kBases{Basis::Z, Basis::X};

std::string_view to_string(Intensity i);
std::string_view to_string(Basis b);
std::string_view to_string(BellState k);
std::string_view to_string(BsmResult r);

inline int index(Intensity i) { return static_cast<int>(i); }
inline int index(Basis b) { return static_cast<int>(b); }
inline int index(BellState k) { return static_cast<int>(k); }

/// Transmitter settings for one party.
struct DecoySourceConfig {
    /// Mean photon numbers (signal, decoy1, decoy2), strictly decreasing.
    std::array<double, 3> intensities{0.18, 0.09, 5e-4};
    std::array<double, 3> intensity_probs{0.5, 0.25, 0.25};
    /// (p_Z, p_X)
    std::array<double, 2> basis_probs{0.625, 0.375};
    /// Pulses per second.
    double pulse_rate = 1e9;

    [[nodiscard]] double intensity(Intensity i) const { return intensities[index(i)]; }
    [[nodiscard]] double prob(Intensity i) const { return intensity_probs[index(i)]; }
    [[nodiscard]] double prob(Basis b) const { return basis_probs[index(b)]; }

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Links and relay detectors. Defaults are the 50 km standard-detector setup.
struct SystemProfile {
    double distance_km = 50.0;
    double loss_db_per_km = 0.2;
    double detector_efficiency = 0.145;
    /// Dark count probability per detector per gate.
    double dark_count_prob = 6.02e-6;
    /// Overall misalignment. Each link flips a photon to the orthogonal
    /// polarization with half this probability.
    double misalignment = 0.01;
    /// Fraction of distance_km between Alice and the relay; the peer gets the rest.
    double alice_link_share = 0.5;

    void validate() const;
    /// Per-photon survival probability on one party's link to the relay.
    [[nodiscard]] double link_transmittance(Party party) const;
    [[nodiscard]] double link_flip_probability() const { return misalignment / 2.0; }
};

/// One pulse. Photons are split between the prepared polarization and the
/// orthogonal one (populated only by misalignment in the channel).
struct PulseRecord {
    Party party = Party::alice;
    Intensity intensity = Intensity::signal;
    Basis basis = Basis::Z;
    std::uint8_t bit = 0;
    std::uint8_t photon_number = 0;
    std::uint8_t flipped_photons = 0;

    [[nodiscard]] int total_photons() const { return photon_number + flipped_photons; }
};

/// Detector bit masks for BsmOutcome::click_pattern.
enum Detector : std::uint8_t { kD1H = 1, kD1V = 2, kD2H = 4, kD2V = 8 };

struct BsmOutcome {
    BsmResult result = BsmResult::failure;
    std::uint8_t click_pattern = 0;
};

/// {D1H,D2V} or {D1V,D2H} -> psi-, {D1H,D1V} or {D2H,D2V} -> psi+, else failure.
BsmResult classify_clicks(std::uint8_t pattern);

/// Poisson(mean) restricted to 0..kPhotonCutoff, tail mass on the last entry.
std::array<double, kPhotonCutoff + 1> truncated_poisson(double mean);

PulseRecord sample_pulse(const DecoySourceConfig& config, Party party, Rng& rng);

/// Loss and misalignment for one link.
PulseRecord transmit(const PulseRecord& pulse, const SystemProfile& profile, Rng& rng);

/// Occupation of the output modes (D1H, D1V, D2H, D2V).
using ModeOccupation = std::array<std::uint8_t, 4>;

/// Output photon-number distribution of the beam-splitter network for a
/// fixed input. Computed by expanding the product of output creation
/// operators; photons of both parties are indistinguishable.
struct FockOutput {
    std::vector<ModeOccupation> patterns;
    std::vector<double> probabilities;
    std::vector<double> cumulative;
};

/**
 * Memoized interferometer output. `alice` and `peer` give photon counts in
 * the two polarization states of the respective basis: index 0 is the state
 * encoding bit 0 (H or D), index 1 the state encoding bit 1 (V or A).
 * Thread-safe; returned references stay valid for the process lifetime.
 */
const FockOutput& interferometer_output(Basis alice_basis, std::array<int, 2> alice, Basis peer_basis,
                                        std::array<int, 2> peer);

/// Probability of each of the 16 click patterns for a fixed output
/// occupation, with threshold detectors of the given efficiency and dark
/// count probability.
std::array<double, 16> click_distribution(const ModeOccupation& occupation, double efficiency, double dark_count);

/// Relay with precomputed detector tables; cheap to construct.
class BsmRelay {
public:
    explicit BsmRelay(const SystemProfile& profile);
    BsmOutcome measure(const PulseRecord& alice, const PulseRecord& peer, Rng& rng) const;

private:
    double efficiency_;
    double any_dark_;
    std::array<double, 16> dark_cumulative_{};
};

BsmOutcome relay_bsm(const PulseRecord& alice, const PulseRecord& peer, const SystemProfile& profile, Rng& rng);

/// Peer's bit after the sifting flip for a reported success.
std::uint8_t sift_bit(Basis basis, BellState bell, std::uint8_t peer_bit);

/// Sifted event. Photon numbers are source values kept as ground truth for
/// validating estimators; the protocol itself never reads them.
struct SiftedEvent {
    BellState bell = BellState::psi_minus;
    Intensity alice_intensity = Intensity::signal;
    Intensity peer_intensity = Intensity::signal;
    Basis basis = Basis::Z;
    std::uint8_t alice_bit = 0;
    std::uint8_t peer_bit = 0;
    std::uint8_t alice_photons = 0;
    std::uint8_t peer_photons = 0;

    [[nodiscard]] bool is_error() const { return alice_bit != peer_bit; }
};

/// Set sizes and error counts for one Bell state, indexed [a][b].
struct SetCounts {
    using Grid = std::array<std::array<double, 3>, 3>;
    Grid z_size{};
    Grid z_errors{};
    Grid x_size{};
    Grid x_errors{};
};

struct SiftedData {
    using Tally = std::array<std::array<std::array<std::array<std::uint64_t, 3>, 3>, 2>, 2>;  // [basis][k][a][b]

    std::uint64_t pulses_sent = 0;
    std::vector<SiftedEvent> events;
    Tally set_size{};
    Tally set_errors{};

    void add(const SiftedEvent& event);
    /// Appends `other` after this; used in batch order.
    void merge(const SiftedData& other);

    [[nodiscard]] std::uint64_t size(Basis basis, BellState k, Intensity a, Intensity b) const {
        return set_size[index(basis)][index(k)][index(a)][index(b)];
    }
    [[nodiscard]] std::uint64_t errors(Basis basis, BellState k, Intensity a, Intensity b) const {
        return set_errors[index(basis)][index(k)][index(a)][index(b)];
    }
    [[nodiscard]] SetCounts counts(BellState k) const;

    /// Indices into `events` of Z_k^{s,s}, in event order.
    [[nodiscard]] std::vector<std::size_t> signal_z_indices(BellState k) const;

    /// Columns: k,a,b,basis,alice_bit,bob_bit,alice_photons,bob_photons
    void write_csv(std::ostream& out) const;
};

class BudgetExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// When a session stops: a total pulse budget, optionally with per-set
/// minimum sizes N_k^{a,b} (Z) and M_k^{a,b} (X) that must be reached first.
struct StopRule {
    using Minima = std::array<std::array<std::array<std::uint64_t, 3>, 3>, 2>;  // [k][a][b]

    std::uint64_t max_pulses = 0;
    Minima min_z{};
    Minima min_x{};

    static StopRule budget(std::uint64_t pulses);
    static StopRule with_minima(std::uint64_t max_pulses, std::uint64_t z_min, std::uint64_t x_min);

    [[nodiscard]] bool has_minima() const;
    [[nodiscard]] bool minima_met(const SiftedData& data) const;
};

struct SessionOptions {
    std::uint64_t batch_size = 1u << 20;
    /// 0 = hardware concurrency. Output does not depend on this.
    unsigned workers = 0;
};

/**
 * Runs sample -> transmit -> relay -> sift in fixed-size batches, each with
 * its own random stream derived from (seed, batch index). Batches merge in
 * index order and the stop rule is checked after each one, so the result is
 * a function of the seed alone. Throws BudgetExhausted if minima are set and
 * not reached within max_pulses.
 */
SiftedData run_kgp_session(const DecoySourceConfig& alice, const DecoySourceConfig& peer,
                           const SystemProfile& profile, const StopRule& stop, std::uint64_t seed,
                           const SessionOptions& options = {});

/// Success and error probabilities for fixed source photon numbers.
struct PairYield {
    /// P(relay reports k) per Bell state, averaged over both parties' bits.
    std::array<double, 2> yield{};
    /// P(relay reports k and sifted bits disagree).
    std::array<double, 2> error{};

    [[nodiscard]] double error_rate(BellState k) const {
        return yield[index(k)] > 0.0 ? error[index(k)] / yield[index(k)] : 0.0;
    }
};

/// Closed form over losses, misalignment flips, interference and detection
/// for `alice_photons` and `peer_photons` emitted, both in `basis`.
PairYield photon_pair_yield(int alice_photons, int peer_photons, Basis basis, const SystemProfile& profile);

/// Expected gains per intensity pair, with both parties in the same basis.
struct ExpectedRates {
    struct Entry {
        std::array<double, 2> gain{};        // P(success k | a, b, basis)
        std::array<double, 2> error_rate{};  // P(error | success k, a, b, basis)
    };
    std::array<std::array<std::array<Entry, 3>, 3>, 2> table{};  // [basis][a][b]
    /// P(a, b, both parties choose basis) for one pulse pair.
    std::array<std::array<std::array<double, 3>, 3>, 2> selection{};

    [[nodiscard]] const Entry& at(Basis basis, Intensity a, Intensity b) const {
        return table[index(basis)][index(a)][index(b)];
    }
    /// Expected |Z_k^{a,b}| (or X) after `pulses` pulse pairs.
    [[nodiscard]] double expected_size(Basis basis, BellState k, Intensity a, Intensity b, double pulses) const;
    [[nodiscard]] double expected_errors(Basis basis, BellState k, Intensity a, Intensity b, double pulses) const;
    [[nodiscard]] SetCounts expected_counts(BellState k, double pulses) const;
};

ExpectedRates expected_rates(const DecoySourceConfig& alice, const DecoySourceConfig& peer,
                             const SystemProfile& profile);

}  // namespace mdiqds
