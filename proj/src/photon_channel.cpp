#include "mdiqds/photon_channel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <shared_mutex>
#include <string>
#include <thread>
#include <tuple>

namespace mdiqds {

std::string_view to_string(Intensity i) {
    switch (i) {
        case Intensity::signal: return "s";
        case Intensity::decoy1: return "d1";
        case Intensity::decoy2: return "d2";
    }
    return "?";
}

std::string_view to_string(Basis b) { return b == Basis::Z ? "Z" : "X"; }

std::string_view to_string(BellState k) { return k == BellState::psi_minus ? "psi_minus" : "psi_plus"; }

std::string_view to_string(BsmResult r) {
    switch (r) {
        case BsmResult::psi_minus: return "psi_minus";
        case BsmResult::psi_plus: return "psi_plus";
        case BsmResult::failure: return "failure";
    }
    return "?";
}

namespace {

void check(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

bool normalized(double sum) { return std::abs(sum - 1.0) < 1e-9; }

}  // namespace

void DecoySourceConfig::validate() const {
    for (std::size_t i = 0; i < 3; ++i) {
        check(std::isfinite(intensities[i]) && intensities[i] >= 0.0, "intensities: must be finite and >= 0");
        check(in_unit(intensity_probs[i]), "intensity_probs: each must lie in [0,1]");
    }
    check(intensities[0] > intensities[1] && intensities[1] > intensities[2],
          "intensities: must be strictly decreasing signal > decoy1 > decoy2");
    check(normalized(intensity_probs[0] + intensity_probs[1] + intensity_probs[2]),
          "intensity_probs: must sum to 1");
    check(in_unit(basis_probs[0]) && in_unit(basis_probs[1]), "basis_probs: each must lie in [0,1]");
    check(normalized(basis_probs[0] + basis_probs[1]), "basis_probs: must sum to 1");
    check(pulse_rate > 0.0 && std::isfinite(pulse_rate), "pulse_rate: must be positive");
}

void SystemProfile::validate() const {
    check(distance_km >= 0.0 && std::isfinite(distance_km), "distance_km: must be >= 0");
    check(loss_db_per_km >= 0.0 && std::isfinite(loss_db_per_km), "loss_db_per_km: must be >= 0");
    check(in_unit(detector_efficiency), "detector_efficiency: must lie in [0,1]");
    check(in_unit(dark_count_prob), "dark_count_prob: must lie in [0,1]");
    check(in_unit(misalignment), "misalignment: must lie in [0,1]");
    check(in_unit(alice_link_share), "alice_link_share: must lie in [0,1]");
}

double SystemProfile::link_transmittance(Party party) const {
    const double share = party == Party::alice ? alice_link_share : 1.0 - alice_link_share;
    return std::pow(10.0, -loss_db_per_km * distance_km * share / 10.0);
}

BsmResult classify_clicks(std::uint8_t pattern) {
    switch (pattern) {
        case kD1H | kD2V:
        case kD1V | kD2H: return BsmResult::psi_minus;
        case kD1H | kD1V:
        case kD2H | kD2V: return BsmResult::psi_plus;
        default: return BsmResult::failure;
    }
}

std::array<double, kPhotonCutoff + 1> truncated_poisson(double mean) {
    std::array<double, kPhotonCutoff + 1> p{};
    double term = std::exp(-mean);
    double acc = 0.0;
    for (int n = 0; n < kPhotonCutoff; ++n) {
        p[n] = term;
        acc += term;
        term *= mean / (n + 1);
    }
    p[kPhotonCutoff] = std::max(0.0, 1.0 - acc);
    return p;
}

namespace {

/// Inverse-CDF tables for one transmitter.
class SourceSampler {
public:
    explicit SourceSampler(const DecoySourceConfig& config) : config_(config) {
        for (int i = 0; i < 3; ++i) {
            const auto p = truncated_poisson(config.intensities[i]);
            double acc = 0.0;
            for (int n = 0; n <= kPhotonCutoff; ++n) {
                acc += p[n];
                photon_cdf_[i][n] = acc;
            }
            photon_cdf_[i][kPhotonCutoff] = 1.0;
        }
    }

    PulseRecord sample(Party party, Rng& rng) const {
        PulseRecord pulse;
        pulse.party = party;
        // one draw: 32 bits pick the intensity, 31 the basis, 1 the bit
        const std::uint64_t r = rng();
        const double u = static_cast<double>(r >> 32) * 0x1.0p-32;
        if (u < config_.intensity_probs[0]) {
            pulse.intensity = Intensity::signal;
        } else if (u < config_.intensity_probs[0] + config_.intensity_probs[1]) {
            pulse.intensity = Intensity::decoy1;
        } else {
            pulse.intensity = Intensity::decoy2;
        }
        const double w = static_cast<double>((r >> 1) & 0x7fffffffu) * 0x1.0p-31;
        pulse.basis = w < config_.basis_probs[0] ? Basis::Z : Basis::X;
        pulse.bit = static_cast<std::uint8_t>(r & 1u);
        const auto& cdf = photon_cdf_[index(pulse.intensity)];
        const double v = uniform01(rng);
        int n = 0;
        while (n < kPhotonCutoff && v >= cdf[n]) ++n;
        pulse.photon_number = static_cast<std::uint8_t>(n);
        return pulse;
    }

private:
    DecoySourceConfig config_;
    std::array<std::array<double, kPhotonCutoff + 1>, 3> photon_cdf_{};
};

PulseRecord transmit_with(const PulseRecord& pulse, double transmittance, double flip_probability, Rng& rng) {
    PulseRecord out = pulse;
    if (pulse.total_photons() == 0) return out;
    int kept = 0;
    int flipped = 0;
    for (int i = 0; i < pulse.total_photons(); ++i) {
        if (transmittance < 1.0 && !bernoulli(rng, transmittance)) continue;
        const bool orthogonal = i >= pulse.photon_number;
        const bool flip = flip_probability > 0.0 && bernoulli(rng, flip_probability);
        if (orthogonal != flip) {
            ++flipped;
        } else {
            ++kept;
        }
    }
    out.photon_number = static_cast<std::uint8_t>(kept);
    out.flipped_photons = static_cast<std::uint8_t>(flipped);
    return out;
}

}  // namespace

PulseRecord sample_pulse(const DecoySourceConfig& config, Party party, Rng& rng) {
    return SourceSampler(config).sample(party, rng);
}

PulseRecord transmit(const PulseRecord& pulse, const SystemProfile& profile, Rng& rng) {
    return transmit_with(pulse, profile.link_transmittance(pulse.party), profile.link_flip_probability(), rng);
}

// ---------------------------------------------------------------------------
// Interferometer

namespace {

using PolarizationVector = std::array<double, 2>;  // (H, V) amplitudes

PolarizationVector polarization(Basis basis, int state) {
    if (basis == Basis::Z) return state == 0 ? PolarizationVector{1.0, 0.0} : PolarizationVector{0.0, 1.0};
    const double r = 1.0 / std::sqrt(2.0);
    return state == 0 ? PolarizationVector{r, r} : PolarizationVector{r, -r};
}

// Five bits per mode; at most 2 * kPhotonCutoff photons in total.
constexpr int kModeBits = 5;

std::uint32_t bump(std::uint32_t key, int mode) { return key + (1u << (kModeBits * mode)); }

ModeOccupation unpack(std::uint32_t key) {
    ModeOccupation occ{};
    for (int j = 0; j < 4; ++j) occ[j] = static_cast<std::uint8_t>((key >> (kModeBits * j)) & 31u);
    return occ;
}

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

FockOutput compute_output(Basis alice_basis, std::array<int, 2> alice, Basis peer_basis, std::array<int, 2> peer) {
    // Output creation-operator coefficients over (D1H, D1V, D2H, D2V). The
    // beam splitter sends Alice's port to (c + d)/sqrt2 and the peer's to
    // (c - d)/sqrt2; each PBS then splits c and d into H and V.
    struct InputMode {
        std::array<double, 4> out;
        int count;
    };
    std::vector<InputMode> inputs;
    const double r = 1.0 / std::sqrt(2.0);
    for (int s = 0; s < 2; ++s) {
        const auto pa = polarization(alice_basis, s);
        inputs.push_back({{r * pa[0], r * pa[1], r * pa[0], r * pa[1]}, alice[s]});
        const auto pb = polarization(peer_basis, s);
        inputs.push_back({{r * pb[0], r * pb[1], -r * pb[0], -r * pb[1]}, peer[s]});
    }

    std::map<std::uint32_t, double> poly{{0u, 1.0}};
    double input_norm = 1.0;
    for (const auto& mode : inputs) {
        input_norm *= factorial(mode.count);
        for (int c = 0; c < mode.count; ++c) {
            std::map<std::uint32_t, double> next;
            for (const auto& [key, coeff] : poly) {
                for (int j = 0; j < 4; ++j) {
                    if (mode.out[j] != 0.0) next[bump(key, j)] += coeff * mode.out[j];
                }
            }
            poly = std::move(next);
        }
    }

    FockOutput result;
    double total = 0.0;
    for (const auto& [key, coeff] : poly) {
        const ModeOccupation occ = unpack(key);
        double norm = 1.0;
        for (auto k : occ) norm *= factorial(k);
        const double prob = coeff * coeff * norm / input_norm;
        if (prob < 1e-20) continue;
        result.patterns.push_back(occ);
        result.probabilities.push_back(prob);
        total += prob;
    }
    double acc = 0.0;
    for (double& p : result.probabilities) {
        p /= total;
        acc += p;
        result.cumulative.push_back(acc);
    }
    result.cumulative.back() = 1.0;
    return result;
}

}  // namespace

const FockOutput& interferometer_output(Basis alice_basis, std::array<int, 2> alice, Basis peer_basis,
                                        std::array<int, 2> peer) {
    for (int c : {alice[0], alice[1], peer[0], peer[1]}) {
        if (c < 0 || c > kPhotonCutoff) throw std::invalid_argument("interferometer_output: photon count out of range");
    }
    using Key = std::tuple<int, int, int, int, int, int>;
    static std::shared_mutex mutex;
    static std::map<Key, std::unique_ptr<FockOutput>> cache;

    const Key key{index(alice_basis), alice[0], alice[1], index(peer_basis), peer[0], peer[1]};
    {
        std::shared_lock lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return *it->second;
    }
    auto computed = std::make_unique<FockOutput>(compute_output(alice_basis, alice, peer_basis, peer));
    std::unique_lock lock(mutex);
    auto [it, inserted] = cache.try_emplace(key, std::move(computed));
    return *it->second;
}

std::array<double, 16> click_distribution(const ModeOccupation& occupation, double efficiency, double dark_count) {
    std::array<double, 4> p_click{};
    for (int j = 0; j < 4; ++j) {
        p_click[j] = 1.0 - std::pow(1.0 - efficiency, occupation[j]) * (1.0 - dark_count);
    }
    std::array<double, 16> dist{};
    for (int mask = 0; mask < 16; ++mask) {
        double p = 1.0;
        for (int j = 0; j < 4; ++j) p *= (mask >> j) & 1 ? p_click[j] : 1.0 - p_click[j];
        dist[mask] = p;
    }
    return dist;
}

BsmRelay::BsmRelay(const SystemProfile& profile) : efficiency_(profile.detector_efficiency) {
    const double y0 = profile.dark_count_prob;
    any_dark_ = 1.0 - std::pow(1.0 - y0, 4);
    double acc = 0.0;
    for (int mask = 1; mask < 16; ++mask) {
        const int fired = std::popcount(static_cast<unsigned>(mask));
        acc += std::pow(y0, fired) * std::pow(1.0 - y0, 4 - fired);
        dark_cumulative_[mask] = acc;
    }
    if (acc > 0.0) {
        for (int mask = 1; mask < 16; ++mask) dark_cumulative_[mask] /= acc;
        dark_cumulative_[15] = 1.0;
    }
}

BsmOutcome BsmRelay::measure(const PulseRecord& alice, const PulseRecord& peer, Rng& rng) const {
    std::uint8_t pattern = 0;
    if (alice.total_photons() + peer.total_photons() > 0) {
        const std::array<int, 2> a = alice.bit == 0 ? std::array<int, 2>{alice.photon_number, alice.flipped_photons}
                                                    : std::array<int, 2>{alice.flipped_photons, alice.photon_number};
        const std::array<int, 2> b = peer.bit == 0 ? std::array<int, 2>{peer.photon_number, peer.flipped_photons}
                                                   : std::array<int, 2>{peer.flipped_photons, peer.photon_number};
        const FockOutput& out = interferometer_output(alice.basis, a, peer.basis, b);
        std::size_t which = 0;
        if (out.patterns.size() > 1) {
            const double u = uniform01(rng);
            which = static_cast<std::size_t>(std::upper_bound(out.cumulative.begin(), out.cumulative.end(), u) -
                                             out.cumulative.begin());
            which = std::min(which, out.patterns.size() - 1);
        }
        const ModeOccupation& occ = out.patterns[which];
        for (int j = 0; j < 4; ++j) {
            if (occ[j] == 0) continue;
            const double p_detect = 1.0 - std::pow(1.0 - efficiency_, occ[j]);
            if (bernoulli(rng, p_detect)) pattern |= static_cast<std::uint8_t>(1u << j);
        }
    }
    if (any_dark_ > 0.0) {
        const double u = uniform01(rng);
        if (u < any_dark_) {
            // u / any_dark_ is again uniform on [0,1)
            const double v = u / any_dark_;
            int mask = 1;
            while (mask < 15 && v >= dark_cumulative_[mask]) ++mask;
            pattern |= static_cast<std::uint8_t>(mask);
        }
    }
    return {classify_clicks(pattern), pattern};
}

BsmOutcome relay_bsm(const PulseRecord& alice, const PulseRecord& peer, const SystemProfile& profile, Rng& rng) {
    return BsmRelay(profile).measure(alice, peer, rng);
}

std::uint8_t sift_bit(Basis basis, BellState bell, std::uint8_t peer_bit) {
    const bool flip = basis == Basis::Z || bell == BellState::psi_minus;
    return flip ? static_cast<std::uint8_t>(peer_bit ^ 1u) : peer_bit;
}

// ---------------------------------------------------------------------------
// Sifted data

void SiftedData::add(const SiftedEvent& e) {
    const int basis = index(e.basis);
    const int k = index(e.bell);
    const int a = index(e.alice_intensity);
    const int b = index(e.peer_intensity);
    ++set_size[basis][k][a][b];
    if (e.is_error()) ++set_errors[basis][k][a][b];
    events.push_back(e);
}

void SiftedData::merge(const SiftedData& other) {
    pulses_sent += other.pulses_sent;
    events.insert(events.end(), other.events.begin(), other.events.end());
    for (int basis = 0; basis < 2; ++basis)
        for (int k = 0; k < 2; ++k)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    set_size[basis][k][a][b] += other.set_size[basis][k][a][b];
                    set_errors[basis][k][a][b] += other.set_errors[basis][k][a][b];
                }
}

SetCounts SiftedData::counts(BellState k) const {
    SetCounts c;
    const int kk = index(k);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            c.z_size[a][b] = static_cast<double>(set_size[0][kk][a][b]);
            c.z_errors[a][b] = static_cast<double>(set_errors[0][kk][a][b]);
            c.x_size[a][b] = static_cast<double>(set_size[1][kk][a][b]);
            c.x_errors[a][b] = static_cast<double>(set_errors[1][kk][a][b]);
        }
    return c;
}

std::vector<std::size_t> SiftedData::signal_z_indices(BellState k) const {
    std::vector<std::size_t> out;
    out.reserve(size(Basis::Z, k, Intensity::signal, Intensity::signal));
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.basis == Basis::Z && e.bell == k && e.alice_intensity == Intensity::signal &&
            e.peer_intensity == Intensity::signal) {
            out.push_back(i);
        }
    }
    return out;
}

void SiftedData::write_csv(std::ostream& out) const {
    out << "k,a,b,basis,alice_bit,bob_bit,alice_photons,bob_photons\n";
    for (const auto& e : events) {
        out << to_string(e.bell) << ',' << to_string(e.alice_intensity) << ',' << to_string(e.peer_intensity) << ','
            << to_string(e.basis) << ',' << int(e.alice_bit) << ',' << int(e.peer_bit) << ',' << int(e.alice_photons)
            << ',' << int(e.peer_photons) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Sessions

StopRule StopRule::budget(std::uint64_t pulses) {
    StopRule rule;
    rule.max_pulses = pulses;
    return rule;
}

StopRule StopRule::with_minima(std::uint64_t max_pulses, std::uint64_t z_min, std::uint64_t x_min) {
    StopRule rule = budget(max_pulses);
    for (auto& k : rule.min_z)
        for (auto& row : k) row.fill(z_min);
    for (auto& k : rule.min_x)
        for (auto& row : k) row.fill(x_min);
    return rule;
}

bool StopRule::has_minima() const {
    for (int k = 0; k < 2; ++k)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                if (min_z[k][a][b] > 0 || min_x[k][a][b] > 0) return true;
    return false;
}

bool StopRule::minima_met(const SiftedData& data) const {
    for (int k = 0; k < 2; ++k)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                if (data.set_size[0][k][a][b] < min_z[k][a][b]) return false;
                if (data.set_size[1][k][a][b] < min_x[k][a][b]) return false;
            }
    return true;
}

namespace {

struct BatchContext {
    SourceSampler alice;
    SourceSampler peer;
    BsmRelay relay;
    double alice_transmittance;
    double peer_transmittance;
    double flip_probability;
};

SiftedData run_batch(const BatchContext& ctx, std::uint64_t seed, std::uint64_t batch, std::uint64_t pulses) {
    Rng rng = make_stream(seed, batch);
    SiftedData data;
    data.pulses_sent = pulses;
    for (std::uint64_t i = 0; i < pulses; ++i) {
        const PulseRecord a = ctx.alice.sample(Party::alice, rng);
        const PulseRecord b = ctx.peer.sample(Party::peer, rng);
        const PulseRecord ta = transmit_with(a, ctx.alice_transmittance, ctx.flip_probability, rng);
        const PulseRecord tb = transmit_with(b, ctx.peer_transmittance, ctx.flip_probability, rng);
        const BsmOutcome outcome = ctx.relay.measure(ta, tb, rng);
        if (outcome.result == BsmResult::failure || a.basis != b.basis) continue;
        const auto k = static_cast<BellState>(outcome.result);
        data.add({k, a.intensity, b.intensity, a.basis, a.bit, sift_bit(a.basis, k, b.bit), a.photon_number,
                  b.photon_number});
    }
    return data;
}

}  // namespace

SiftedData run_kgp_session(const DecoySourceConfig& alice, const DecoySourceConfig& peer,
                           const SystemProfile& profile, const StopRule& stop, std::uint64_t seed,
                           const SessionOptions& options) {
    alice.validate();
    peer.validate();
    profile.validate();
    if (stop.max_pulses == 0) throw std::invalid_argument("run_kgp_session: max_pulses must be positive");
    if (options.batch_size == 0) throw std::invalid_argument("run_kgp_session: batch_size must be positive");

    const BatchContext ctx{SourceSampler(alice),
                           SourceSampler(peer),
                           BsmRelay(profile),
                           profile.link_transmittance(Party::alice),
                           profile.link_transmittance(Party::peer),
                           profile.link_flip_probability()};
    unsigned workers = options.workers ? options.workers : std::thread::hardware_concurrency();
    workers = std::max(1u, workers);

    const std::uint64_t batches = (stop.max_pulses + options.batch_size - 1) / options.batch_size;
    auto batch_pulses = [&](std::uint64_t b) {
        return std::min(options.batch_size, stop.max_pulses - b * options.batch_size);
    };

    SiftedData result;
    std::uint64_t next = 0;
    bool done = false;
    while (next < batches && !done) {
        const auto round = static_cast<std::size_t>(std::min<std::uint64_t>(workers, batches - next));
        std::vector<SiftedData> parts(round);
        if (round == 1) {
            parts[0] = run_batch(ctx, seed, next, batch_pulses(next));
        } else {
            std::vector<std::thread> threads;
            for (std::size_t i = 0; i < round; ++i) {
                threads.emplace_back([&, i] { parts[i] = run_batch(ctx, seed, next + i, batch_pulses(next + i)); });
            }
            for (auto& t : threads) t.join();
        }
        for (auto& part : parts) {
            result.merge(part);
            if (stop.has_minima() && stop.minima_met(result)) {
                done = true;
                break;
            }
        }
        next += round;
    }
    if (stop.has_minima() && !stop.minima_met(result)) {
        throw BudgetExhausted("run_kgp_session: pulse budget of " + std::to_string(stop.max_pulses) +
                              " exhausted before per-set minima were reached");
    }
    return result;
}

// ---------------------------------------------------------------------------
// Closed-form rates

namespace {

double binomial_pmf(int n, int k, double p) {
    if (k < 0 || k > n) return 0.0;
    if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return k == n ? 1.0 : 0.0;
    const double log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return std::exp(log_c + k * std::log(p) + (n - k) * std::log1p(-p));
}

// Joint link outcomes below this probability are dropped from the closed form.
constexpr double kNegligibleLinkWeight = 1e-18;

// (survivors in prepared polarization, survivors flipped) -> probability
std::vector<std::tuple<int, int, double>> link_states(int photons, double transmittance, double flip_probability) {
    std::vector<std::tuple<int, int, double>> states;
    for (int s = 0; s <= photons; ++s) {
        const double ps = binomial_pmf(photons, s, transmittance);
        if (ps == 0.0) continue;
        for (int f = 0; f <= s; ++f) {
            const double pf = binomial_pmf(s, f, flip_probability);
            if (pf == 0.0) continue;
            states.emplace_back(s - f, f, ps * pf);
        }
    }
    return states;
}

}  // namespace

PairYield photon_pair_yield(int alice_photons, int peer_photons, Basis basis, const SystemProfile& profile) {
    if (alice_photons < 0 || alice_photons > kPhotonCutoff || peer_photons < 0 || peer_photons > kPhotonCutoff) {
        throw std::invalid_argument("photon_pair_yield: photon number out of range");
    }
    const auto alice_states =
        link_states(alice_photons, profile.link_transmittance(Party::alice), profile.link_flip_probability());
    const auto peer_states = link_states(peer_photons, profile.link_transmittance(Party::peer), profile.link_flip_probability());

    // no-click probability of one detector holding n photons
    std::array<double, 2 * kPhotonCutoff + 1> silent{};
    for (int n = 0; n <= 2 * kPhotonCutoff; ++n) {
        silent[n] = std::pow(1.0 - profile.detector_efficiency, n) * (1.0 - profile.dark_count_prob);
    }

    PairYield result;
    for (int x = 0; x < 2; ++x) {
        for (int y = 0; y < 2; ++y) {
            for (const auto& [ak, af, pa] : alice_states) {
                const std::array<int, 2> a = x == 0 ? std::array<int, 2>{ak, af} : std::array<int, 2>{af, ak};
                for (const auto& [bk, bf, pb] : peer_states) {
                    if (pa * pb < kNegligibleLinkWeight) continue;
                    const std::array<int, 2> b = y == 0 ? std::array<int, 2>{bk, bf} : std::array<int, 2>{bf, bk};
                    const FockOutput& out = interferometer_output(basis, a, basis, b);
                    std::array<double, 2> success{};
                    for (std::size_t i = 0; i < out.patterns.size(); ++i) {
                        const ModeOccupation& occ = out.patterns[i];
                        const std::array<double, 4> q{silent[occ[0]], silent[occ[1]], silent[occ[2]], silent[occ[3]]};
                        // exactly the two detectors in the pair fire
                        const auto pair = [&q](int i1, int i2, int o1, int o2) {
                            return (1.0 - q[i1]) * (1.0 - q[i2]) * q[o1] * q[o2];
                        };
                        success[0] += out.probabilities[i] * (pair(0, 3, 1, 2) + pair(1, 2, 0, 3));
                        success[1] += out.probabilities[i] * (pair(0, 1, 2, 3) + pair(2, 3, 0, 1));
                    }
                    for (BellState k : kBellStates) {
                        const double w = 0.25 * pa * pb * success[index(k)];
                        result.yield[index(k)] += w;
                        if (sift_bit(basis, k, static_cast<std::uint8_t>(y)) != x) result.error[index(k)] += w;
                    }
                }
            }
        }
    }
    return result;
}

double ExpectedRates::expected_size(Basis basis, BellState k, Intensity a, Intensity b, double pulses) const {
    return pulses * selection[index(basis)][index(a)][index(b)] * at(basis, a, b).gain[index(k)];
}

double ExpectedRates::expected_errors(Basis basis, BellState k, Intensity a, Intensity b, double pulses) const {
    return expected_size(basis, k, a, b, pulses) * at(basis, a, b).error_rate[index(k)];
}

SetCounts ExpectedRates::expected_counts(BellState k, double pulses) const {
    SetCounts c;
    for (Intensity a : kIntensities)
        for (Intensity b : kIntensities) {
            c.z_size[index(a)][index(b)] = expected_size(Basis::Z, k, a, b, pulses);
            c.z_errors[index(a)][index(b)] = expected_errors(Basis::Z, k, a, b, pulses);
            c.x_size[index(a)][index(b)] = expected_size(Basis::X, k, a, b, pulses);
            c.x_errors[index(a)][index(b)] = expected_errors(Basis::X, k, a, b, pulses);
        }
    return c;
}

ExpectedRates expected_rates(const DecoySourceConfig& alice, const DecoySourceConfig& peer,
                             const SystemProfile& profile) {
    alice.validate();
    peer.validate();
    profile.validate();

    // Photon-number pairs below this source weight shift any gain by less
    // than 1e-9 relative.
    constexpr double kNegligible = 1e-14;

    std::array<std::array<double, kPhotonCutoff + 1>, 3> pa{}, pb{};
    for (int i = 0; i < 3; ++i) {
        pa[i] = truncated_poisson(alice.intensities[i]);
        pb[i] = truncated_poisson(peer.intensities[i]);
    }

    ExpectedRates rates;
    std::map<std::tuple<int, int, int>, PairYield> yields;
    for (Basis basis : kBases) {
        for (Intensity a : kIntensities) {
            for (Intensity b : kIntensities) {
                rates.selection[index(basis)][index(a)][index(b)] =
                    alice.prob(a) * peer.prob(b) * alice.prob(basis) * peer.prob(basis);
                std::array<double, 2> gain{}, errors{};
                for (int n = 0; n <= kPhotonCutoff; ++n) {
                    for (int m = 0; m <= kPhotonCutoff; ++m) {
                        const double w = pa[index(a)][n] * pb[index(b)][m];
                        if (w < kNegligible) continue;
                        auto key = std::make_tuple(index(basis), n, m);
                        auto it = yields.find(key);
                        if (it == yields.end()) it = yields.emplace(key, photon_pair_yield(n, m, basis, profile)).first;
                        for (int k = 0; k < 2; ++k) {
                            gain[k] += w * it->second.yield[k];
                            errors[k] += w * it->second.error[k];
                        }
                    }
                }
                auto& entry = rates.table[index(basis)][index(a)][index(b)];
                for (int k = 0; k < 2; ++k) {
                    entry.gain[k] = gain[k];
                    entry.error_rate[k] = gain[k] > 0.0 ? errors[k] / gain[k] : 0.0;
                }
            }
        }
    }
    return rates;
}

}  // namespace mdiqds
