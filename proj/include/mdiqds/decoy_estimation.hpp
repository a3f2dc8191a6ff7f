#pragma once

// Finite-key decoy-state estimation: Chernoff intervals on the observed set
// sizes, linear-program bounds on the photon-number populations, Serfling
// scaling to the kept half of the code string and the phase-error bound.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdiqds/linear_program.hpp"
#include "mdiqds/photon_channel.hpp"

namespace mdiqds {

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure probabilities of every estimation step.
struct ErrorBudget {
    double eps_PE = 1e-5;
    /// Smoothing parameter of the min-entropy; split evenly into eps' and eps^.
    double eps_k = 1e-10;
    /// Extra smoothing terms of the chain-rule composition of eps_k.
    double eps_k_smooth = 0.0;
    /// Per set: lower deviation (eps_ab), upper deviation (eps^_ab), and the
    /// parameter of mu_kL (eps~_ab).
    double eps_ab = 1e-10;
    double eps_hat_ab = 1e-10;
    double eps_tilde_ab = 1e-10;
    /// Deviations of the vacuum / single-photon objectives.
    double eps_0 = 1e-10;
    double eps_1 = 1e-10;
    /// Serfling steps to the kept half.
    double eps_k0_serfling = 1e-10;
    double eps_k1_serfling = 1e-10;
    /// Sampling term of the phase-error bound.
    double eps_ke_sampling = 1e-10;
    /// Markov parameter of the forging bound.
    double g = 1e-5;

    /// Every eps (not eps_PE or g) set to `eps`.
    static ErrorBudget uniform(double eps, double eps_pe = 1e-5, double g = 1e-5);

    void validate() const;

    [[nodiscard]] double eps_k_prime() const { return eps_k / 2.0; }
    [[nodiscard]] double eps_k_hat() const { return eps_k / 2.0; }
    /// eps' + eps^, the form used in the min-entropy bound.
    [[nodiscard]] double eps_k_main() const { return eps_k_prime() + eps_k_hat(); }
    /// eps' + 2 eps'' + (eps^ + 2 eps^' + eps^''), extra terms from eps_k_smooth.
    [[nodiscard]] double eps_k_chain() const { return eps_k_main() + 5.0 * eps_k_smooth; }
    /// gamma_ab = eps~_ab + eps_ab + eps^_ab.
    [[nodiscard]] double gamma_ab() const { return eps_tilde_ab + eps_ab + eps_hat_ab; }
    [[nodiscard]] double eps_k0_prime() const { return eps_0 + 9.0 * gamma_ab(); }
    [[nodiscard]] double eps_k0() const { return eps_k0_prime() + eps_k0_serfling; }
    [[nodiscard]] double eps_k1_prime() const { return eps_1 + 9.0 * gamma_ab(); }
    [[nodiscard]] double eps_k1() const { return eps_k1_prime() + eps_k1_serfling; }
    /// n-bar and e-bar each rest on nine X-basis intervals.
    [[nodiscard]] double eps_ke_prime() const { return 9.0 * gamma_ab(); }
    [[nodiscard]] double eps_ke_double_prime() const { return 9.0 * gamma_ab() + eps_ab; }
    [[nodiscard]] double eps_ke() const { return eps_ke_prime() + eps_ke_double_prime() + eps_ke_sampling; }
};

/// delta in [-lower, upper] around the observed size.
struct ChernoffInterval {
    double lower = 0.0;  // Delta  = g(|Z|, eps^4 / 16)
    double upper = 0.0;  // Delta^ = g(|Z|, eps^^(3/2))
};

ChernoffInterval chernoff_interval(double observed, const ErrorBudget& budget);

/// mu_kL = |Z_ab| - sqrt(sum|Z| / 2 * ln(1/eps~)).
double validity_mu(double set_size, double total_size, const ErrorBudget& budget);

/// Both conditions on mu_kL; false for mu <= 0.
bool check_validity(double mu, const ErrorBudget& budget);

/// True when only the first condition, the one with the exp((3/(4 sqrt2))^2)
/// constant, rejects this mu.
bool validity_bracket_binding(double mu, const ErrorBudget& budget);

/// Bayes posterior P(a, b | n, m) under truncated Poisson emission, shared by
/// both bases.
struct PhotonPopulation {
    static constexpr int kSize = kPhotonCutoff + 1;
    using Table = std::array<std::array<std::array<std::array<double, kSize>, kSize>, 3>, 3>;  // [a][b][n][m]

    Table posterior{};

    PhotonPopulation(const DecoySourceConfig& alice, const DecoySourceConfig& peer);

    [[nodiscard]] double p(Intensity a, Intensity b, int n, int m) const {
        return posterior[index(a)][index(b)][n][m];
    }
};

/// Solution of one population program. `s` holds S_nm at index n * kSize + m.
struct PopulationBound {
    double value = 0.0;
    std::vector<double> s;
    /// [a][b]: whether the set passed the validity check and constrained the LP.
    std::array<std::array<bool, 3>, 3> sets_used{};
    bool bracket_binding = false;
};

/**
 * Optimizes sum_nm weight[n*kSize+m] * S_nm over S >= 0 with, for every (a,b)
 * whose size passes the validity check,
 *   |Z_ab| - Delta^_ab <= sum_nm p(a,b|nm) S_nm <= |Z_ab| + Delta_ab.
 * Throws EstimationError if the constraints are inconsistent. A maximization
 * that no set bounds returns +infinity.
 */
PopulationBound population_bound(const SetCounts::Grid& sizes, const PhotonPopulation& pop,
                                 const ErrorBudget& budget, const std::vector<double>& weights, bool maximize);

/**
 * Upper bound on the errors among X-basis single-photon-pair events: max T_11
 * over S, T >= 0 with the X size and error intervals, T <= S elementwise, and
 * vacuum-emission errors at least half their events less a Hoeffding margin.
 */
double phase_error_count_bound(const SetCounts& counts, const PhotonPopulation& pop, const ErrorBudget& budget);

/// min sum_n p(s,s|n0) S_n0 minus g(., eps_0), clamped at 0.
double lower_bound_m_k0(const SetCounts& counts, const PhotonPopulation& pop, const ErrorBudget& budget);
double lower_bound_m_k0(const SiftedData& sifted, BellState k, const PhotonPopulation& pop,
                        const ErrorBudget& budget);

/// min p(s,s|11) S_11 minus g(., eps_1), clamped at 0.
double lower_bound_m_k1(const SetCounts& counts, const PhotonPopulation& pop, const ErrorBudget& budget);
double lower_bound_m_k1(const SiftedData& sifted, BellState k, const PhotonPopulation& pop,
                        const ErrorBudget& budget);

/// n-bar: lower bound on X-basis single-photon-pair events; e-bar: upper
/// bound on the errors among them.
struct XBasisAux {
    double n_bar = 0.0;
    double e_bar = 0.0;
};

XBasisAux x_basis_bounds(const SetCounts& counts, const PhotonPopulation& pop, const ErrorBudget& budget);

/// max{floor(n_half * m / |Z| - n_half * Lambda(|Z|, n_half, eps)), 0}.
double serfling_scale(double m_bound, double z_size, double n_half, double eps);

/**
 * ceil(n_k1 e-bar / n-bar + (n_k1 + n-bar) Upsilon(n_k1, n-bar, eps''')) / n_k1,
 * clamped to [0, 1/2] where h is increasing. An unbounded e-bar gives 1/2.
 * Throws std::domain_error for n_k1 <= 0 or n-bar < 1.
 */
double upper_bound_e_k1(double n_k1, const XBasisAux& aux, const ErrorBudget& budget);

struct ErrorSample {
    double e_obs = 0.0;
    std::uint64_t mismatches = 0;
    /// Positions (into the input strings) that were not disclosed, ascending.
    std::vector<std::size_t> code_indices;
};

/// Discloses `r_k` positions chosen uniformly without replacement and
/// reports their mismatch fraction.
ErrorSample observed_error_rate(const std::vector<std::uint8_t>& alice_bits, const std::vector<std::uint8_t>& peer_bits,
                                std::size_t r_k, Rng& rng);

/// Same, on the Z_k^{s,s} events of a session; code_indices index `events`.
ErrorSample observed_error_rate(const SiftedData& sifted, BellState k, std::size_t r_k, Rng& rng);

/// E_obs + mu(n_half, R_k, eps_PE).
double true_error_upper_bound(double e_obs, double n_half, double r_k, double eps_pe);

struct YieldEstimate {
    double m_k0 = 0.0;
    double m_k1 = 0.0;
    double n_k0 = 0.0;
    double n_k1 = 0.0;
    double e_k1 = 0.5;
    XBasisAux x_basis_aux;
    ErrorBudget budget;
    double z_signal_size = 0.0;
    double n_half = 0.0;
    std::array<std::array<bool, 3>, 3> z_sets_used{};
    bool bracket_binding = false;
    /// False when the code string must be discarded (n_k1 = 0 or n-bar < 1).
    bool usable = false;
    std::string discard_reason;
};

/// Full chain for one Bell state: m_k0, m_k1, n_k0, n_k1, the X-basis
/// bounds and e_k1. `n_half` is the size of the kept half.
YieldEstimate estimate_yields(const SetCounts& counts, const PhotonPopulation& pop, double n_half,
                              const ErrorBudget& budget);

}  // namespace mdiqds
