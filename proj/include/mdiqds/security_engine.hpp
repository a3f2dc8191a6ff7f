#pragma once

// Signature security from the estimated yields: min-entropy, forging tail,
// the adversary's error floor p_E, thresholds, and the abort, repudiation
// and forging probabilities.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "mdiqds/decoy_estimation.hpp"
#include "mdiqds/entropy_math.hpp"

namespace mdiqds {

/// Raised when the error floor does not exceed the honest error bound.
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// n_k0 + n_k1 (1 - h(e_k1)) - 2 log2(2 / (eps' eps^)).
double min_entropy_bound(double n_k0, double n_k1, double e_k1, double eps_prime, double eps_hat);

/// The same without the logarithmic smoothing term.
double min_entropy_approx(double n_k0, double n_k1, double e_k1);

struct ForgingTail {
    /// Markov bound on Pr(fewer than r errors); equals g.
    double p_r_bound = 0.0;
    /// Probability that the Markov bound fails, clamped to 1.
    double p_F = 0.0;
    LogProb p_F_log2;
    /// True when the binomial sum was evaluated term by term.
    bool exact = false;
};

/**
 * p_F = (1/g) (sum_{m<=r} C(n_k/2, m) 2^{-h_min} + eps_k). The sum is exact
 * for n_k <= kExactBinomialLimit and replaced by 2^{(n_k/2) h(2r/n_k)} above.
 * Throws std::domain_error if r > n_k/2.
 */
ForgingTail forging_tail(std::uint64_t n_k, std::uint64_t r, double h_min, double eps_k, double g);

/// h^{-1}(c_k0 + c_k1 (1 - h(e_k1))) on [0, 1/2]; the argument is clamped to
/// [0, 1] and `clamped` (if given) reports whether that happened.
double solve_p_E(double c_k0, double c_k1, double e_k1, bool* clamped = nullptr);

struct Thresholds {
    double s_a = 0.0;
    double s_v = 0.0;
};

/// Splits (E_bar, p_E) into thirds. Throws InfeasibleError if E_bar >= p_E.
Thresholds choose_thresholds(double e_bar, double p_E);

/// 2 exp(-(s_v - s_a)^2 n_k / 4), unclamped.
double repudiation_bound(double s_a, double s_v, double n_k);

struct KeyLength {
    double full = 0.0;
    double asymptotic = 0.0;
};

/**
 * Finite-size key length with n_{k,i} = c_{k,i} n_k / 2 and
 * leak_EC = n_k zeta h(E_bar), and the asymptotic form
 * (n_k/2) (c_k0 + c_k1 (1 - h(e_k1)) - zeta h(E_bar)).
 */
KeyLength mdi_qkd_key_length(double n_k, double c_k0, double c_k1, double e_k1, double e_bar, double zeta,
                             const ErrorBudget& budget, double eps_cor = 1e-10, double eps_pa = 1e-10);

struct SecurityReport {
    double h_min = 0.0;
    double h_min_approx = 0.0;
    /// 2 n_{k,i} / n_k (forging context).
    double c_k0 = 0.0;
    double c_k1 = 0.0;
    /// n_{k,i} / n_k (key-rate comparison context).
    double c_k0_rate = 0.0;
    double c_k1_rate = 0.0;
    double e_k1 = 0.0;
    double p_E = 0.0;
    bool p_E_clamped = false;
    double E_obs = 0.0;
    double E_bar = 0.0;
    double s_a = 0.0;
    double s_v = 0.0;
    bool feasible = false;
    /// c_k0 + c_k1 (1 - h(e_k1)) - h(E_bar).
    double feasibility_margin = 0.0;

    double pr_honest_abort = 0.0;
    double pr_repudiation = 0.0;
    double pr_repudiation_raw = 0.0;
    double pr_forge = 0.0;
    double pr_forge_raw = 0.0;
    double p_F = 0.0;
    LogProb p_F_log2;
    double g = 0.0;

    double n_k = 0.0;
    double r_k = 0.0;
    double N_sig = 0.0;
    double pulse_rate = 0.0;
    double t_r_seconds = 0.0;

    double zeta = 1.16;
    double l_k = 0.0;
    double l_k_asymptotic = 0.0;

    ErrorBudget budget;
    std::string selected_bell_state;
    std::string note;

    [[nodiscard]] double max_failure() const;
};

/**
 * Fills the abort, repudiation and forging probabilities into a report whose
 * thresholds, n_k, h_min and c values are set:
 *   abort = 2 eps_PE, repudiation = 2 exp(-(s_v - s_a)^2 n_k / 4),
 *   forge = p_F + g + eps_PE + eps_k0 + eps_k1 + eps_ke,
 * with r = ceil(s_v n_k / 2) - 1 in p_F. Probabilities are clamped to 1;
 * the raw values are kept alongside.
 */
SecurityReport abort_repudiation_forge_bounds(SecurityReport report, const ErrorBudget& budget);

/// Checks E_bar < s_a < s_v < p_E and that every probability lies in [0,1].
bool report_invariants_hold(const SecurityReport& report);

void write_json(std::ostream& out, const SecurityReport& report);
/// detector,eta_D,Y_0,N_sig,t_r_minutes
void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const std::string& detector, double eta_d, double y0,
                   const SecurityReport& report);

}  // namespace mdiqds
