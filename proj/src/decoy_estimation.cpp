#include "mdiqds/decoy_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mdiqds/entropy_math.hpp"

namespace mdiqds {

namespace {

constexpr int kSize = PhotonPopulation::kSize;
constexpr double kBracketConstant = 9.0 / 32.0;  // (3 / (4 sqrt2))^2
// Vacuum error entries (0,j) and (j,0) checked one by one for j up to this.
constexpr int kVacuumEntryReach = 3;
// Union bound over the aggregate check and the per-entry ones.
constexpr double kVacuumChecks = 1.0 + 2.0 * kVacuumEntryReach;

bool in_unit_open(double p) { return p > 0.0 && p <= 1.0; }

}  // namespace

ErrorBudget ErrorBudget::uniform(double eps, double eps_pe, double g) {
    ErrorBudget b;
    b.eps_PE = eps_pe;
    b.g = g;
    b.eps_k = eps;
    b.eps_ab = b.eps_hat_ab = b.eps_tilde_ab = eps;
    b.eps_0 = b.eps_1 = eps;
    b.eps_k0_serfling = b.eps_k1_serfling = eps;
    b.eps_ke_sampling = eps;
    return b;
}

void ErrorBudget::validate() const {
    const std::pair<const char*, double> fields[] = {
        {"eps_PE", eps_PE},           {"eps_k", eps_k},
        {"eps_ab", eps_ab},           {"eps_hat_ab", eps_hat_ab},
        {"eps_tilde_ab", eps_tilde_ab}, {"eps_0", eps_0},
        {"eps_1", eps_1},             {"eps_k0_serfling", eps_k0_serfling},
        {"eps_k1_serfling", eps_k1_serfling}, {"eps_ke_sampling", eps_ke_sampling},
        {"g", g}};
    for (const auto& [name, value] : fields) {
        if (!in_unit_open(value)) throw std::invalid_argument(std::string(name) + ": must lie in (0,1]");
    }
    if (eps_k_smooth < 0.0 || eps_k_smooth > 1.0) throw std::invalid_argument("eps_k_smooth: must lie in [0,1]");
}

ChernoffInterval chernoff_interval(double observed, const ErrorBudget& budget) {
    if (observed < 0.0) throw std::domain_error("chernoff_interval: negative count");
    const double e = budget.eps_ab;
    // g(x, eps^4/16) written with logs so eps^4 cannot underflow
    const double lower = std::sqrt(2.0 * observed * (std::log(16.0) - 4.0 * std::log(e)));
    const double upper = std::sqrt(2.0 * observed * 1.5 * -std::log(budget.eps_hat_ab));
    return {lower, upper};
}

double validity_mu(double set_size, double total_size, const ErrorBudget& budget) {
    return set_size - std::sqrt(total_size / 2.0 * std::log(1.0 / budget.eps_tilde_ab));
}

bool check_validity(double mu, const ErrorBudget& budget) {
    if (!(mu > 0.0)) return false;
    return std::log(2.0 / budget.eps_ab) / mu <= kBracketConstant && std::log(1.0 / budget.eps_hat_ab) / mu <= 1.0 / 3.0;
}

bool validity_bracket_binding(double mu, const ErrorBudget& budget) {
    if (!(mu > 0.0)) return false;
    return std::log(2.0 / budget.eps_ab) / mu > kBracketConstant && std::log(1.0 / budget.eps_hat_ab) / mu <= 1.0 / 3.0;
}

PhotonPopulation::PhotonPopulation(const DecoySourceConfig& alice, const DecoySourceConfig& peer) {
    alice.validate();
    peer.validate();
    std::array<std::array<double, kSize>, 3> pa{}, pb{};
    for (int i = 0; i < 3; ++i) {
        pa[i] = truncated_poisson(alice.intensities[i]);
        pb[i] = truncated_poisson(peer.intensities[i]);
    }
    for (int n = 0; n < kSize; ++n) {
        for (int m = 0; m < kSize; ++m) {
            double total = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    const double joint = alice.intensity_probs[a] * peer.intensity_probs[b] * pa[a][n] * pb[b][m];
                    posterior[a][b][n][m] = joint;
                    total += joint;
                }
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) posterior[a][b][n][m] = total > 0.0 ? posterior[a][b][n][m] / total : 0.0;
        }
    }
}

namespace {

/// Largest mean E of a sum of independent Bernoulli variables for which
/// observing `observed` or fewer still has probability >= eps, from the lower
/// tail exp(-t^2 / (2E)). Holds for any set size.
double small_set_upper_bound(double observed, double eps) {
    const double half_log = std::log(1.0 / eps) / 2.0;
    const double root = std::sqrt(half_log) + std::sqrt(half_log + observed);
    return root * root;
}

double grid_total(const SetCounts::Grid& grid) {
    double total = 0.0;
    for (const auto& row : grid)
        for (double z : row) total += z;
    return total;
}

/// Adds the interval constraints of every valid set of `sizes` on the block
/// of variables starting at `offset`.
void add_set_rows(LinearProgram& lp, const SetCounts::Grid& sizes, const PhotonPopulation& pop,
                  const ErrorBudget& budget, std::size_t offset, double scale, PopulationBound& result) {
    const double total = grid_total(sizes);
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            const double z = sizes[a][b];
            const double mu = validity_mu(z, total, budget);
            if (validity_bracket_binding(mu, budget)) result.bracket_binding = true;
            std::vector<double> coeffs(lp.num_vars, 0.0);
            for (int n = 0; n < kSize; ++n)
                for (int m = 0; m < kSize; ++m) coeffs[offset + n * kSize + m] = pop.posterior[a][b][n][m];
            if (!check_validity(mu, budget)) {
                lp.add_row(std::move(coeffs), -kUnbounded, small_set_upper_bound(z, budget.eps_ab) / scale);
                continue;
            }
            result.sets_used[a][b] = true;
            const ChernoffInterval d = chernoff_interval(z, budget);
            const double lower = z - d.upper;
            lp.add_row(std::move(coeffs), lower > 0.0 ? lower / scale : -kUnbounded, (z + d.lower) / scale);
        }
    }
}

}  // namespace

PopulationBound population_bound(const SetCounts::Grid& sizes, const PhotonPopulation& pop,
                                 const ErrorBudget& budget, const std::vector<double>& weights, bool maximize) {
    constexpr std::size_t vars = kSize * kSize;
    if (weights.size() != vars) throw std::invalid_argument("population_bound: weight vector size");
    const double scale = std::max(grid_total(sizes), 1.0);

    LinearProgram lp(vars);
    lp.objective = weights;
    PopulationBound result;
    add_set_rows(lp, sizes, pop, budget, 0, scale, result);

    if (lp.rows.empty() && maximize) {
        result.value = kUnbounded;
        return result;
    }
    const LpSolution sol = solve_lp(lp, maximize);
    if (sol.status == LpStatus::infeasible) {
        throw EstimationError("population_bound: observed set sizes are inconsistent with the photon-number model");
    }
    if (sol.status == LpStatus::unbounded) {
        result.value = maximize ? kUnbounded : -kUnbounded;
        return result;
    }
    result.value = sol.objective * scale;
    result.s = sol.x;
    for (double& s : result.s) s *= scale;
    return result;
}

double phase_error_count_bound(const SetCounts& counts, const PhotonPopulation& pop, const ErrorBudget& budget) {
    constexpr std::size_t block = kSize * kSize;
    const double total = grid_total(counts.x_size);
    const double scale = std::max(total, 1.0);

    // Variables: S_nm (X-basis events) then T_nm (errors among them).
    LinearProgram lp(2 * block);
    lp.objective[block + 1 * kSize + 1] = 1.0;
    PopulationBound sizes_used;
    PopulationBound errors_used;
    add_set_rows(lp, counts.x_size, pop, budget, 0, scale, sizes_used);
    add_set_rows(lp, counts.x_errors, pop, budget, block, scale, errors_used);
    if (lp.rows.empty()) return kUnbounded;

    for (std::size_t v = 0; v < block; ++v) {
        std::vector<double> coeffs(2 * block, 0.0);
        coeffs[v] = -1.0;
        coeffs[block + v] = 1.0;
        lp.add_row(std::move(coeffs), -kUnbounded, 0.0);
    }
    // An event where either party emitted vacuum is an error with probability
    // exactly 1/2, independently of everything else. Hoeffding gives
    // T >= S/2 - sqrt(S ln(1/e) / 2) for the vacuum entries together and for
    // each low entry separately; the square root is relaxed to its tangent
    // lines so the constraints stay linear.
    const double log_term = std::log(kVacuumChecks / budget.eps_ab);
    std::vector<double> coeffs(2 * block, 0.0);
    for (int n = 0; n < kSize; ++n) {
        for (int m = 0; m < kSize; ++m) {
            if (n != 0 && m != 0) continue;
            coeffs[n * kSize + m] = -0.5;
            coeffs[block + n * kSize + m] = 1.0;
        }
    }
    lp.add_row(std::move(coeffs), -std::sqrt(total * log_term / 2.0) / scale, kUnbounded);

    const double k = std::sqrt(log_term / 2.0);
    for (int j = 1; j <= kVacuumEntryReach; ++j) {
        for (const std::size_t v : {static_cast<std::size_t>(j), static_cast<std::size_t>(j * kSize)}) {
            for (double c = 10.0; c <= 10.0 * total; c *= 10.0) {
                // T - S/2 >= -k (sqrt(c) + (S - c) / (2 sqrt(c)))
                const double root = std::sqrt(c);
                std::vector<double> row(2 * block, 0.0);
                row[v] = -0.5 + k / (2.0 * root);
                row[block + v] = 1.0;
                lp.add_row(std::move(row), -k * root / 2.0 / scale, kUnbounded);
            }
        }
    }

    const LpSolution sol = solve_lp(lp, true);
    if (sol.status == LpStatus::infeasible) {
        throw EstimationError("phase_error_count_bound: X-basis counts are inconsistent with the photon-number model");
    }
    if (sol.status == LpStatus::unbounded) return kUnbounded;
    return sol.objective * scale;
}

namespace {

std::vector<double> vacuum_weights(const PhotonPopulation& pop) {
    std::vector<double> w(kSize * kSize, 0.0);
    for (int n = 0; n < kSize; ++n) w[n * kSize] = pop.p(Intensity::signal, Intensity::signal, n, 0);
    return w;
}

std::vector<double> single_pair_weights(double coefficient) {
    std::vector<double> w(kSize * kSize, 0.0);
    w[1 * kSize + 1] = coefficient;
    return w;
}

double subtract_deviation(double objective, double eps) {
    if (!(objective > 0.0)) return 0.0;
    return std::max(objective - chernoff_delta(objective, eps), 0.0);
}

}  // namespace

double lower_bound_m_k0(const SetCounts& counts, const PhotonPopulation& pop, const ErrorBudget& budget) {
    const auto bound = population_bound(counts.z_size, pop, budget, vacuum_weights(pop), false);
    return subtract_deviation(bound.value, budget.eps_0);
}

double lower_bound_m_k0(const SiftedData& sifted, BellState k, const PhotonPopulation& pop,
                        const ErrorBudget& budget) {
    return lower_bound_m_k0(sifted.counts(k), pop, budget);
}

double lower_bound_m_k1(const SetCounts& counts, const PhotonPopulation& pop, const ErrorBudget& budget) {
    const double p11 = pop.p(Intensity::signal, Intensity::signal, 1, 1);
    const auto bound = population_bound(counts.z_size, pop, budget, single_pair_weights(p11), false);
    return subtract_deviation(bound.value, budget.eps_1);
}

double lower_bound_m_k1(const SiftedData& sifted, BellState k, const PhotonPopulation& pop,
                        const ErrorBudget& budget) {
    return lower_bound_m_k1(sifted.counts(k), pop, budget);
}

XBasisAux x_basis_bounds(const SetCounts& counts, const PhotonPopulation& pop, const ErrorBudget& budget) {
    const auto w = single_pair_weights(1.0);
    XBasisAux aux;
    aux.n_bar = std::max(population_bound(counts.x_size, pop, budget, w, false).value, 0.0);
    aux.e_bar = phase_error_count_bound(counts, pop, budget);
    return aux;
}

double serfling_scale(double m_bound, double z_size, double n_half, double eps) {
    if (!(n_half >= 1.0) || n_half > z_size) throw std::domain_error("serfling_scale: need z_size >= n_half >= 1");
    if (m_bound < 0.0) throw std::domain_error("serfling_scale: negative bound");
    const double value = n_half * m_bound / z_size - n_half * serfling_lambda(z_size, n_half, eps);
    return std::max(std::floor(value), 0.0);
}

double upper_bound_e_k1(double n_k1, const XBasisAux& aux, const ErrorBudget& budget) {
    if (!(n_k1 > 0.0)) throw std::domain_error("upper_bound_e_k1: n_k1 = 0, code string must be discarded");
    if (!(aux.n_bar >= 1.0)) throw std::domain_error("upper_bound_e_k1: n_bar < 1");
    if (!std::isfinite(aux.e_bar)) return 0.5;
    const double spread = (n_k1 + aux.n_bar) * upsilon(n_k1, aux.n_bar, budget.eps_ke_sampling);
    const double errors = std::ceil(n_k1 * std::max(aux.e_bar, 0.0) / aux.n_bar + spread);
    return std::clamp(errors / n_k1, 0.0, 0.5);
}

ErrorSample observed_error_rate(const std::vector<std::uint8_t>& alice_bits, const std::vector<std::uint8_t>& peer_bits,
                                std::size_t r_k, Rng& rng) {
    if (alice_bits.size() != peer_bits.size()) throw std::invalid_argument("observed_error_rate: length mismatch");
    const std::size_t n = alice_bits.size();
    if (r_k == 0 || r_k > n) throw EstimationError("observed_error_rate: insufficient data for the requested sample");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = 0; i < r_k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    ErrorSample out;
    for (std::size_t i = 0; i < r_k; ++i) out.mismatches += alice_bits[order[i]] != peer_bits[order[i]];
    out.e_obs = static_cast<double>(out.mismatches) / static_cast<double>(r_k);
    out.code_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(r_k), order.end());
    std::sort(out.code_indices.begin(), out.code_indices.end());
    return out;
}

ErrorSample observed_error_rate(const SiftedData& sifted, BellState k, std::size_t r_k, Rng& rng) {
    const auto idx = sifted.signal_z_indices(k);
    std::vector<std::uint8_t> a(idx.size()), b(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        a[i] = sifted.events[idx[i]].alice_bit;
        b[i] = sifted.events[idx[i]].peer_bit;
    }
    ErrorSample out = observed_error_rate(a, b, r_k, rng);
    for (auto& i : out.code_indices) i = idx[i];
    return out;
}

double true_error_upper_bound(double e_obs, double n_half, double r_k, double eps_pe) {
    return e_obs + mu_parameter(n_half, r_k, eps_pe);
}

YieldEstimate estimate_yields(const SetCounts& counts, const PhotonPopulation& pop, double n_half,
                              const ErrorBudget& budget) {
    budget.validate();
    YieldEstimate est;
    est.budget = budget;
    est.n_half = n_half;
    est.z_signal_size = counts.z_size[0][0];
    if (!(est.z_signal_size >= 1.0) || !(n_half >= 1.0)) {
        est.discard_reason = "signal-signal Z set is empty";
        return est;
    }

    const auto vac = population_bound(counts.z_size, pop, budget, vacuum_weights(pop), false);
    const double p11 = pop.p(Intensity::signal, Intensity::signal, 1, 1);
    const auto single = population_bound(counts.z_size, pop, budget, single_pair_weights(p11), false);
    est.z_sets_used = vac.sets_used;
    est.bracket_binding = vac.bracket_binding;
    est.m_k0 = subtract_deviation(vac.value, budget.eps_0);
    est.m_k1 = subtract_deviation(single.value, budget.eps_1);
    est.n_k0 = serfling_scale(est.m_k0, est.z_signal_size, n_half, budget.eps_k0_serfling);
    est.n_k1 = serfling_scale(est.m_k1, est.z_signal_size, n_half, budget.eps_k1_serfling);
    est.n_k1 = std::min(est.n_k1, std::max(n_half - est.n_k0, 0.0));
    est.x_basis_aux = x_basis_bounds(counts, pop, budget);

    if (!(est.n_k1 > 0.0)) {
        est.discard_reason = "n_k1 = 0";
        return est;
    }
    if (!(est.x_basis_aux.n_bar >= 1.0)) {
        est.discard_reason = "n_bar < 1";
        return est;
    }
    est.e_k1 = upper_bound_e_k1(est.n_k1, est.x_basis_aux, budget);
    est.usable = true;
    return est;
}

}  // namespace mdiqds
