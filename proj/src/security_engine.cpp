#include "mdiqds/security_engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mdiqds/json_io.hpp"

namespace mdiqds {

namespace {

double smoothing_term(double eps_prime, double eps_hat) {
    if (!(eps_prime > 0.0) || !(eps_hat > 0.0)) throw std::domain_error("min_entropy_bound: eps must be positive");
    return 2.0 * std::log2(2.0 / (eps_prime * eps_hat));
}

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace

double min_entropy_approx(double n_k0, double n_k1, double e_k1) {
    return n_k0 + n_k1 * (1.0 - binary_entropy(e_k1));
}

double min_entropy_bound(double n_k0, double n_k1, double e_k1, double eps_prime, double eps_hat) {
    return min_entropy_approx(n_k0, n_k1, e_k1) - smoothing_term(eps_prime, eps_hat);
}

ForgingTail forging_tail(std::uint64_t n_k, std::uint64_t r, double h_min, double eps_k, double g) {
    if (!(g > 0.0)) throw std::domain_error("forging_tail: g must be positive");
    if (eps_k < 0.0) throw std::domain_error("forging_tail: eps_k must be >= 0");
    const std::uint64_t half = n_k / 2;
    if (r > half) throw std::domain_error("forging_tail: r > n_k/2");

    ForgingTail out;
    out.p_r_bound = g;
    LogProb tail;
    if (n_k <= kExactBinomialLimit) {
        tail = binomial_tail_log2_exact(half, r);
        out.exact = true;
    } else {
        const double rate = 2.0 * static_cast<double>(r) / static_cast<double>(n_k);
        tail = {static_cast<double>(n_k) / 2.0 * binary_entropy(std::min(rate, 1.0)), false, true};
    }
    const LogProb guess{tail.log2_value - h_min, false, tail.is_bound};
    const LogProb numerator = log2_add(guess, LogProb::from_linear(eps_k));
    out.p_F_log2 = {numerator.log2_value - std::log2(g), false, numerator.is_bound};
    out.p_F = clamp01(out.p_F_log2.linear());
    return out;
}

double solve_p_E(double c_k0, double c_k1, double e_k1, bool* clamped) {
    const double arg = c_k0 + c_k1 * (1.0 - binary_entropy(e_k1));
    const double bounded = std::clamp(arg, 0.0, 1.0);
    if (clamped) *clamped = bounded != arg;
    return inverse_binary_entropy(bounded);
}

Thresholds choose_thresholds(double e_bar, double p_E) {
    if (!(e_bar < p_E)) {
        throw InfeasibleError("choose_thresholds: E_bar = " + std::to_string(e_bar) +
                              " is not below p_E = " + std::to_string(p_E));
    }
    const double gap = p_E - e_bar;
    Thresholds t{e_bar + gap / 3.0, e_bar + 2.0 * gap / 3.0};
    if (!(e_bar < t.s_a && t.s_a < t.s_v && t.s_v < p_E)) {
        throw InfeasibleError("choose_thresholds: gap between E_bar and p_E is too small to split");
    }
    return t;
}

double repudiation_bound(double s_a, double s_v, double n_k) {
    const double d = s_v - s_a;
    return 2.0 * std::exp(-d * d * n_k / 4.0);
}

KeyLength mdi_qkd_key_length(double n_k, double c_k0, double c_k1, double e_k1, double e_bar, double zeta,
                             const ErrorBudget& budget, double eps_cor, double eps_pa) {
    const double half = n_k / 2.0;
    const double rate = c_k0 + c_k1 * (1.0 - binary_entropy(e_k1));
    KeyLength out;
    out.full = half * rate - n_k * zeta * binary_entropy(e_bar) - std::log2(8.0 / eps_cor) -
               smoothing_term(budget.eps_k_prime(), budget.eps_k_hat()) - 2.0 * std::log2(1.0 / (2.0 * eps_pa));
    out.asymptotic = half * (rate - zeta * binary_entropy(e_bar));
    return out;
}

double SecurityReport::max_failure() const { return std::max({pr_honest_abort, pr_repudiation, pr_forge}); }

SecurityReport abort_repudiation_forge_bounds(SecurityReport report, const ErrorBudget& budget) {
    report.budget = budget;
    report.g = budget.g;
    report.pr_honest_abort = clamp01(2.0 * budget.eps_PE);
    report.pr_repudiation_raw = repudiation_bound(report.s_a, report.s_v, report.n_k);
    report.pr_repudiation = clamp01(report.pr_repudiation_raw);

    const auto n_k = static_cast<std::uint64_t>(report.n_k);
    const double r_real = std::ceil(report.s_v * report.n_k / 2.0) - 1.0;
    const auto r = static_cast<std::uint64_t>(std::clamp(r_real, 0.0, static_cast<double>(n_k / 2)));
    const ForgingTail tail = forging_tail(n_k, r, report.h_min, budget.eps_k_main(), budget.g);
    report.p_F = tail.p_F;
    report.p_F_log2 = tail.p_F_log2;
    report.pr_forge_raw =
        tail.p_F_log2.linear() + budget.g + budget.eps_PE + budget.eps_k0() + budget.eps_k1() + budget.eps_ke();
    report.pr_forge = clamp01(report.pr_forge_raw);
    return report;
}

bool report_invariants_hold(const SecurityReport& r) {
    const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(r.pr_honest_abort) || !prob(r.pr_repudiation) || !prob(r.pr_forge) || !prob(r.p_F)) return false;
    if (!prob(r.p_E) || !prob(r.E_bar)) return false;
    if (r.feasible && !(r.E_bar < r.s_a && r.s_a < r.s_v && r.s_v < r.p_E)) return false;
    return true;
}

nlohmann::json number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

nlohmann::json to_json(const ErrorBudget& b) {
    return {{"eps_PE", number(b.eps_PE)},
            {"eps_k", number(b.eps_k)},
            {"eps_k_prime", number(b.eps_k_prime())},
            {"eps_k_hat", number(b.eps_k_hat())},
            {"eps_k_main", number(b.eps_k_main())},
            {"eps_k_chain", number(b.eps_k_chain())},
            {"eps_ab", number(b.eps_ab)},
            {"eps_hat_ab", number(b.eps_hat_ab)},
            {"eps_tilde_ab", number(b.eps_tilde_ab)},
            {"gamma_ab", number(b.gamma_ab())},
            {"eps_0", number(b.eps_0)},
            {"eps_1", number(b.eps_1)},
            {"eps_k0", number(b.eps_k0())},
            {"eps_k1", number(b.eps_k1())},
            {"eps_ke", number(b.eps_ke())},
            {"g", number(b.g)}};
}

nlohmann::json to_json(const YieldEstimate& e) {
    nlohmann::json sets = nlohmann::json::array();
    for (const auto& row : e.z_sets_used) sets.push_back({row[0], row[1], row[2]});
    return {{"m_k0", number(e.m_k0)},
            {"m_k1", number(e.m_k1)},
            {"n_k0", number(e.n_k0)},
            {"n_k1", number(e.n_k1)},
            {"e_k1", number(e.e_k1)},
            {"n_bar_k1", number(e.x_basis_aux.n_bar)},
            {"e_bar_k1", number(e.x_basis_aux.e_bar)},
            {"z_signal_size", number(e.z_signal_size)},
            {"n_half", number(e.n_half)},
            {"z_sets_two_sided", sets},
            {"validity_bracket_binding", e.bracket_binding},
            {"usable", e.usable},
            {"discard_reason", e.discard_reason}};
}

nlohmann::json to_json(const SecurityReport& r) {
    return {{"h_min", number(r.h_min)},
            {"h_min_approx", number(r.h_min_approx)},
            {"c_k0", number(r.c_k0)},
            {"c_k1", number(r.c_k1)},
            {"c_k0_rate", number(r.c_k0_rate)},
            {"c_k1_rate", number(r.c_k1_rate)},
            {"e_k1", number(r.e_k1)},
            {"p_E", number(r.p_E)},
            {"p_E_clamped", r.p_E_clamped},
            {"E_obs", number(r.E_obs)},
            {"E_bar", number(r.E_bar)},
            {"s_a", number(r.s_a)},
            {"s_v", number(r.s_v)},
            {"feasible", r.feasible},
            {"feasibility_margin", number(r.feasibility_margin)},
            {"pr_honest_abort", number(r.pr_honest_abort)},
            {"pr_repudiation", number(r.pr_repudiation)},
            {"pr_repudiation_raw", number(r.pr_repudiation_raw)},
            {"pr_forge", number(r.pr_forge)},
            {"pr_forge_raw", number(r.pr_forge_raw)},
            {"p_F", number(r.p_F)},
            {"p_F_log2", number(r.p_F_log2.is_zero ? -INFINITY : r.p_F_log2.log2_value)},
            {"g", number(r.g)},
            {"n_k", number(r.n_k)},
            {"R_k", number(r.r_k)},
            {"N_sig", number(r.N_sig)},
            {"pulse_rate", number(r.pulse_rate)},
            {"t_r_seconds", number(r.t_r_seconds)},
            {"zeta", number(r.zeta)},
            {"l_k", number(r.l_k)},
            {"l_k_asymptotic", number(r.l_k_asymptotic)},
            {"selected_bell_state", r.selected_bell_state},
            {"note", r.note},
            {"budget", to_json(r.budget)}};
}

void write_json(std::ostream& out, const SecurityReport& report) { out << to_json(report).dump(2) << '\n'; }

void write_csv_header(std::ostream& out) { out << "detector,eta_D,Y_0,N_sig,t_r_minutes\n"; }

void write_csv_row(std::ostream& out, const std::string& detector, double eta_d, double y0,
                   const SecurityReport& report) {
    out << detector << ',' << eta_d << ',' << y0 << ',' << report.N_sig << ',' << report.t_r_seconds / 60.0 << '\n';
}

}  // namespace mdiqds
