#include "mdiqds/linear_program.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdiqds {

void LinearProgram::add_row(std::vector<double> coeffs, double lower, double upper) {
    if (coeffs.size() != num_vars) throw std::invalid_argument("LinearProgram::add_row: coefficient count mismatch");
    if (lower > upper) throw std::invalid_argument("LinearProgram::add_row: lower > upper");
    rows.push_back({std::move(coeffs), lower, upper});
}

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kRatioTol = 1e-12;
constexpr double kCostTol = 1e-10;
constexpr double kFeasTol = 1e-8;
constexpr int kMaxIterations = 100000;
constexpr int kDegenerateLimit = 50;

class Tableau {
public:
    Tableau(std::size_t rows, std::size_t cols) : cols_(cols), data_(rows * (cols + 1), 0.0), basis_(rows, 0) {}

    double& at(std::size_t i, std::size_t j) { return data_[i * (cols_ + 1) + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * (cols_ + 1) + j]; }
    double& rhs(std::size_t i) { return at(i, cols_); }
    double rhs(std::size_t i) const { return at(i, cols_); }
    std::size_t rows() const { return basis_.size(); }
    std::size_t cols() const { return cols_; }
    std::vector<std::size_t>& basis() { return basis_; }

    void pivot(std::size_t r, std::size_t c) {
        const double p = at(r, c);
        for (std::size_t j = 0; j <= cols_; ++j) at(r, j) /= p;
        for (std::size_t i = 0; i < rows(); ++i) {
            if (i == r) continue;
            const double f = at(i, c);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= cols_; ++j) at(i, j) -= f * at(r, j);
            at(i, c) = 0.0;
        }
        basis_[r] = c;
    }

    /// Minimizes cost.x over columns not marked in `blocked`. Returns false
    /// if unbounded. Dantzig's rule until a long run of degenerate pivots,
    /// then Bland's rule for the rest of the solve.
    bool minimize(const std::vector<double>& cost, const std::vector<bool>& blocked) {
        std::vector<double> reduced(cols_);
        int degenerate_run = 0;
        bool bland = false;
        for (int iter = 0; iter < kMaxIterations; ++iter) {
            for (std::size_t j = 0; j < cols_; ++j) reduced[j] = cost[j];
            for (std::size_t i = 0; i < rows(); ++i) {
                const double cb = cost[basis_[i]];
                if (cb == 0.0) continue;
                const double* row = &data_[i * (cols_ + 1)];
                for (std::size_t j = 0; j < cols_; ++j) reduced[j] -= cb * row[j];
            }
            bland = bland || degenerate_run > kDegenerateLimit;
            std::size_t entering = cols_;
            double most_negative = -kCostTol;
            for (std::size_t j = 0; j < cols_; ++j) {
                if (blocked[j] || reduced[j] >= most_negative) continue;
                entering = j;
                if (bland) break;
                most_negative = reduced[j];
            }
            if (entering == cols_) return true;

            // Two passes: the smallest ratio with slightly relaxed rhs, then
            // the largest pivot among rows within that ratio.
            double limit = kUnbounded;
            for (std::size_t i = 0; i < rows(); ++i) {
                const double a = at(i, entering);
                if (a > kPivotTol) limit = std::min(limit, (std::max(rhs(i), 0.0) + kRatioTol) / a);
            }
            std::size_t leaving = rows();
            double best = 0.0;
            for (std::size_t i = 0; i < rows(); ++i) {
                const double a = at(i, entering);
                if (a <= kPivotTol) continue;
                const double ratio = std::max(rhs(i), 0.0) / a;
                if (ratio > limit) continue;
                const bool better = leaving == rows() || (bland ? basis_[i] < basis_[leaving] : a > at(leaving, entering));
                if (better) {
                    leaving = i;
                    best = ratio;
                }
            }
            if (leaving == rows()) return false;
            degenerate_run = best <= 1e-14 ? degenerate_run + 1 : 0;
            pivot(leaving, entering);
        }
        throw std::runtime_error("solve_lp: iteration limit reached");
    }

private:
    std::size_t cols_;
    std::vector<double> data_;
    std::vector<std::size_t> basis_;
};

struct Constraint {
    const std::vector<double>* coeffs;
    double rhs;
    int slack_sign;  // +1 for <=, -1 for >=, 0 for equality
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, bool maximize) {
    const std::size_t n = lp.num_vars;
    if (lp.objective.size() != n) throw std::invalid_argument("solve_lp: objective size mismatch");

    std::vector<Constraint> cons;
    for (const auto& row : lp.rows) {
        const bool has_lower = std::isfinite(row.lower);
        const bool has_upper = std::isfinite(row.upper);
        if (has_lower && has_upper && row.lower == row.upper) {
            cons.push_back({&row.coeffs, row.lower, 0});
            continue;
        }
        if (has_lower) cons.push_back({&row.coeffs, row.lower, -1});
        if (has_upper) cons.push_back({&row.coeffs, row.upper, +1});
    }

    const std::size_t m = cons.size();

    // Equilibrate: columns to unit max magnitude, then rows.
    std::vector<double> col_scale(n, 0.0);
    for (const auto& c : cons) {
        for (std::size_t j = 0; j < n; ++j) col_scale[j] = std::max(col_scale[j], std::abs((*c.coeffs)[j]));
    }
    for (double& s : col_scale) s = s > 0.0 ? 1.0 / s : 1.0;
    std::vector<double> row_scale(m, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
        double peak = 0.0;
        for (std::size_t j = 0; j < n; ++j) peak = std::max(peak, std::abs((*cons[i].coeffs)[j] * col_scale[j]));
        if (peak > 0.0) row_scale[i] = 1.0 / peak;
    }

    std::size_t slack_count = 0;
    for (const auto& c : cons) slack_count += c.slack_sign != 0;

    // Columns: structural, then slacks, then artificials.
    std::vector<int> row_sign(m);
    std::vector<bool> needs_artificial(m);
    std::size_t artificial_count = 0;
    for (std::size_t i = 0; i < m; ++i) {
        row_sign[i] = cons[i].rhs < 0.0 ? -1 : 1;
        needs_artificial[i] = !(cons[i].slack_sign * row_sign[i] == 1);
        artificial_count += needs_artificial[i];
    }
    const std::size_t total = n + slack_count + artificial_count;
    Tableau t(m, total);
    std::vector<bool> is_artificial(total, false);

    std::size_t slack_col = n;
    std::size_t art_col = n + slack_count;
    for (std::size_t i = 0; i < m; ++i) {
        const double s = row_sign[i] * row_scale[i];
        for (std::size_t j = 0; j < n; ++j) t.at(i, j) = s * (*cons[i].coeffs)[j] * col_scale[j];
        t.rhs(i) = s * cons[i].rhs;
        if (cons[i].slack_sign != 0) {
            t.at(i, slack_col) = s * cons[i].slack_sign;
            if (!needs_artificial[i]) t.basis()[i] = slack_col;
            ++slack_col;
        }
        if (needs_artificial[i]) {
            t.at(i, art_col) = 1.0;
            is_artificial[art_col] = true;
            t.basis()[i] = art_col;
            ++art_col;
        }
    }

    LpSolution sol;
    std::vector<bool> none_blocked(total, false);
    if (artificial_count > 0) {
        std::vector<double> phase1(total, 0.0);
        for (std::size_t j = 0; j < total; ++j) phase1[j] = is_artificial[j] ? 1.0 : 0.0;
        t.minimize(phase1, none_blocked);
        double infeasibility = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (is_artificial[t.basis()[i]]) infeasibility += t.rhs(i);
        }
        if (infeasibility > kFeasTol) {
            sol.status = LpStatus::infeasible;
            return sol;
        }
        for (std::size_t i = 0; i < m; ++i) {
            if (!is_artificial[t.basis()[i]]) continue;
            for (std::size_t j = 0; j < total; ++j) {
                if (!is_artificial[j] && std::abs(t.at(i, j)) > 1e-9) {
                    t.pivot(i, j);
                    break;
                }
            }
        }
    }

    std::vector<double> cost(total, 0.0);
    double cost_peak = 0.0;
    for (std::size_t j = 0; j < n; ++j) cost_peak = std::max(cost_peak, std::abs(lp.objective[j] * col_scale[j]));
    const double cost_scale = cost_peak > 0.0 ? 1.0 / cost_peak : 1.0;
    for (std::size_t j = 0; j < n; ++j) cost[j] = (maximize ? -1.0 : 1.0) * lp.objective[j] * col_scale[j] * cost_scale;
    if (!t.minimize(cost, is_artificial)) {
        sol.status = LpStatus::unbounded;
        return sol;
    }

    sol.status = LpStatus::optimal;
    sol.x.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t b = t.basis()[i];
        if (b < n) sol.x[b] = std::max(t.rhs(i), 0.0) * col_scale[b];
    }
    sol.objective = 0.0;
    for (std::size_t j = 0; j < n; ++j) sol.objective += lp.objective[j] * sol.x[j];
    return sol;
}

}  // namespace mdiqds
