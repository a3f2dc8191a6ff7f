#pragma once

#include <limits>
#include <vector>

namespace mdiqds {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// min c.x subject to lower_i <= a_i.x <= upper_i and x >= 0.
struct LinearProgram {
    struct Row {
        std::vector<double> coeffs;
        double lower = -kUnbounded;
        double upper = kUnbounded;
    };

    std::size_t num_vars = 0;
    std::vector<double> objective;
    std::vector<Row> rows;

    explicit LinearProgram(std::size_t n = 0) : num_vars(n), objective(n, 0.0) {}

    void add_row(std::vector<double> coeffs, double lower, double upper);
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    double objective = 0.0;
    std::vector<double> x;
};

/**
 * Dense two-phase simplex with Bland's anti-cycling rule. Meant for the small
 * problems in this library (a few hundred columns, a few dozen rows); callers
 * should scale rows so coefficients are O(1).
 */
LpSolution solve_lp(const LinearProgram& lp, bool maximize = false);

}  // namespace mdiqds
