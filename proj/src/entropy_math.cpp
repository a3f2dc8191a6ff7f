#include "mdiqds/entropy_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mdiqds {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::domain_error(what);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

LogProb LogProb::from_linear(double x) {
    require(x >= 0.0, "LogProb: negative value");
    if (x == 0.0) return zero();
    return {std::log2(x), false, false};
}

double LogProb::linear() const { return is_zero ? 0.0 : std::exp2(log2_value); }

LogProb log2_add(LogProb a, LogProb b) {
    if (a.is_zero) return b;
    if (b.is_zero) return a;
    const double hi = std::max(a.log2_value, b.log2_value);
    const double lo = std::min(a.log2_value, b.log2_value);
    return {hi + std::log2(1.0 + std::exp2(lo - hi)), false, a.is_bound || b.is_bound};
}

double binary_entropy(double p) {
    require(is_probability(p), "binary_entropy: p outside [0,1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double inverse_binary_entropy(double y) {
    require(y >= 0.0 && y <= 1.0, "inverse_binary_entropy: y outside [0,1]");
    if (y == 0.0) return 0.0;
    if (y == 1.0) return 0.5;
    double lo = 0.0;
    double hi = 0.5;
    for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (binary_entropy(mid) < y) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double log2_binomial(double n, double k) {
    require(k >= 0.0 && k <= n, "log2_binomial: k outside [0,n]");
    return (std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)) / std::log(2.0);
}

LogProb binomial_tail_log2_exact(std::uint64_t n, std::uint64_t r) {
    require(r <= n, "binomial_tail_log2: r > n");
    if (r == n) return {static_cast<double>(n), false, false};
    // Terms grow up to m = n/2, so the largest term is at min(r, n/2).
    const double nd = static_cast<double>(n);
    const double peak = log2_binomial(nd, static_cast<double>(std::min<std::uint64_t>(r, n / 2)));
    double acc = 0.0;
    for (std::uint64_t m = 0; m <= r; ++m) {
        acc += std::exp2(log2_binomial(nd, static_cast<double>(m)) - peak);
    }
    return {peak + std::log2(acc), false, false};
}

LogProb binomial_tail_log2(std::uint64_t n, std::uint64_t r) {
    require(r <= n, "binomial_tail_log2: r > n");
    if (n <= kExactBinomialLimit) return binomial_tail_log2_exact(n, r);
    const double nd = static_cast<double>(n);
    if (2 * r > n) return {nd, false, true};
    return {nd * binary_entropy(static_cast<double>(r) / nd), false, true};
}

double chernoff_delta(double x, double y) {
    require(x >= 0.0, "chernoff_delta: x < 0");
    require(y > 0.0 && y <= 1.0, "chernoff_delta: y outside (0,1]");
    return std::sqrt(2.0 * x * std::log(1.0 / y));
}

double serfling_lambda(double x, double y, double z) {
    require(y >= 1.0 && x >= y, "serfling_lambda: need x >= y >= 1");
    require(z > 0.0 && z <= 1.0, "serfling_lambda: z outside (0,1]");
    return std::sqrt((x - y + 1.0) * std::log(1.0 / z) / (2.0 * x * y));
}

double upsilon(double x, double y, double z) {
    require(x >= 0.0 && y >= 1.0, "upsilon: need x >= 0, y >= 1");
    require(z > 0.0 && z <= 1.0, "upsilon: z outside (0,1]");
    return std::sqrt((x + 1.0) * std::log(1.0 / z) / (2.0 * y * (x + y)));
}

double mu_parameter(double n_half, double r_k, double eps_pe) {
    require(r_k >= 1.0 && n_half >= r_k, "mu_parameter: need n_half >= R_k >= 1");
    require(eps_pe > 0.0 && eps_pe <= 1.0, "mu_parameter: eps_PE outside (0,1]");
    const double n_k = 2.0 * n_half;
    return std::sqrt((n_half - r_k + 1.0) * std::log(1.0 / eps_pe) / (r_k * n_k));
}

double hoeffding_tail(double deviation, double trials) {
    if (!(deviation > 0.0) || !(trials > 0.0)) return 1.0;
    return std::clamp(std::exp(-deviation * deviation * trials), 0.0, 1.0);
}

}  // namespace mdiqds
