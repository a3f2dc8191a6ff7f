#pragma once

#include <cstdint>

namespace mdiqds {

/**
 * Base-2 logarithm of a nonnegative quantity.
 *
 * Sums such as the number of strings within Hamming distance r of a fixed
 * n-bit string overflow (or their probabilities underflow) long before the
 * block lengths used here, so they are carried as log2 values and only
 * converted at report time.
 */
struct LogProb {
    double log2_value = 0.0;
    bool is_zero = false;
    // true when the value is an upper bound (entropy exponent) rather than
    // an exact sum
    bool is_bound = false;

    static LogProb zero() { return {0.0, true, false}; }
    static LogProb from_linear(double x);

    /// exp2(log2_value), or 0 for the zero element. May overflow to inf.
    [[nodiscard]] double linear() const;
};

/// log2(2^a + 2^b) without overflow.
LogProb log2_add(LogProb a, LogProb b);

/// h(p) = -p log2 p - (1-p) log2 (1-p), with 0 log2 0 = 0.
double binary_entropy(double p);

/// The p in [0, 1/2] with h(p) = y, by bisection to 1e-12.
double inverse_binary_entropy(double y);

/// Block size above which binomial_tail_log2 returns n*h(r/n) instead of
/// summing terms.
inline constexpr std::uint64_t kExactBinomialLimit = 10000;

/**
 * log2 of sum_{m=0}^{r} C(n, m).
 *
 * Exact (log-gamma, log-sum-exp) for n <= kExactBinomialLimit; above that
 * the entropy-exponent bound n*h(r/n) (or n for r > n/2) is returned with
 * is_bound set.
 */
LogProb binomial_tail_log2(std::uint64_t n, std::uint64_t r);

/// Always sums exactly, whatever n is.
LogProb binomial_tail_log2_exact(std::uint64_t n, std::uint64_t r);

/// log2 C(n, k) via lgamma.
double log2_binomial(double n, double k);

/// g(x, y) = sqrt(2 x ln(1/y)).
double chernoff_delta(double x, double y);

/// Lambda(x, y, z) = sqrt((x - y + 1) ln(1/z) / (2 x y)); sampling y of x.
double serfling_lambda(double x, double y, double z);

/// Upsilon(x, y, z) = sqrt((x + 1) ln(1/z) / (2 y (x + y))).
double upsilon(double x, double y, double z);

/**
 * Finite-sample gap between the observed and true error rate when R_k of the
 * bits are disclosed: sqrt((n_k/2 - R_k + 1) ln(1/eps) / (R_k n_k)) with
 * n_k = 2 n_half. The denominator is R_k * n_k, not R_k * n_half.
 */
double mu_parameter(double n_half, double r_k, double eps_pe);

/// exp(-deviation^2 * trials), clamped to [0, 1].
double hoeffding_tail(double deviation, double trials);

}  // namespace mdiqds
