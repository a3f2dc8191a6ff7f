#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "mdiqds/linear_program.hpp"
#include "mdiqds/photon_channel.hpp"

namespace oracle {

/// log2 of sum_{m<=r} C(n, m) with exact big-integer arithmetic.
double binomial_sum_log2(unsigned n, unsigned r);

/// sum_{m<=r} C(n, m) by enumerating all 2^n strings; n <= 24.
std::uint64_t hamming_ball_by_enumeration(unsigned n, unsigned r);

/// Output occupation -> probability via permanents of the mode-transfer
/// matrix. Input counts are (state 0, state 1) per party in its basis.
std::map<mdiqds::ModeOccupation, double> fock_distribution(mdiqds::Basis alice_basis, std::array<int, 2> alice,
                                                           mdiqds::Basis peer_basis, std::array<int, 2> peer);

/// Probability of each click pattern (bit j = output mode j fired) for one
/// photon per party, threshold detectors firing independently with
/// probability 1 - (1 - eta)^n (1 - y0).
std::array<double, 16> click_pattern_distribution(mdiqds::Basis alice_basis, int alice_bit, mdiqds::Basis peer_basis,
                                                  int peer_bit, double eta, double y0);

/// Best vertex of a bounded LP over x >= 0; `feasible` false if none.
struct VertexOptimum {
    bool feasible = false;
    double objective = 0.0;
};
VertexOptimum best_vertex(const mdiqds::LinearProgram& lp, bool maximize);

double binomial_pmf(unsigned n, unsigned k, double p);
double hypergeometric_pmf(unsigned population, unsigned successes, unsigned draws, unsigned k);

/// P(count < threshold * L / 2) for count ~ Bin(L/2, p).
double accept_probability(unsigned L, double p, double threshold);

/// Outcome probabilities of the honest run over binary symmetric channels
/// with error rate e, R disclosed bits per session and p_E fixed.
struct HonestExact {
    double bob_rejected = 0.0;
    double charlie_rejected = 0.0;
    double transferred = 0.0;
    double infeasible = 0.0;
};
HonestExact honest_run_exact(unsigned L, unsigned R, double e, double eps_pe, double p_E);

/// Probability that planted-error Alice makes Bob accept at s_a while
/// Charlie rejects at s_v.
double repudiation_exact(unsigned L, unsigned w_b, unsigned w_c, double s_a, double s_v);

/// Probability that a uniformly random half of L/2 bits has fewer than
/// s_v L / 2 mismatches, by enumeration; L <= 40.
double random_guess_exact(unsigned L, double s_v);

}  // namespace oracle
