#pragma once

#include "ostop/markov_chain.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace ostop {

/// (rho P)^steps h. rho = 1 gives the plain semigroup.
std::vector<double> semigroup_steps(const MarkovChainModel& chain, std::span<const double> h, std::size_t steps,
                                    double rho = 1.0);

/// P_t h with t a multiple of the chain step.
std::vector<double> semigroup_apply(const MarkovChainModel& chain, std::span<const double> h, double t);

/// P_t 1: probability of not having been killed by time t.
std::vector<double> survival(const MarkovChainModel& chain, double t);

/// R_lambda h = step * sum_k exp(-lambda k step) P^k h, via a sparse LU solve of
/// (I - exp(-lambda step) P) R = step h. lambda = 0 needs a transient chain.
std::vector<double> potential_apply(const MarkovChainModel& chain, std::span<const double> h, double lambda);

/// Per-step discount factor exp(-lambda step).
double discount_factor(const MarkovChainModel& chain, double lambda);

}  // namespace ostop
