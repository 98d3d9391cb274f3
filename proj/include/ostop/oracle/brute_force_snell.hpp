#pragma once

#include "ostop/stopping_problem.hpp"

#include <cstddef>
#include <vector>

namespace ostop::oracle {

/// Node of the history tree from x0: one per path prefix with positive probability.
struct HistoryNode {
    std::size_t state = 0;
    std::size_t step = 0;
    std::size_t parent = 0;  ///< self for the root
    double prob = 1.0;       ///< transition probability from the parent
    std::vector<std::size_t> children;
};

struct BruteForceResult {
    double value = 0.0;
    double rules_enumerated = 0.0;
    std::vector<HistoryNode> nodes;
    std::vector<unsigned char> stop;  ///< optimal rule: 1 where it stops (nodes past a stop are 0); leaves count as stops
};

struct BruteForceLimits {
    std::size_t max_steps = 4;
    std::size_t max_reachable_states = 8;
    double max_rules = 4'194'304.0;
};

/// Enumerates every adapted stopping rule on the history tree of x0 (a stop or
/// continue decision at each node, forced stop at N), values each by composing
/// one-step f-expectations, and returns the best. Throws InstanceTooLarge.
BruteForceResult brute_force_snell(const StoppingProblem& p, std::size_t x0, const BruteForceLimits& limits = {});

/// Number of distinct stopping rules on the history tree of x0.
double count_stopping_rules(const StoppingProblem& p, std::size_t x0);

}  // namespace ostop::oracle
