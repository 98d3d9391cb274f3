#pragma once

#include "ostop/driver.hpp"
#include "ostop/stopping_problem.hpp"

#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace ostop {

/// Random substochastic chain on n states: each row has between 1 and
/// `max_successors` distinct successors and loses mass kill ~ U[kill_min, kill_max].
struct RandomChainSpec {
    std::size_t n_states = 20;
    std::size_t max_successors = 4;
    double kill_min = 0.0;
    double kill_max = 0.0;
    double dt = 0.1;
};

std::shared_ptr<const MarkovChainModel> random_chain(const RandomChainSpec& spec, std::mt19937_64& rng);

/// Driver family with parameters kept around so it can be perturbed.
struct RandomDriverSpec {
    std::string kind = "zero";  ///< zero, linear, soft-clip, table
    double a = 0.0;
    double b = 1.0;
    std::vector<double> intercept;
    std::vector<double> slope;

    Driver build() const;
};

RandomDriverSpec random_driver(const std::string& kind, std::size_t n_states, std::mt19937_64& rng);

/// Obstacle ~ U[-1, 1], terminal = max(g, U[-1, 1]) so g <= phi holds.
StoppingProblem random_problem(std::shared_ptr<const MarkovChainModel> chain, std::size_t n_steps,
                               const RandomDriverSpec& driver, std::mt19937_64& rng);

/// Same chain and horizon, obstacle, terminal and driver data moved by at most `scale`.
StoppingProblem perturb_problem(const StoppingProblem& p, const RandomDriverSpec& driver, double scale,
                                std::mt19937_64& rng, RandomDriverSpec* perturbed = nullptr);

}  // namespace ostop
