#pragma once

#include "ostop/driver.hpp"
#include "ostop/markov_chain.hpp"

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

namespace ostop {

/// Data of a Markovian stopping problem on a chain: driver f, obstacle g,
/// terminal payoff phi, horizon N steps (nullopt: infinite) and discount rate.
/// An empty obstacle means no reflection; an empty terminal means phi = 0.
struct StoppingProblem {
    std::shared_ptr<const MarkovChainModel> chain;
    std::optional<std::size_t> n_steps;
    Driver driver;
    std::vector<double> obstacle;
    std::vector<double> terminal;
    double discount = 0.0;

    bool infinite() const noexcept { return !n_steps.has_value(); }
    bool has_obstacle() const noexcept { return !obstacle.empty(); }
    std::size_t size() const { return chain->size(); }
    double step() const { return chain->step(); }
    double g(std::size_t s) const { return obstacle[s]; }
    double phi(std::size_t s) const { return terminal.empty() ? 0.0 : terminal[s]; }
    /// exp(-discount * step).
    double rho() const;
};

/// Checks the standing hypotheses and throws HypothesisViolation naming the
/// failed one: "H2" (sampled monotonicity of f), "B1" (g <= phi at maturity),
/// "B2" (infinite horizon needs phi = 0 and a killed or discounted chain).
void validate(const StoppingProblem& p);

/// Same problem with a different horizon.
StoppingProblem with_horizon(const StoppingProblem& p, std::optional<std::size_t> n_steps);

}  // namespace ostop
