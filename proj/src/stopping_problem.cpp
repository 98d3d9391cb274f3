#include "ostop/stopping_problem.hpp"

#include "ostop/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ostop {

double StoppingProblem::rho() const { return std::exp(-discount * step()); }

void validate(const StoppingProblem& p) {
    if (!p.chain) throw std::invalid_argument("stopping problem has no chain");
    const std::size_t n = p.size();
    if (!p.obstacle.empty() && p.obstacle.size() != n)
        throw std::invalid_argument("obstacle must have one value per state");
    if (!p.terminal.empty() && p.terminal.size() != n)
        throw std::invalid_argument("terminal payoff must have one value per state");
    if (!(p.discount >= 0.0)) throw std::invalid_argument("discount rate must be nonnegative");
    for (double v : p.obstacle)
        if (!std::isfinite(v)) throw std::invalid_argument("obstacle values must be finite");
    for (double v : p.terminal)
        if (!std::isfinite(v)) throw std::invalid_argument("terminal values must be finite");

    double scale = 1.0;
    for (double v : p.obstacle) scale = std::max(scale, std::abs(v));
    for (double v : p.terminal) scale = std::max(scale, std::abs(v));
    std::vector<double> ys;
    constexpr int kPoints = 64;
    for (int i = -kPoints; i <= kPoints; ++i) ys.push_back(4.0 * scale * i / kPoints);
    p.driver.check_monotone(n, ys);

    if (p.infinite()) {
        for (std::size_t s = 0; s < p.terminal.size(); ++s)
            if (p.terminal[s] != 0.0)
                throw HypothesisViolation("B2", "infinite horizon requires a zero terminal payoff");
        if (p.discount == 0.0 && !p.chain->is_transient())
            throw HypothesisViolation("B2",
                                      "infinite horizon requires a killed chain (every state must reach the "
                                      "cemetery) or a positive discount rate");
        return;
    }
    if (p.has_obstacle()) {
        for (std::size_t s = 0; s < n; ++s)
            if (p.obstacle[s] > p.phi(s)) {
                std::ostringstream msg;
                msg << "obstacle exceeds terminal payoff at state " << s << ": g = " << p.obstacle[s]
                    << " > phi = " << p.phi(s) << "; need g(X_T) <= phi(X_T)";
                throw HypothesisViolation("B1", msg.str());
            }
    }
}

StoppingProblem with_horizon(const StoppingProblem& p, std::optional<std::size_t> n_steps) {
    StoppingProblem q = p;
    q.n_steps = n_steps;
    return q;
}

}  // namespace ostop
