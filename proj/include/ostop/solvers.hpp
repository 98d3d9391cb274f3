#pragma once

#include "ostop/grid.hpp"
#include "ostop/stopping_problem.hpp"
#include "ostop/tolerances.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace ostop {

struct SolverOptions {
    unsigned threads = 1;
    double fixed_point_tol = tol::fixed_point;
    std::size_t max_iter = tol::fixed_point_max_iter;
};

/// Discrete reflected solution. Finite horizon: Y has N+1 rows, dK has N.
/// Infinite horizon: both hold the single stationary row.
struct RBSDESolution {
    Grid Y;
    Grid dK;
    double residual = 0.0;            ///< worst implicit-step residual
    bool infinite = false;
    std::size_t effective_steps = 0;  ///< infinite horizon: fixed-point iterations used
    double fixed_point_error = 0.0;   ///< infinite horizon: a-posteriori error estimate
};

/// Ytilde_k = rho P Y_{k+1} + dt f(Ytilde_k) without reflection; finite horizon only.
Grid solve_bsde(const StoppingProblem& p, const SolverOptions& opts = {});

/// Ytilde_k = rho P Y_{k+1} + dt f(Ytilde_k), Y_k = max(g, Ytilde_k), dK_k = Y_k - Ytilde_k.
/// Infinite horizon: fixed point of the one-step map started from 0.
RBSDESolution solve_rbsde(const StoppingProblem& p, const SolverOptions& opts = {});

/// Step-and-state penalty weight eta(k, s) in (0, 1].
using PenaltyWeight = std::function<double(std::size_t step, std::size_t state)>;

/// Unreflected solve with driver f + n eta (y - g)^-. Infinite horizon runs a
/// finite backward sweep over the horizon where the chain's surviving mass
/// falls below tol::survival_floor (or `infinite_steps` when nonzero).
Grid solve_penalized(const StoppingProblem& p, double n, const PenaltyWeight& eta = {},
                     const SolverOptions& opts = {}, std::size_t infinite_steps = 0);

/// E^f_{k,m}(xi): backward solve without obstacle from step m to step k.
std::vector<double> nonlinear_expectation(const StoppingProblem& p, std::size_t from_step, std::size_t to_step,
                                          const std::vector<double>& xi, const SolverOptions& opts = {});

/// Y_0 of the reflected solution, by a sweep that keeps one row.
std::vector<double> snell_value(const StoppingProblem& p, const SolverOptions& opts = {});

struct StoppingRule {
    std::size_t n_steps = 0;
    std::size_t n_states = 0;
    std::vector<unsigned char> stop;  ///< (N+1) x n_states, row-major
    std::string description;

    bool stops(std::size_t k, std::size_t s) const { return stop[k * n_states + s] != 0; }
};

/// sigma_eps: stop at the first (k, s) with Y_k(s) <= g(s) + eps; always at N.
StoppingRule epsilon_optimal_time(const RBSDESolution& sol, const StoppingProblem& p, double eps);

/// Stopped f-expectation E^f_{0,sigma}(g(X_sigma) 1{sigma < N} + phi(X_N) 1{sigma = N}).
std::vector<double> evaluate_stopping_rule(const StoppingProblem& p, const StoppingRule& rule,
                                           const SolverOptions& opts = {});

struct InvariantReport {
    bool ok = true;
    std::string message;
};

/// Reflection, minimality, dK >= 0 and terminal row checks.
InvariantReport check_invariants(const RBSDESolution& sol, const StoppingProblem& p);

struct DiscountTransformReport {
    std::vector<double> scaled_data;    ///< Y_0 with exp(-lambda t) data and driver exp(-lambda t) f(exp(lambda t) y)
    std::vector<double> discounted;     ///< Y_0 of the discounted solve
    double max_difference = 0.0;
    std::vector<double> backward_euler;  ///< Y_0 with f - lambda y inside the implicit step
    double backward_euler_gap = 0.0;     ///< O(dt) discretization difference, diagnostic only
    bool passed = false;                 ///< max_difference <= tol::equality
};

/// Solves the discounted problem two independent ways and compares. Finite horizon.
DiscountTransformReport discount_transform_check(const StoppingProblem& p, const SolverOptions& opts = {});

}  // namespace ostop
