#pragma once

#include "ostop/exp_levy.hpp"
#include "ostop/stopping_problem.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace ostop {

/// Upper bound on |V_T(x) - V(x)| split into its three additive terms.
struct RateBound {
    double terminal = 0.0;
    double driver = 0.0;
    double obstacle_tail = 0.0;
    double total = 0.0;
    std::string terminal_method;
    std::string driver_method;
    std::string tail_method;
};

/// Chain version: terminal = (rho P)^N |phi|, driver = (rho P)^N R_lambda |f(., 0)|,
/// tail = ||g||_inf (rho P)^N 1, all at state x. N is the horizon in steps.
RateBound rate_bound(const StoppingProblem& p, std::size_t x, std::size_t n_steps);

/// Exp-Levy version for payoffs with the given growth class. Bounded:
/// 2 e^{-rT} ||psi||_inf. Linear growth |psi(x)| <= K(1 + |x|): each of the
/// terminal and tail terms is K(e^{-rT} + sum_i x_i e^{-delta_i T}).
RateBound exp_levy_rate_bound(const ExpLevyModel& m, GrowthClass cls, double constant, double T);

struct StableNorms {
    double terminal_l1 = 0.0;  ///< ||phi||_{L^1}
    double driver_l1 = 0.0;    ///< ||f(., 0)||_{L^1}
    double obstacle_sup = 0.0; ///< ||g||_inf
};

/// C T^{-d/alpha} (||phi||_1 + m(D)^{alpha/d} ||f(.,0)||_1 + m(D) ||g||_inf),
/// C = heat_kernel_constant(alpha, d) * max(1, calibrated_exit_constant(alpha, d)).
double stable_rate_bound(double alpha, std::size_t d, double domain_measure, const StableNorms& norms, double T);

struct StabilityGap {
    double lhs = 0.0;        ///< max_k E_x |Y1_k - Y2_k| over grid times
    double lhs_stopping = 0.0;  ///< sup over stopping times of E_x |Y1_tau - Y2_tau|
    double rhs = 0.0;        ///< driver term + stopping-time sup of the obstacle/terminal differences
    double rhs_driver = 0.0;
    double rhs_obstacle = 0.0;
    double rhs_deterministic = 0.0;  ///< terminal + driver + max over grid times of E|g1 - g2|; diagnostic
    bool ok = false;          ///< lhs <= lhs_stopping <= rhs, up to 1e-10
};

/// Stability of the reflected solution under perturbation of (phi, f, g).
/// Expectations are taken under the discounted chain rho P. The driver
/// difference is evaluated along problem 2's pre-reflection values.
StabilityGap stability_gap(const StoppingProblem& p1, const StoppingProblem& p2, std::size_t x);

struct TruncationGap {
    double lhs = 0.0;
    double rhs = 0.0;
    double rhs_terminal = 0.0;
    double rhs_driver = 0.0;
    double rhs_obstacle = 0.0;
    std::size_t steps_examined = 0;
    bool ok = false;  ///< lhs <= rhs + 1e-10
};

/// Finite-horizon solution (extended by 0 after N) against the infinite-horizon
/// one, for a finite-horizon problem on a killed or discounted chain.
TruncationGap horizon_truncation_gap(const StoppingProblem& p, std::size_t x);

struct ConvergenceRow {
    double T = 0.0;
    double V_T = 0.0;
    double V = 0.0;
    double gap = 0.0;
    RateBound bound;
    double slack = 0.0;
    double extra_bound = -1.0;  ///< optional second bound, < 0 when absent
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    double tolerance = 0.0;
    double decay_exponent = 0.0;  ///< NaN when not fitted
    bool ok = false;
    std::string failure;
};

struct ConvergenceOptions {
    std::function<double(double T)> extra_bound;
    bool fit_exponent = false;
    double tolerance = 1e-10;
    double fixed_point_tol = 1e-13;
};

/// V_T for each horizon (in steps) against the infinite-horizon V at state x.
ConvergenceTable convergence_study(const StoppingProblem& p, const std::vector<std::size_t>& horizons,
                                   std::size_t x, const ConvergenceOptions& opts = {});

/// Least-squares slope of log y against log x over the last half of the points.
double fit_decay_exponent(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace ostop
