#include "ostop/solvers.hpp"

#include "ostop/errors.hpp"
#include "ostop/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace ostop {

namespace {

/// ytilde = root of y - dt f(y) = rho (P next)(s), per state. Returns the worst residual.
double continuation(const StoppingProblem& p, std::span<const double> next, std::span<double> ytilde,
                    std::vector<double>& buf, std::vector<double>& res, unsigned threads) {
    const std::size_t n = p.size();
    buf.resize(n);
    res.resize(n);
    p.chain->kernel().apply(next, buf, p.rho());
    const double dt = p.step();
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) ytilde[s] = p.driver.implicit_step(s, buf[s], dt, 1.0, &res[s]);
    });
    return *std::max_element(res.begin(), res.end());
}

void reflect(const StoppingProblem& p, std::span<const double> ytilde, std::span<double> y, std::span<double> dk) {
    for (std::size_t s = 0; s < ytilde.size(); ++s) {
        if (p.has_obstacle() && p.g(s) > ytilde[s]) {
            y[s] = p.g(s);
            if (!dk.empty()) dk[s] = p.g(s) - ytilde[s];
        } else {
            y[s] = ytilde[s];
            if (!dk.empty()) dk[s] = 0.0;
        }
    }
}

std::size_t finite_steps(const StoppingProblem& p, const char* who) {
    if (p.infinite()) throw std::invalid_argument(std::string(who) + " needs a finite horizon");
    return *p.n_steps;
}

std::vector<double> terminal_row(const StoppingProblem& p) {
    std::vector<double> t(p.size());
    for (std::size_t s = 0; s < t.size(); ++s) t[s] = p.phi(s);
    return t;
}

}  // namespace

Grid solve_bsde(const StoppingProblem& p, const SolverOptions& opts) {
    validate(p);
    const std::size_t N = finite_steps(p, "solve_bsde");
    Grid Y(N + 1, p.size());
    auto last = terminal_row(p);
    std::copy(last.begin(), last.end(), Y.row(N).begin());
    std::vector<double> buf, res;
    for (std::size_t k = N; k-- > 0;) continuation(p, Y.row(k + 1), Y.row(k), buf, res, opts.threads);
    return Y;
}

RBSDESolution solve_rbsde(const StoppingProblem& p, const SolverOptions& opts) {
    validate(p);
    const std::size_t n = p.size();
    RBSDESolution sol;
    std::vector<double> buf, res, ytilde(n);
    if (!p.infinite()) {
        const std::size_t N = *p.n_steps;
        sol.Y = Grid(N + 1, n);
        sol.dK = Grid(N, n);
        auto last = terminal_row(p);
        std::copy(last.begin(), last.end(), sol.Y.row(N).begin());
        for (std::size_t k = N; k-- > 0;) {
            sol.residual = std::max(sol.residual, continuation(p, sol.Y.row(k + 1), ytilde, buf, res, opts.threads));
            reflect(p, ytilde, sol.Y.row(k), sol.dK.row(k));
        }
        return sol;
    }

    sol.infinite = true;
    std::vector<double> cur(n, 0.0), next(n), dk(n);
    std::deque<double> recent;
    bool converged = false;
    std::size_t it = 0;
    while (it < opts.max_iter) {
        ++it;
        sol.residual = std::max(sol.residual, continuation(p, cur, ytilde, buf, res, opts.threads));
        reflect(p, ytilde, next, dk);
        double d = 0.0;
        for (std::size_t s = 0; s < n; ++s) d = std::max(d, std::abs(next[s] - cur[s]));
        cur.swap(next);
        if (d == 0.0) {
            sol.fixed_point_error = 0.0;
            converged = true;
            break;
        }
        recent.push_back(d);
        if (recent.size() > 20) recent.pop_front();
        if (recent.size() >= 3) {
            double q = 0.0;
            for (std::size_t j = 1; j < recent.size(); ++j) q = std::max(q, recent[j] / recent[j - 1]);
            if (q < 1.0) {
                const double err = d * q / (1.0 - q);
                if (err <= opts.fixed_point_tol) {
                    sol.fixed_point_error = err;
                    converged = true;
                    break;
                }
            }
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "infinite-horizon fixed point did not reach " << opts.fixed_point_tol << " within " << opts.max_iter
            << " iterations (last change " << (recent.empty() ? 0.0 : recent.back()) << ")";
        throw ConvergenceFailure(msg.str());
    }
    sol.effective_steps = it;
    sol.Y = Grid(1, n);
    sol.dK = Grid(1, n);
    // Stationary increment: one more application from the fixed point.
    continuation(p, cur, ytilde, buf, res, opts.threads);
    reflect(p, ytilde, sol.Y.row(0), sol.dK.row(0));
    return sol;
}

Grid solve_penalized(const StoppingProblem& p, double n_pen, const PenaltyWeight& eta, const SolverOptions& opts,
                     std::size_t infinite_steps) {
    validate(p);
    if (!(n_pen >= 0.0)) throw std::invalid_argument("penalty level must be nonnegative");
    const std::size_t n = p.size();
    std::size_t N = 0;
    if (p.infinite()) {
        N = infinite_steps;
        if (N == 0) {
            std::vector<double> v(n, 1.0), w(n);
            const double rho = p.rho();
            while (*std::max_element(v.begin(), v.end()) > tol::survival_floor) {
                if (++N > opts.max_iter) throw ConvergenceFailure("penalized solve: surviving mass does not vanish");
                p.chain->kernel().apply(v, w, rho);
                v.swap(w);
            }
        }
    } else {
        N = *p.n_steps;
    }
    const double dt = p.step();
    Grid Y(N + 1, n);
    auto last = terminal_row(p);
    std::copy(last.begin(), last.end(), Y.row(N).begin());
    std::vector<double> buf(n);
    for (std::size_t k = N; k-- > 0;) {
        p.chain->kernel().apply(Y.row(k + 1), buf, p.rho());
        auto row = Y.row(k);
        parallel_for(n, opts.threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t s = lo; s < hi; ++s) {
                const double b = buf[s];
                if (!p.has_obstacle() || n_pen == 0.0) {
                    row[s] = p.driver.implicit_step(s, b, dt);
                    continue;
                }
                const double e = eta ? eta(k, s) : 1.0;
                if (!(e > 0.0 && e <= 1.0)) {
                    std::ostringstream msg;
                    msg << "penalty weight eta(" << k << ", " << s << ") = " << e << " is outside (0, 1]";
                    throw std::invalid_argument(msg.str());
                }
                const double g = p.g(s);
                // y - dt f(y) - dt n eta (y - g)^- = b is increasing in y; pick the branch holding the root.
                if (g - dt * p.driver(s, g) - b <= 0.0) {
                    row[s] = p.driver.implicit_step(s, b, dt);
                } else {
                    const double w = dt * n_pen * e;
                    row[s] = p.driver.implicit_step(s, b + w * g, dt, 1.0 + w);
                }
            }
        });
    }
    return Y;
}

std::vector<double> nonlinear_expectation(const StoppingProblem& p, std::size_t from_step, std::size_t to_step,
                                          const std::vector<double>& xi, const SolverOptions& opts) {
    if (from_step > to_step) throw std::invalid_argument("nonlinear_expectation: need from_step <= to_step");
    if (!p.infinite() && to_step > *p.n_steps)
        throw std::invalid_argument("nonlinear_expectation: to_step beyond the horizon");
    if (xi.size() != p.size()) throw std::invalid_argument("nonlinear_expectation: payoff size mismatch");
    std::vector<double> cur = xi, next(p.size()), buf, res;
    for (std::size_t k = to_step; k > from_step; --k) {
        continuation(p, cur, next, buf, res, opts.threads);
        cur.swap(next);
    }
    return cur;
}

std::vector<double> snell_value(const StoppingProblem& p, const SolverOptions& opts) {
    if (p.infinite()) {
        auto sol = solve_rbsde(p, opts);
        auto r = sol.Y.row(0);
        return {r.begin(), r.end()};
    }
    validate(p);
    const std::size_t n = p.size();
    std::vector<double> cur = terminal_row(p), ytilde(n), buf, res;
    for (std::size_t k = *p.n_steps; k-- > 0;) {
        continuation(p, cur, ytilde, buf, res, opts.threads);
        reflect(p, ytilde, cur, {});
    }
    return cur;
}

StoppingRule epsilon_optimal_time(const RBSDESolution& sol, const StoppingProblem& p, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (sol.infinite || p.infinite()) throw std::invalid_argument("epsilon_optimal_time needs a finite horizon");
    if (!p.has_obstacle()) throw std::invalid_argument("epsilon_optimal_time needs an obstacle");
    const std::size_t N = *p.n_steps;
    StoppingRule rule;
    rule.n_steps = N;
    rule.n_states = p.size();
    rule.stop.assign((N + 1) * p.size(), 0);
    std::ostringstream d;
    d << "threshold sigma_eps, eps = " << eps;
    rule.description = d.str();
    for (std::size_t k = 0; k <= N; ++k)
        for (std::size_t s = 0; s < p.size(); ++s)
            rule.stop[k * p.size() + s] = (k == N || sol.Y(k, s) <= p.g(s) + eps) ? 1 : 0;
    return rule;
}

std::vector<double> evaluate_stopping_rule(const StoppingProblem& p, const StoppingRule& rule,
                                           const SolverOptions& opts) {
    const std::size_t N = finite_steps(p, "evaluate_stopping_rule");
    if (rule.n_steps != N || rule.n_states != p.size()) throw std::invalid_argument("rule does not match problem");
    const std::size_t n = p.size();
    std::vector<double> cur = terminal_row(p), next(n), buf, res;
    for (std::size_t k = N; k-- > 0;) {
        continuation(p, cur, next, buf, res, opts.threads);
        for (std::size_t s = 0; s < n; ++s)
            if (rule.stops(k, s)) next[s] = p.g(s);
        cur.swap(next);
    }
    return cur;
}

InvariantReport check_invariants(const RBSDESolution& sol, const StoppingProblem& p) {
    InvariantReport rep;
    auto fail = [&](std::size_t k, std::size_t s, const std::string& what) {
        if (!rep.ok) return;
        std::ostringstream msg;
        msg << what << " at step " << k << ", state " << s;
        rep.ok = false;
        rep.message = msg.str();
    };
    for (std::size_t k = 0; k < sol.Y.rows(); ++k)
        for (std::size_t s = 0; s < sol.Y.cols(); ++s) {
            if (p.has_obstacle() && sol.Y(k, s) < p.g(s) - tol::reflection) fail(k, s, "reflection Y >= g violated");
            if (k < sol.dK.rows()) {
                const double dk = sol.dK(k, s);
                if (dk < 0.0) fail(k, s, "dK < 0");
                if (dk > tol::reflection_active && std::abs(sol.Y(k, s) - p.g(s)) > tol::minimality)
                    fail(k, s, "minimality violated: dK > 0 away from the obstacle");
            }
        }
    if (!sol.infinite && !p.infinite())
        for (std::size_t s = 0; s < p.size(); ++s)
            if (sol.Y(sol.Y.rows() - 1, s) != p.phi(s)) fail(sol.Y.rows() - 1, s, "terminal row differs from phi");
    return rep;
}

DiscountTransformReport discount_transform_check(const StoppingProblem& p, const SolverOptions& opts) {
    validate(p);
    const std::size_t N = finite_steps(p, "discount_transform_check");
    const std::size_t n = p.size();
    const double lambda = p.discount;
    const double dt = p.step();
    DiscountTransformReport rep;

    // (a) undiscounted chain, exp(-lambda t)-scaled data and driver.
    std::vector<double> cur(n), ytilde(n), buf(n);
    const double scale_T = std::exp(-lambda * dt * static_cast<double>(N));
    for (std::size_t s = 0; s < n; ++s) cur[s] = scale_T * p.phi(s);
    for (std::size_t k = N; k-- > 0;) {
        const double t = dt * static_cast<double>(k);
        const double down = std::exp(-lambda * t);
        const double up = std::exp(lambda * t);
        const Driver scaled = p.driver.is_zero() ? Driver::zero()
                                                 : Driver::custom("scaled", [&](std::size_t s, double y) {
                                                       return down * p.driver(s, up * y);
                                                   });
        p.chain->kernel().apply(cur, buf);
        for (std::size_t s = 0; s < n; ++s) {
            double y = scaled.implicit_step(s, buf[s], dt);
            if (p.has_obstacle()) y = std::max(y, down * p.g(s));
            ytilde[s] = y;
        }
        cur.swap(ytilde);
    }
    rep.scaled_data = cur;

    // (b) discounted solve.
    if (p.has_obstacle()) {
        rep.discounted = snell_value(p, opts);
    } else {
        auto Y = solve_bsde(p, opts);
        rep.discounted.assign(Y.row(0).begin(), Y.row(0).end());
    }
    for (std::size_t s = 0; s < n; ++s)
        rep.max_difference = std::max(rep.max_difference, std::abs(rep.scaled_data[s] - rep.discounted[s]));
    rep.passed = rep.max_difference <= tol::equality;

    // Diagnostic: -lambda y folded into the implicit driver step.
    StoppingProblem be = p;
    be.discount = 0.0;
    if (lambda > 0.0)
        be.driver = Driver::custom("backward-euler", [&p, lambda](std::size_t s, double y) {
            return p.driver(s, y) - lambda * y;
        });
    if (p.has_obstacle()) {
        rep.backward_euler = snell_value(be, opts);
    } else {
        auto Y = solve_bsde(be, opts);
        rep.backward_euler.assign(Y.row(0).begin(), Y.row(0).end());
    }
    for (std::size_t s = 0; s < n; ++s)
        rep.backward_euler_gap = std::max(rep.backward_euler_gap, std::abs(rep.backward_euler[s] - rep.discounted[s]));
    return rep;
}

}  // namespace ostop
