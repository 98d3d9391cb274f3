#include "ostop/asymptotics.hpp"

#include "ostop/errors.hpp"
#include "ostop/operators.hpp"
#include "ostop/solvers.hpp"
#include "ostop/stable.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ostop {

namespace {

double apply_at(const StoppingProblem& p, std::span<const double> h, std::size_t steps, std::size_t x) {
    return semigroup_steps(*p.chain, h, steps, p.rho())[x];
}

std::vector<double> abs_vec(std::span<const double> v) {
    std::vector<double> a(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::abs(v[i]);
    return a;
}

std::vector<double> abs_driver_at_zero(const StoppingProblem& p) {
    std::vector<double> f0(p.size());
    for (std::size_t s = 0; s < f0.size(); ++s) f0[s] = std::abs(p.driver(s, 0.0));
    return f0;
}

std::vector<double> terminal_vec(const StoppingProblem& p) {
    std::vector<double> t(p.size());
    for (std::size_t s = 0; s < t.size(); ++s) t[s] = p.phi(s);
    return t;
}

/// Infinite-horizon value of stopping |g| with zero driver: sup_tau E (rho P)-|g|(X_tau).
std::vector<double> abs_obstacle_envelope(const StoppingProblem& p, double tol) {
    if (!p.has_obstacle()) return std::vector<double>(p.size(), 0.0);
    StoppingProblem u;
    u.chain = p.chain;
    u.discount = p.discount;
    u.obstacle = abs_vec(p.obstacle);
    SolverOptions o;
    o.fixed_point_tol = tol;
    return snell_value(u, o);
}

}  // namespace

RateBound rate_bound(const StoppingProblem& p, std::size_t x, std::size_t n_steps) {
    if (x >= p.size()) throw std::invalid_argument("rate_bound: state out of range");
    RateBound b;
    b.terminal = apply_at(p, abs_vec(terminal_vec(p)), n_steps, x);
    b.terminal_method = p.discount > 0.0 ? "discounted-semigroup" : "semigroup";
    const auto f0 = abs_driver_at_zero(p);
    if (std::all_of(f0.begin(), f0.end(), [](double v) { return v == 0.0; })) {
        b.driver = 0.0;
        b.driver_method = "zero-driver";
    } else {
        const auto r = potential_apply(*p.chain, f0, p.discount);
        b.driver = apply_at(p, r, n_steps, x);
        b.driver_method = "resolvent-then-semigroup";
    }
    double gsup = 0.0;
    for (double v : p.obstacle) gsup = std::max(gsup, std::abs(v));
    std::vector<double> one(p.size(), 1.0);
    b.obstacle_tail = gsup * apply_at(p, one, n_steps, x);
    b.tail_method = "bounded-g-survival";
    b.total = b.terminal + b.driver + b.obstacle_tail;
    return b;
}

RateBound exp_levy_rate_bound(const ExpLevyModel& m, GrowthClass cls, double constant, double T) {
    if (!(constant >= 0.0) || !(T >= 0.0)) throw std::invalid_argument("exp_levy_rate_bound: bad arguments");
    RateBound b;
    b.driver = 0.0;
    b.driver_method = "zero-driver";
    if (cls == GrowthClass::bounded) {
        b.terminal = std::exp(-m.rate() * T) * constant;
        b.obstacle_tail = b.terminal;
        b.terminal_method = "bounded-payoff";
        b.tail_method = "bounded-payoff";
    } else {
        double s = std::exp(-m.rate() * T);
        for (std::size_t i = 0; i < m.dim(); ++i) s += m.initial_prices()[i] * std::exp(-m.dividends()[i] * T);
        b.terminal = constant * s;
        b.obstacle_tail = constant * s;
        b.terminal_method = "dividend-supermartingale";
        b.tail_method = "dividend-supermartingale";
    }
    b.total = b.terminal + b.driver + b.obstacle_tail;
    return b;
}

double stable_rate_bound(double alpha, std::size_t d, double domain_measure, const StableNorms& norms, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("stable_rate_bound: T must be positive");
    if (!(domain_measure > 0.0)) throw std::invalid_argument("stable_rate_bound: domain measure must be positive");
    const double c = heat_kernel_constant(alpha, d) * std::max(1.0, calibrated_exit_constant(alpha, d));
    const double dd = static_cast<double>(d);
    return c * std::pow(T, -dd / alpha) *
           (norms.terminal_l1 + std::pow(domain_measure, alpha / dd) * norms.driver_l1 +
            domain_measure * norms.obstacle_sup);
}

StabilityGap stability_gap(const StoppingProblem& p1, const StoppingProblem& p2, std::size_t x) {
    if (p1.infinite() || p2.infinite() || *p1.n_steps != *p2.n_steps)
        throw std::invalid_argument("stability_gap: problems need the same finite horizon");
    if (p1.size() != p2.size() || p1.step() != p2.step() ||
        (p1.chain != p2.chain && p1.chain->kernel().nonzeros() != p2.chain->kernel().nonzeros()))
        throw std::invalid_argument("stability_gap: problems must share a chain");
    if (p1.discount != p2.discount) throw std::invalid_argument("stability_gap: problems must share the discount");
    if (p1.has_obstacle() != p2.has_obstacle())
        throw std::invalid_argument("stability_gap: both problems need an obstacle, or neither");
    if (x >= p1.size()) throw std::invalid_argument("stability_gap: state out of range");

    const std::size_t N = *p1.n_steps;
    const std::size_t n = p1.size();
    const auto s1 = solve_rbsde(p1);
    const auto s2 = solve_rbsde(p2);
    const auto& kernel = p1.chain->kernel();
    const double rho = p1.rho();
    const double dt = p1.step();

    StabilityGap out;
    std::vector<double> d(n), buf(n), env(n), acc(n, 0.0), w(n);
    // Backward sweeps: env = Snell envelope of |Y1 - Y2|, acc = discounted sum of driver differences,
    // w = Snell envelope of (|g1 - g2| before N, |phi1 - phi2| at N).
    for (std::size_t s = 0; s < n; ++s) {
        env[s] = std::abs(s1.Y(N, s) - s2.Y(N, s));
        w[s] = std::abs(p1.phi(s) - p2.phi(s));
    }
    for (std::size_t k = N; k-- > 0;) {
        kernel.apply(env, buf, rho);
        for (std::size_t s = 0; s < n; ++s) env[s] = std::max(std::abs(s1.Y(k, s) - s2.Y(k, s)), buf[s]);
        kernel.apply(acc, buf, rho);
        for (std::size_t s = 0; s < n; ++s) {
            const double y2 = s2.Y(k, s) - s2.dK(k, s);
            acc[s] = buf[s] + dt * std::abs(p1.driver(s, y2) - p2.driver(s, y2));
        }
        kernel.apply(w, buf, rho);
        for (std::size_t s = 0; s < n; ++s)
            w[s] = p1.has_obstacle() ? std::max(std::abs(p1.g(s) - p2.g(s)), buf[s]) : buf[s];
    }
    out.lhs_stopping = env[x];
    out.rhs_driver = acc[x];
    out.rhs_obstacle = w[x];
    out.rhs = out.rhs_driver + out.rhs_obstacle;

    // Forward in k: E_x |Y1_k - Y2_k| and E_x |g1 - g2|(X_k).
    std::vector<double> dist(n, 0.0);
    dist[x] = 1.0;
    double max_g = 0.0;
    std::vector<double> nd(n);
    for (std::size_t k = 0; k <= N; ++k) {
        double e = 0.0, eg = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            e += dist[s] * std::abs(s1.Y(k, s) - s2.Y(k, s));
            if (p1.has_obstacle() && k < N) eg += dist[s] * std::abs(p1.g(s) - p2.g(s));
        }
        out.lhs = std::max(out.lhs, e);
        max_g = std::max(max_g, eg);
        if (k == N) {
            double et = 0.0;
            for (std::size_t s = 0; s < n; ++s) et += dist[s] * std::abs(p1.phi(s) - p2.phi(s));
            out.rhs_deterministic = et + out.rhs_driver + max_g;
            break;
        }
        std::fill(nd.begin(), nd.end(), 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            if (dist[s] == 0.0) continue;
            auto cols = kernel.cols(s);
            auto vals = kernel.values(s);
            for (std::size_t q = 0; q < cols.size(); ++q) nd[cols[q]] += rho * dist[s] * vals[q];
        }
        dist.swap(nd);
    }
    out.ok = out.lhs <= out.lhs_stopping + 1e-12 && out.lhs_stopping <= out.rhs + 1e-10;
    return out;
}

TruncationGap horizon_truncation_gap(const StoppingProblem& p, std::size_t x) {
    if (p.infinite()) throw std::invalid_argument("horizon_truncation_gap: give the finite-horizon problem");
    if (x >= p.size()) throw std::invalid_argument("horizon_truncation_gap: state out of range");
    const std::size_t N = *p.n_steps;
    const std::size_t n = p.size();
    constexpr double kTol = 1e-13;

    StoppingProblem inf = with_horizon(p, std::nullopt);
    inf.terminal.clear();
    SolverOptions o;
    o.fixed_point_tol = kTol;
    const auto y2 = snell_value(inf, o);
    const auto s1 = solve_rbsde(p);
    const auto& kernel = p.chain->kernel();
    const double rho = p.rho();

    TruncationGap out;
    std::vector<double> dist(n, 0.0), nd(n);
    dist[x] = 1.0;
    double y2sup = 0.0;
    for (double v : y2) y2sup = std::max(y2sup, std::abs(v));
    std::size_t k = 0;
    for (;; ++k) {
        double e = 0.0, mass = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double y1 = k <= N ? s1.Y(k, s) : 0.0;
            e += dist[s] * std::abs(y1 - y2[s]);
            mass += dist[s];
        }
        out.lhs = std::max(out.lhs, e);
        if (k >= N && mass * y2sup <= 1e-16) break;
        if (k > N + tol::fixed_point_max_iter) throw ConvergenceFailure("horizon_truncation_gap: mass does not vanish");
        std::fill(nd.begin(), nd.end(), 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            if (dist[s] == 0.0) continue;
            auto cols = kernel.cols(s);
            auto vals = kernel.values(s);
            for (std::size_t q = 0; q < cols.size(); ++q) nd[cols[q]] += rho * dist[s] * vals[q];
        }
        dist.swap(nd);
    }
    out.steps_examined = k + 1;

    out.rhs_terminal = apply_at(p, abs_vec(terminal_vec(p)), N, x);
    const auto f0 = abs_driver_at_zero(p);
    if (std::any_of(f0.begin(), f0.end(), [](double v) { return v != 0.0; }))
        out.rhs_driver = apply_at(p, potential_apply(*p.chain, f0, p.discount), N, x);
    out.rhs_obstacle = apply_at(p, abs_obstacle_envelope(p, kTol), N, x);
    out.rhs = out.rhs_terminal + out.rhs_driver + out.rhs_obstacle;
    out.ok = out.lhs <= out.rhs + 1e-10;
    return out;
}

double fit_decay_exponent(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_decay_exponent: need >= 2 points");
    const std::size_t first = std::min(x.size() / 2, x.size() - 2);
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    double m = 0.0;
    for (std::size_t i = first; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0)) throw std::invalid_argument("fit_decay_exponent: values must be positive");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        m += 1.0;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

ConvergenceTable convergence_study(const StoppingProblem& p, const std::vector<std::size_t>& horizons,
                                   std::size_t x, const ConvergenceOptions& opts) {
    if (x >= p.size()) throw std::invalid_argument("convergence_study: state out of range");
    StoppingProblem inf = with_horizon(p, std::nullopt);
    inf.terminal.clear();
    SolverOptions so;
    so.fixed_point_tol = opts.fixed_point_tol;
    const double V = snell_value(inf, so)[x];

    ConvergenceTable table;
    table.tolerance = opts.tolerance;
    table.decay_exponent = std::numeric_limits<double>::quiet_NaN();
    table.ok = true;
    for (std::size_t N : horizons) {
        const auto q = with_horizon(p, N);
        ConvergenceRow row;
        row.T = static_cast<double>(N) * p.step();
        row.V_T = snell_value(q)[x];
        row.V = V;
        row.gap = std::abs(row.V_T - V);
        row.bound = rate_bound(q, x, N);
        row.slack = row.bound.total - row.gap;
        if (opts.extra_bound) row.extra_bound = opts.extra_bound(row.T);
        if (table.ok && row.slack < -opts.tolerance) {
            std::ostringstream msg;
            msg << "gap " << row.gap << " exceeds bound " << row.bound.total << " at T = " << row.T;
            table.ok = false;
            table.failure = msg.str();
        }
        if (table.ok && row.extra_bound >= 0.0 && row.gap > row.extra_bound + opts.tolerance) {
            std::ostringstream msg;
            msg << "gap " << row.gap << " exceeds the second bound " << row.extra_bound << " at T = " << row.T;
            table.ok = false;
            table.failure = msg.str();
        }
        table.rows.push_back(row);
    }
    if (table.ok && table.rows.size() >= 2 && table.rows.back().gap > table.rows.front().gap + opts.tolerance) {
        table.ok = false;
        table.failure = "gap grows with T";
    }
    if (opts.fit_exponent && table.rows.size() >= 2) {
        std::vector<double> ts, gs;
        for (const auto& r : table.rows) {
            ts.push_back(r.T);
            gs.push_back(r.gap);
        }
        table.decay_exponent = fit_decay_exponent(ts, gs);
    }
    return table;
}

}  // namespace ostop
