#include "ostop/pricing.hpp"

#include "ostop/errors.hpp"
#include "ostop/path_set.hpp"
#include "ostop/solvers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ostop {

// ---------------------------------------------------------------- payoffs

double Payoff::operator()(std::span<const double> x) const {
    switch (kind) {
        case PayoffKind::put: return std::max(strike - x[0], 0.0);
        case PayoffKind::call: return std::max(x[0] - strike, 0.0);
        case PayoffKind::capped_call: return std::min(std::max(x[0] - strike, 0.0), cap);
        case PayoffKind::basket_put: {
            double b = 0.0;
            for (std::size_t i = 0; i < weights.size(); ++i) b += weights[i] * x[i];
            return std::max(strike - b, 0.0);
        }
        case PayoffKind::constant: return level;
    }
    return 0.0;
}

GrowthClass Payoff::growth() const { return kind == PayoffKind::call ? GrowthClass::linear : GrowthClass::bounded; }

double Payoff::growth_constant() const {
    switch (kind) {
        case PayoffKind::put:
        case PayoffKind::basket_put: return strike;
        case PayoffKind::call: return 1.0;
        case PayoffKind::capped_call: return cap;
        case PayoffKind::constant: return level;
    }
    return 0.0;
}

Payoff parse_payoff(const std::string& spec, std::size_t dim) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw SchemaError("payoff '" + spec + "' needs parameters after ':'");
    const std::string kind = spec.substr(0, colon);
    std::vector<double> args;
    std::stringstream ss(spec.substr(colon + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            args.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw SchemaError("payoff '" + spec + "': bad number '" + tok + "'");
        }
    }
    Payoff p;
    p.name = spec;
    auto need = [&](std::size_t n) {
        if (args.size() != n) {
            std::ostringstream msg;
            msg << "payoff '" << spec << "' expects " << n << " parameter(s)";
            throw SchemaError(msg.str());
        }
    };
    if (kind == "put" || kind == "call") {
        need(1);
        p.kind = kind == "put" ? PayoffKind::put : PayoffKind::call;
        p.strike = args[0];
        if (dim != 1) throw SchemaError("payoff '" + spec + "' is for a single asset");
    } else if (kind == "capped-call") {
        need(2);
        p.kind = PayoffKind::capped_call;
        p.strike = args[0];
        p.cap = args[1];
        if (dim != 1) throw SchemaError("payoff '" + spec + "' is for a single asset");
    } else if (kind == "basket-put") {
        need(1 + dim);
        p.kind = PayoffKind::basket_put;
        p.strike = args[0];
        p.weights.assign(args.begin() + 1, args.end());
    } else if (kind == "constant") {
        need(1);
        p.kind = PayoffKind::constant;
        p.level = args[0];
    } else {
        throw SchemaError("unknown payoff '" + spec + "' (expected put, call, capped-call, basket-put, constant)");
    }
    check_payoff(p, dim);
    return p;
}

void check_payoff(const Payoff& psi, std::size_t dim) {
    if (psi.strike < 0.0 || psi.cap < 0.0 || psi.level < 0.0)
        throw HypothesisViolation("payoff", "strike, cap and level must be nonnegative");
    for (double w : psi.weights)
        if (w < 0.0) throw HypothesisViolation("payoff", "basket weights must be nonnegative");
    if (psi.kind == PayoffKind::basket_put && psi.weights.size() != dim)
        throw HypothesisViolation("payoff", "basket needs one weight per asset");
    const double scale = std::max({1.0, psi.strike, psi.cap, psi.level});
    const double K = psi.growth_constant();
    std::vector<double> x(dim);
    constexpr int kSamples = 401;
    double prev = 0.0;
    for (int i = 0; i < kSamples; ++i) {
        const double v = scale * std::exp(-6.0 + 12.0 * i / (kSamples - 1));
        std::fill(x.begin(), x.end(), v);
        const double y = psi(x);
        double norm = 0.0;
        for (double c : x) norm += c * c;
        norm = std::sqrt(norm);
        const double limit = psi.growth() == GrowthClass::bounded ? K : K * (1.0 + norm);
        if (!(y >= 0.0) || y > limit * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "payoff " << psi.name << " = " << y << " at x = " << v << " violates psi >= 0 or its "
                << to_string(psi.growth()) << " growth bound " << limit;
            throw HypothesisViolation("payoff", msg.str());
        }
        if (i > 0) {
            const double step = v * (1.0 - std::exp(-12.0 / (kSamples - 1)));
            double lip = 1.0;
            for (double w : psi.weights) lip = std::max(lip, w * std::sqrt(static_cast<double>(dim)));
            if (std::abs(y - prev) > lip * step * std::sqrt(static_cast<double>(dim)) + 1e-12 * scale)
                throw HypothesisViolation("payoff", "payoff " + psi.name + " is not continuous on the sample grid");
        }
        prev = y;
    }
}

// ---------------------------------------------------------------- lattice

void jump_quadrature(const JumpSpec& j, std::size_t atoms, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.clear();
    weights.clear();
    if (j.family == JumpFamily::point_masses) {
        for (std::size_t a = 0; a < j.atoms.size(); ++a) {
            nodes.push_back(j.atoms[a][0]);
            weights.push_back(j.weights[a]);
        }
        return;
    }
    // Fine discretization of the law, then the Stieltjes procedure for its Gauss rule.
    std::vector<double> t, w;
    constexpr int kCells = 4000;
    if (j.family == JumpFamily::double_exponential) {
        const double lu = 40.0 / j.eta_up, ld = 40.0 / j.eta_down;
        for (int c = 0; c < kCells; ++c) {
            const double a = lu * c / kCells, b = lu * (c + 1) / kCells;
            t.push_back(0.5 * (a + b));
            w.push_back(j.p_up * (std::exp(-j.eta_up * a) - std::exp(-j.eta_up * b)));
            const double a2 = ld * c / kCells, b2 = ld * (c + 1) / kCells;
            t.push_back(-0.5 * (a2 + b2));
            w.push_back((1.0 - j.p_up) * (std::exp(-j.eta_down * a2) - std::exp(-j.eta_down * b2)));
        }
    } else if (j.family == JumpFamily::truncated_normal) {
        auto cdf = [&](double y) { return 0.5 * std::erfc(-(y - j.mean) / (j.stdev * std::numbers::sqrt2)); };
        for (int c = 0; c < kCells; ++c) {
            const double a = j.lower + (j.upper - j.lower) * c / kCells;
            const double b = j.lower + (j.upper - j.lower) * (c + 1) / kCells;
            t.push_back(0.5 * (a + b));
            w.push_back(cdf(b) - cdf(a));
        }
    } else {
        return;
    }
    double total = 0.0;
    for (double v : w) total += v;
    for (double& v : w) v /= total;

    const std::size_t k = std::max<std::size_t>(1, atoms);
    std::vector<double> alpha(k), beta(k, 0.0);
    std::vector<double> p_prev(t.size(), 0.0), p_cur(t.size(), 1.0), p_next(t.size());
    double norm_prev = 1.0;
    for (std::size_t r = 0; r < k; ++r) {
        double norm = 0.0, first = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            norm += w[i] * p_cur[i] * p_cur[i];
            first += w[i] * t[i] * p_cur[i] * p_cur[i];
        }
        alpha[r] = first / norm;
        if (r > 0) beta[r] = norm / norm_prev;
        for (std::size_t i = 0; i < t.size(); ++i)
            p_next[i] = (t[i] - alpha[r]) * p_cur[i] - (r > 0 ? beta[r] * p_prev[i] : 0.0);
        norm_prev = norm;
        p_prev.swap(p_cur);
        p_cur.swap(p_next);
    }
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t r = 0; r < k; ++r) {
        jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)) = alpha[r];
        if (r + 1 < k) {
            const double off = std::sqrt(beta[r + 1]);
            jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r + 1)) = off;
            jac(static_cast<Eigen::Index>(r + 1), static_cast<Eigen::Index>(r)) = off;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jac);
    for (std::size_t r = 0; r < k; ++r) {
        nodes.push_back(eig.eigenvalues()[static_cast<Eigen::Index>(r)]);
        const double v = eig.eigenvectors()(0, static_cast<Eigen::Index>(r));
        weights.push_back(v * v);
    }
}

PriceLattice build_price_lattice(const ExpLevyModel& m, double dt, const LatticeOptions& opts) {
    const std::size_t d = m.dim();
    if (d > 2) throw std::invalid_argument("price lattice supports at most two assets");
    if (!(dt > 0.0)) throw std::invalid_argument("price lattice: dt must be positive");
    if (!m.nondegenerate())
        throw HypothesisViolation("nondegenerate-vol", "the price lattice needs det a > 0 (pure-jump lattices are not built)");

    Eigen::MatrixXd a(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k) a(i, k) = m.vol(i, k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    const Eigen::MatrixXd Q = eig.eigenvectors();

    PriceLattice lat;
    lat.dt = dt;
    lat.h.resize(d);
    std::vector<long> M(d);
    std::vector<std::size_t> extent(d), stride(d, 1);
    for (std::size_t k = 0; k < d; ++k) {
        lat.h[k] = std::sqrt(eig.eigenvalues()[static_cast<Eigen::Index>(k)] * dt);
        M[k] = static_cast<long>(std::ceil(opts.log_width / lat.h[k]));
        extent[k] = static_cast<std::size_t>(2 * M[k] + 1);
    }
    for (std::size_t k = d - 1; k-- > 0;) stride[k] = stride[k + 1] * extent[k + 1];
    std::size_t n = 1;
    for (auto e : extent) n *= e;
    if (n > 20'000'000) throw std::invalid_argument("price lattice too large; increase dt or reduce log_width");

    // Jumps snapped to lattice offsets.
    const JumpSpec& js = m.jumps();
    const double lam = js.intensity;
    std::map<std::vector<long>, double> jump_offsets;
    if (lam > 0.0) {
        if (d == 1) {
            std::vector<double> nodes, weights;
            jump_quadrature(js, std::min<std::size_t>(opts.max_jump_atoms, 7), nodes, weights);
            for (std::size_t q = 0; q < nodes.size(); ++q)
                jump_offsets[{std::lround(nodes[q] / lat.h[0])}] += weights[q];
        } else {
            if (js.family != JumpFamily::point_masses)
                throw std::invalid_argument("two-asset lattices support point-mass jumps only");
            for (std::size_t q = 0; q < js.atoms.size(); ++q) {
                std::vector<long> off(d);
                for (std::size_t k = 0; k < d; ++k) {
                    double z = 0.0;
                    for (std::size_t i = 0; i < d; ++i) z += Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * js.atoms[q][i];
                    off[k] = std::lround(z / lat.h[k]);
                }
                jump_offsets[off] += js.weights[q];
            }
        }
    }
    lat.jump_atoms = jump_offsets.size();
    const double pj = lam * dt;
    if (pj > 1.0) throw std::invalid_argument("price lattice: lambda_J dt exceeds 1; reduce dt");

    // J_i = E exp(jump part of log X^i over one step).
    std::vector<double> J(d, 1.0 - pj);
    for (std::size_t i = 0; i < d; ++i) {
        if (pj == 0.0) J[i] = 1.0;
        for (const auto& [off, w] : jump_offsets) {
            double y = 0.0;
            for (std::size_t k = 0; k < d; ++k) y += Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * static_cast<double>(off[k]) * lat.h[k];
            J[i] += pj * w * std::exp(y);
        }
    }
    // Newton on u: J_i prod_k (cosh(Q_ik h_k) + u_k sinh(Q_ik h_k)) = exp((r - delta_i) dt).
    Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd F(d);
        Eigen::MatrixXd Jac(d, d);
        for (std::size_t i = 0; i < d; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            std::vector<double> fac(d), der(d);
            for (std::size_t k = 0; k < d; ++k) {
                const double z = Q(ii, static_cast<Eigen::Index>(k)) * lat.h[k];
                fac[k] = std::cosh(z) + u[static_cast<Eigen::Index>(k)] * std::sinh(z);
                der[k] = std::sinh(z);
            }
            double prod = J[i];
            for (double f : fac) prod *= f;
            F[ii] = prod - std::exp((m.rate() - m.dividends()[i]) * dt);
            for (std::size_t k = 0; k < d; ++k) {
                double pk = J[i] * der[k];
                for (std::size_t l = 0; l < d; ++l)
                    if (l != k) pk *= fac[l];
                Jac(ii, static_cast<Eigen::Index>(k)) = pk;
            }
        }
        const Eigen::VectorXd step = Jac.fullPivLu().solve(F);
        u -= step;
        if (step.cwiseAbs().maxCoeff() <= 1e-15) break;
    }
    lat.u.assign(u.data(), u.data() + d);
    for (double uk : lat.u)
        if (!(std::abs(uk) < 1.0))
            throw std::invalid_argument("price lattice: martingale branch probabilities leave [0, 1]; reduce dt");

    // Branches: diffusion sign pattern in each coordinate, optionally after a jump.
    struct Branch {
        std::vector<long> off;
        double prob;
    };
    std::vector<Branch> branches;
    const std::size_t patterns = std::size_t{1} << d;
    auto add_diffusion = [&](const std::vector<long>& base, double w) {
        for (std::size_t pat = 0; pat < patterns; ++pat) {
            std::vector<long> off = base;
            double pr = w;
            for (std::size_t k = 0; k < d; ++k) {
                const bool up = (pat >> k) & 1U;
                off[k] += up ? 1 : -1;
                pr *= 0.5 * (1.0 + (up ? lat.u[k] : -lat.u[k]));
            }
            branches.push_back({off, pr});
        }
    };
    add_diffusion(std::vector<long>(d, 0), 1.0 - pj);
    for (const auto& [off, w] : jump_offsets) add_diffusion(off, pj * w);

    std::vector<double> points(n * d);
    std::vector<long> idx(d);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < d; ++k) idx[k] = static_cast<long>((s / stride[k]) % extent[k]) - M[k];
        for (std::size_t i = 0; i < d; ++i) {
            double y = 0.0;
            for (std::size_t k = 0; k < d; ++k) y += Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * static_cast<double>(idx[k]) * lat.h[k];
            points[s * d + i] = m.initial_prices()[i] * std::exp(y);
        }
    }
    SparseKernel kernel;
    std::map<std::size_t, double> row;
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < d; ++k) idx[k] = static_cast<long>((s / stride[k]) % extent[k]) - M[k];
        row.clear();
        for (const auto& b : branches) {
            std::size_t t = 0;
            bool inside = true;
            for (std::size_t k = 0; k < d; ++k) {
                const long j = idx[k] + b.off[k];
                if (j < -M[k] || j > M[k]) {
                    inside = false;
                    break;
                }
                t += static_cast<std::size_t>(j + M[k]) * stride[k];
            }
            if (inside) row[t] += b.prob;
        }
        cols.clear();
        vals.clear();
        for (const auto& [c, v] : row) {
            cols.push_back(c);
            vals.push_back(v);
        }
        kernel.push_row(cols, vals);
    }
    std::size_t root = 0;
    for (std::size_t k = 0; k < d; ++k) root += static_cast<std::size_t>(M[k]) * stride[k];
    lat.root = root;
    lat.chain = std::make_shared<const MarkovChainModel>(std::move(points), d, dt, std::move(kernel),
                                                         GeneratorTag::exp_levy_lattice);
    return lat;
}

// ---------------------------------------------------------------- pricing

namespace {

void require_admissible(const ExpLevyModel& m, const Payoff& psi) {
    if (psi.kind == PayoffKind::basket_put && psi.weights.size() != m.dim())
        throw HypothesisViolation("payoff", "basket needs one weight per asset");
    if ((psi.kind != PayoffKind::basket_put && psi.kind != PayoffKind::constant) && m.dim() != 1)
        throw HypothesisViolation("payoff", "payoff " + psi.name + " is for a single asset");
    if (!m.admits(psi.growth())) {
        std::ostringstream msg;
        msg << to_string(psi.growth()) << " payoffs need jump exponential moments with beta > "
            << (psi.growth() == GrowthClass::bounded ? 1 : 2) << "; the jump law allows beta < " << m.beta_sup();
        throw HypothesisViolation("exponential-moment", msg.str());
    }
}

PriceResult lattice_price(const ExpLevyModel& m, const Payoff& psi, double T, std::size_t n_steps,
                          const LatticeOptions& opts, bool american) {
    require_admissible(m, psi);
    if (!(T >= 0.0)) throw std::invalid_argument("maturity must be nonnegative");
    PriceResult r;
    r.T = T;
    r.n_steps = n_steps;
    if (T == 0.0) {
        r.value = psi(m.initial_prices());
        return r;
    }
    if (n_steps == 0) throw std::invalid_argument("need at least one time step");
    r.dt = T / static_cast<double>(n_steps);
    const auto lat = build_price_lattice(m, r.dt, opts);
    r.n_states = lat.chain->size();
    StoppingProblem p;
    p.chain = lat.chain;
    p.n_steps = n_steps;
    p.discount = m.rate();
    p.terminal = lat.chain->evaluate([&](std::span<const double> x) { return psi(x); });
    if (american) p.obstacle = p.terminal;
    SolverOptions so;
    so.threads = opts.threads;
    if (american) {
        r.value = snell_value(p, so)[lat.root];
    } else {
        std::vector<double> xi = p.terminal;
        r.value = nonlinear_expectation(p, 0, n_steps, xi, so)[lat.root];
    }
    return r;
}

}  // namespace

PriceResult price_american(const ExpLevyModel& m, const Payoff& psi, double T, std::size_t n_steps,
                           const LatticeOptions& opts) {
    return lattice_price(m, psi, T, n_steps, opts, true);
}

PriceResult price_european(const ExpLevyModel& m, const Payoff& psi, double T, std::size_t n_steps,
                           const LatticeOptions& opts) {
    return lattice_price(m, psi, T, n_steps, opts, false);
}

PerpetualResult price_perpetual(const ExpLevyModel& m, const Payoff& psi, double tol, const PerpetualOptions& opts) {
    if (!(tol > 0.0)) throw std::invalid_argument("perpetual: tolerance must be positive");
    require_admissible(m, psi);
    const GrowthClass cls = psi.growth();
    const double K = psi.growth_constant();
    if (cls == GrowthClass::linear) {
        for (double q : m.dividends())
            if (!(q > 0.0))
                throw HypothesisViolation("dividend-or-bounded",
                                          "linear-growth payoffs need a positive dividend yield on every asset");
    }
    if (!(m.rate() > 0.0) && K > 0.0)
        throw HypothesisViolation("decay", "r = 0 gives no decaying horizon bound; the perpetual value is not certified");

    PerpetualResult res;
    auto bound = [&](double T) { return exp_levy_rate_bound(m, cls, K, T).total; };
    double T_star = 0.0;
    if (bound(0.0) > tol / 2.0) {
        double lo = 0.0, hi = 1.0;
        while (bound(hi) > tol / 2.0) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e7) throw HypothesisViolation("decay", "horizon bound does not fall below tol/2");
        }
        for (int it = 0; it < 200 && hi - lo > 1e-10 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (bound(mid) > tol / 2.0 ? lo : hi) = mid;
        }
        T_star = hi;
    }
    if (T_star == 0.0) {
        res.value = psi(m.initial_prices());
        res.bound_at_T_star = bound(0.0);
        res.certified = true;
        return res;
    }

    double dt = opts.initial_dt;
    auto run = [&](double step) {
        const auto n = static_cast<std::size_t>(std::ceil(T_star / step - 1e-9));
        return price_american(m, psi, static_cast<double>(n) * step, n, opts.lattice);
    };
    PriceResult coarse = run(dt);
    PriceResult fine = run(dt / 2.0);
    res.refinements = 1;
    while (std::abs(fine.value - coarse.value) > tol / 2.0 && res.refinements < opts.max_refinements) {
        dt /= 2.0;
        coarse = fine;
        fine = run(dt / 2.0);
        ++res.refinements;
    }
    res.value = fine.value;
    res.T_star = fine.T;
    res.dt = fine.dt;
    res.n_steps = fine.n_steps;
    res.eps_disc = std::abs(fine.value - coarse.value);
    res.bound_at_T_star = bound(fine.T);
    res.certified = res.eps_disc <= tol / 2.0 && res.bound_at_T_star <= tol / 2.0;
    return res;
}

PriceReport verify_horizon_convergence(const ExpLevyModel& m, const Payoff& psi, const std::vector<double>& T_list,
                                       std::size_t n_steps, const VerifyOptions& opts) {
    if (!m.nondegenerate())
        throw HypothesisViolation("nondegenerate-vol", "horizon convergence verification needs det a > 0");
    require_admissible(m, psi);
    if (psi.growth() == GrowthClass::linear)
        for (double q : m.dividends())
            if (!(q > 0.0))
                throw HypothesisViolation("dividend-or-bounded",
                                          "unbounded payoffs need delta_i > 0 for every asset");

    PriceReport rep;
    rep.x = m.initial_prices();
    rep.n_steps = n_steps;
    rep.perpetual = price_perpetual(m, psi, opts.perpetual_tol, opts.perpetual);
    rep.monotone = true;
    rep.ok = true;
    for (std::size_t r = 0; r < T_list.size(); ++r) {
        const double T = T_list[r];
        const double v = price_american(m, psi, T, n_steps, opts.perpetual.lattice).value;
        const double v2 = price_american(m, psi, T, 2 * n_steps, opts.perpetual.lattice).value;
        const double eps = std::abs(v - v2) + rep.perpetual.eps_disc;
        const auto b = exp_levy_rate_bound(m, psi.growth(), psi.growth_constant(), T);
        const double gap = rep.perpetual.value - v;
        const bool row_ok = gap <= b.total + eps && v >= 0.0 && v <= rep.perpetual.value + eps;
        rep.T.push_back(T);
        rep.V_T.push_back(v);
        rep.eps_disc.push_back(eps);
        rep.gap.push_back(gap);
        rep.bound.push_back(b);
        rep.row_ok.push_back(row_ok);
        if (r > 0 && v < rep.V_T[r - 1] - opts.monotone_slack) {
            rep.monotone = false;
            if (rep.ok) {
                std::ostringstream msg;
                msg << "V_T decreases between T = " << T_list[r - 1] << " and T = " << T;
                rep.failure = msg.str();
            }
            rep.ok = false;
        }
        if (!row_ok && rep.ok) {
            std::ostringstream msg;
            msg << "row T = " << T << ": gap " << gap << " vs bound " << b.total << " + eps " << eps;
            rep.failure = msg.str();
            rep.ok = false;
        }
    }
    return rep;
}

SupermartingaleReport dividend_supermartingale_check(const ExpLevyModel& m, double T, std::size_t n_paths,
                                                     std::uint64_t seed, const SupermartingaleOptions& opts) {
    if (!(T > 0.0) || n_paths < 2 || opts.grid_steps == 0)
        throw std::invalid_argument("dividend_supermartingale_check: bad arguments");
    const double extra = opts.extra_horizon > 0.0 ? opts.extra_horizon : T;
    const double dt = T / static_cast<double>(opts.grid_steps);
    const std::size_t i_T = opts.grid_steps;
    const auto n_extra = static_cast<std::size_t>(std::ceil(extra / dt - 1e-9));
    std::vector<double> grid(i_T + n_extra + 1);
    for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = dt * static_cast<double>(k);

    struct Rule {
        std::string name;
        int dir;  // 0 deterministic, +1 up-crossing, -1 down-crossing
        double level;
    };
    std::vector<Rule> rules{{"deterministic T", 0, 0.0}};
    for (double l : opts.up_levels) {
        std::ostringstream n;
        n << "T + first passage above " << l << " x_i";
        rules.push_back({n.str(), +1, l});
    }
    for (double l : opts.down_levels) {
        std::ostringstream n;
        n << "T + first passage below " << l << " x_i";
        rules.push_back({n.str(), -1, l});
    }
    const std::size_t d = m.dim();
    std::vector<double> sum(rules.size() * d, 0.0), sum2(rules.size() * d, 0.0);
    constexpr std::size_t kChunk = 10'000;
    for (std::size_t first = 0; first < n_paths; first += kChunk) {
        const std::size_t count = std::min(kChunk, n_paths - first);
        const auto ps = sample_paths(m, grid, count, seed, opts.threads, first);
        for (std::size_t p = 0; p < count; ++p)
            for (std::size_t r = 0; r < rules.size(); ++r)
                for (std::size_t i = 0; i < d; ++i) {
                    std::size_t k = i_T;
                    if (rules[r].dir != 0) {
                        const double lvl = rules[r].level * m.initial_prices()[i];
                        for (; k + 1 < grid.size(); ++k) {
                            const double x = ps.at(p, k, i);
                            if ((rules[r].dir > 0 && x >= lvl) || (rules[r].dir < 0 && x <= lvl)) break;
                        }
                    }
                    const double eta = std::exp(-m.rate() * grid[k]) * ps.at(p, k, i);
                    sum[r * d + i] += eta;
                    sum2[r * d + i] += eta * eta;
                }
    }
    SupermartingaleReport rep;
    rep.ok = true;
    const double n = static_cast<double>(n_paths);
    for (std::size_t r = 0; r < rules.size(); ++r)
        for (std::size_t i = 0; i < d; ++i) {
            SupermartingaleRow row;
            row.rule = rules[r].name;
            row.asset = i;
            row.estimate = sum[r * d + i] / n;
            const double var = std::max(0.0, (sum2[r * d + i] / n - row.estimate * row.estimate) * n / (n - 1.0));
            row.std_error = std::sqrt(var / n);
            row.bound = m.initial_prices()[i] * std::exp(-m.dividends()[i] * T);
            row.equality_expected = rules[r].dir == 0;
            row.ok = row.equality_expected ? std::abs(row.estimate - row.bound) <= 3.0 * row.std_error
                                           : row.estimate <= row.bound + 3.0 * row.std_error;
            rep.ok = rep.ok && row.ok;
            rep.rows.push_back(row);
        }
    return rep;
}

}  // namespace ostop
