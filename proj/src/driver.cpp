#include "ostop/driver.hpp"

#include "ostop/errors.hpp"
#include "ostop/tolerances.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ostop {

Driver Driver::zero() { return Driver(); }

Driver Driver::linear(double lambda) {
    if (!(lambda >= 0.0)) throw HypothesisViolation("H2", "linear driver -lambda y needs lambda >= 0");
    Driver d;
    d.kind_ = lambda == 0.0 ? Kind::zero : Kind::affine;
    std::ostringstream name;
    name << "linear:" << lambda;
    d.name_ = lambda == 0.0 ? "zero" : name.str();
    d.intercept_ = {0.0};
    d.slope_ = {lambda};
    return d;
}

Driver Driver::soft_clip(double a, double b) {
    if (!(a >= 0.0 && b > 0.0)) throw HypothesisViolation("H2", "soft-clip driver needs a >= 0 and b > 0");
    Driver d;
    d.kind_ = Kind::generic;
    std::ostringstream name;
    name << "soft-clip:" << a << "," << b;
    d.name_ = name.str();
    d.fn_ = [a, b](std::size_t, double y) { return -a * std::tanh(y / b); };
    return d;
}

Driver Driver::table(std::vector<double> intercept, std::vector<double> slope) {
    if (intercept.size() != slope.size() || intercept.empty())
        throw std::invalid_argument("driver table needs matching, nonempty intercept and slope columns");
    for (std::size_t s = 0; s < slope.size(); ++s)
        if (!(slope[s] >= 0.0)) {
            std::ostringstream msg;
            msg << "driver table slope at state " << s << " is " << slope[s] << "; f must be nonincreasing in y";
            throw HypothesisViolation("H2", msg.str());
        }
    Driver d;
    d.kind_ = Kind::affine;
    d.name_ = "table";
    d.intercept_ = std::move(intercept);
    d.slope_ = std::move(slope);
    return d;
}

Driver Driver::custom(std::string name, Fn f) {
    Driver d;
    d.kind_ = Kind::generic;
    d.name_ = std::move(name);
    d.fn_ = std::move(f);
    return d;
}

double Driver::operator()(std::size_t s, double y) const {
    switch (kind_) {
        case Kind::zero: return 0.0;
        case Kind::affine: return intercept(s) - slope(s) * y;
        case Kind::generic: return fn_(s, y);
    }
    return 0.0;
}

double Driver::implicit_step(std::size_t s, double b, double dt, double c, double* residual) const {
    if (kind_ == Kind::zero) {
        if (residual) *residual = 0.0;
        return b / c;
    }
    if (kind_ == Kind::affine) {
        const double y = (b + dt * intercept(s)) / (c + dt * slope(s));
        if (residual) *residual = std::abs(c * y - dt * (*this)(s, y) - b);
        return y;
    }

    auto F = [&](double y) { return c * y - dt * fn_(s, y) - b; };
    const double target = tol::implicit_residual * std::max(1.0, std::abs(b));

    // For nonincreasing f the root lies between b/c and (b + dt f(b/c))/c.
    double lo = b / c;
    double flo = F(lo);
    if (std::abs(flo) <= target) {
        if (residual) *residual = std::abs(flo);
        return lo;
    }
    double hi = (b + dt * fn_(s, lo)) / c;
    double fhi = F(hi);
    double width = std::max(std::abs(hi - lo), 1e-300 + std::abs(lo) * 1e-12 + 1e-12);
    std::size_t widen = 0;
    while (!(flo * fhi <= 0.0)) {
        if (++widen > tol::bracket_max_widen || !std::isfinite(fhi)) {
            std::ostringstream msg;
            msg << "implicit step at state " << s << " could not bracket a root of c y - dt f(y) = " << b
                << "; f is not nonincreasing in y";
            throw HypothesisViolation("H2", msg.str());
        }
        width *= 2.0;
        hi = flo < 0.0 ? lo + width : lo - width;
        fhi = F(hi);
    }
    if (lo > hi) {
        std::swap(lo, hi);
        std::swap(flo, fhi);
    }
    // Illinois regula falsi with a bisection step every third iteration.
    int side = 0;
    double y = lo, fy = flo;
    for (std::size_t it = 0; it < tol::implicit_max_iter; ++it) {
        if (std::abs(fhi) <= target) {
            y = hi;
            fy = fhi;
            break;
        }
        if (std::abs(flo) <= target) {
            y = lo;
            fy = flo;
            break;
        }
        if (it % 3 == 2 || fhi == flo)
            y = 0.5 * (lo + hi);
        else
            y = (lo * fhi - hi * flo) / (fhi - flo);
        if (!(y > lo && y < hi)) y = 0.5 * (lo + hi);
        fy = F(y);
        if (std::abs(fy) <= target || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(y)) break;
        if (fy < 0.0) {
            lo = y;
            flo = fy;
            if (side == -1) fhi *= 0.5;
            side = -1;
        } else {
            hi = y;
            fhi = fy;
            if (side == 1) flo *= 0.5;
            side = 1;
        }
        if (it + 1 == tol::implicit_max_iter) {
            std::ostringstream msg;
            msg << "implicit step at state " << s << " did not converge in " << tol::implicit_max_iter
                << " iterations; f is not nonincreasing in y";
            throw HypothesisViolation("H2", msg.str());
        }
    }
    if (residual) *residual = std::abs(fy);
    return y;
}

void Driver::check_monotone(std::size_t n_states, const std::vector<double>& ys) const {
    if (kind_ != Kind::generic) return;  // zero and affine are monotone by construction
    for (std::size_t s = 0; s < n_states; ++s) {
        double prev = fn_(s, ys.front());
        for (std::size_t i = 1; i < ys.size(); ++i) {
            const double cur = fn_(s, ys[i]);
            const double slack = tol::driver_monotone * std::max({1.0, std::abs(cur), std::abs(prev)});
            if ((ys[i] - ys[i - 1]) * (cur - prev) > slack * std::abs(ys[i] - ys[i - 1])) {
                std::ostringstream msg;
                msg << "(y - y')(f(x, y) - f(x, y')) > 0 at state " << s << ", y = " << ys[i] << ", y' = " << ys[i - 1]
                    << " (driver " << name_ << ")";
                throw HypothesisViolation("H2", msg.str());
            }
            prev = cur;
        }
    }
}

Driver parse_driver(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    std::vector<double> args;
    if (colon != std::string::npos) {
        std::stringstream ss(spec.substr(colon + 1));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                args.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw SchemaError("driver '" + spec + "': bad number '" + tok + "'");
            }
        }
    }
    if (kind == "zero" && args.empty()) return Driver::zero();
    if (kind == "linear" && args.size() == 1) return Driver::linear(args[0]);
    if (kind == "soft-clip" && args.size() == 2) return Driver::soft_clip(args[0], args[1]);
    throw SchemaError("unknown driver '" + spec + "' (expected zero, linear:lambda, soft-clip:a,b)");
}

}  // namespace ostop
