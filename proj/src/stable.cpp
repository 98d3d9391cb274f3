#include "ostop/stable.hpp"

#include "ostop/errors.hpp"
#include "ostop/parallel.hpp"
#include "ostop/path_set.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace ostop {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 2.0)) throw std::invalid_argument("alpha must lie in (0, 2]");
}

double sphere_area(std::size_t d) {
    const double h = static_cast<double>(d) / 2.0;
    return 2.0 * std::pow(std::numbers::pi, h) / std::tgamma(h);
}

}  // namespace

double heat_kernel_constant(double alpha, std::size_t d) {
    check_alpha(alpha);
    if (d == 0) throw std::invalid_argument("dimension must be positive");
    static std::mutex mu;
    static std::map<std::pair<double, std::size_t>, double> cache;
    std::lock_guard lock(mu);
    auto key = std::make_pair(alpha, d);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    // (2 pi)^-d int_{R^d} exp(-|xi|^alpha) d xi in polar coordinates.
    boost::math::quadrature::exp_sinh<double> integrator;
    const double dd = static_cast<double>(d);
    const double radial = integrator.integrate([&](double r) { return std::pow(r, dd - 1.0) * std::exp(-std::pow(r, alpha)); });
    const double c = sphere_area(d) * radial / std::pow(2.0 * std::numbers::pi, dd);
    cache.emplace(key, c);
    return c;
}

double heat_kernel_bound(double alpha, std::size_t d, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("heat_kernel_bound: t must be positive");
    return heat_kernel_constant(alpha, d) * std::pow(t, -static_cast<double>(d) / alpha);
}

double ball_exit_time(double alpha, std::size_t d, double radius, double abs_x) {
    check_alpha(alpha);
    if (abs_x >= radius) return 0.0;
    const double dd = static_cast<double>(d);
    const double k = std::tgamma(dd / 2.0) /
                     (std::pow(2.0, alpha) * std::tgamma(1.0 + alpha / 2.0) * std::tgamma((dd + alpha) / 2.0));
    return k * std::pow(radius * radius - abs_x * abs_x, alpha / 2.0);
}

double interval_exit_time(double alpha, double lower, double upper, double x) {
    if (!(upper > lower)) throw std::invalid_argument("empty interval");
    if (x <= lower || x >= upper) return 0.0;
    return ball_exit_time(alpha, 1, 0.5 * (upper - lower), std::abs(x - 0.5 * (upper + lower)));
}

double unit_ball_volume(std::size_t d) {
    const double h = static_cast<double>(d) / 2.0;
    return std::pow(std::numbers::pi, h) / std::tgamma(h + 1.0);
}

double calibrated_exit_constant(double alpha, std::size_t d) {
    return ball_exit_time(alpha, d, 1.0, 0.0) * std::pow(unit_ball_volume(d), -alpha / static_cast<double>(d));
}

double sample_symmetric_stable(double alpha, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double v = std::numbers::pi * (unif(rng) - 0.5);
    if (alpha == 1.0) return std::tan(v);
    const double w = -std::log1p(-unif(rng));
    return std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
           std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
}

ExitTimeEstimate mean_exit_time_mc(double alpha, double lower, double upper, double x, std::size_t n_paths,
                                   std::uint64_t seed, const ExitTimeOptions& opts) {
    check_alpha(alpha);
    if (!(x > lower && x < upper)) throw std::invalid_argument("mean_exit_time_mc: start must be interior");
    if (n_paths < 2) throw std::invalid_argument("mean_exit_time_mc: need at least two paths");
    if (!(opts.dt > 0.0)) throw std::invalid_argument("mean_exit_time_mc: dt must be positive");
    const double dt = opts.dt;
    const double scale = std::pow(dt, 1.0 / alpha);
    std::vector<double> times(n_paths);
    std::vector<unsigned char> censored(n_paths, 0);

    parallel_for(n_paths, opts.threads, [&](std::size_t lo, std::size_t hi) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t p = lo; p < hi; ++p) {
            auto rng = path_rng(seed, p);
            std::normal_distribution<double> normal(0.0, 1.0);
            double pos = x;
            std::size_t k = 0;
            double t_exit = -1.0;
            for (; k < opts.max_steps; ++k) {
                const double next = alpha == 2.0 ? pos + std::numbers::sqrt2 * scale * normal(rng)
                                                 : pos + scale * sample_symmetric_stable(alpha, rng);
                if (next <= lower || next >= upper) {
                    t_exit = (static_cast<double>(k) + (alpha == 2.0 ? 0.5 : 1.0)) * dt;
                    break;
                }
                if (alpha == 2.0) {
                    // Bridge of variance 2 dt between pos and next.
                    const double pu = std::exp(-(upper - pos) * (upper - next) / dt);
                    const double pl = std::exp(-(pos - lower) * (next - lower) / dt);
                    if (unif(rng) < pu + pl) {
                        t_exit = (static_cast<double>(k) + 0.5) * dt;
                        break;
                    }
                }
                pos = next;
            }
            if (t_exit < 0.0) {
                censored[p] = 1;
                t_exit = static_cast<double>(opts.max_steps) * dt;
            }
            times[p] = t_exit;
        }
    });

    ExitTimeEstimate est;
    est.n_paths = n_paths;
    est.dt = dt;
    double sum = 0.0, n_cens = 0.0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        sum += times[p];
        n_cens += censored[p];
    }
    const double n = static_cast<double>(n_paths);
    est.mean = sum / n;
    double ss = 0.0;
    for (double t : times) ss += (t - est.mean) * (t - est.mean);
    est.std_error = std::sqrt(ss / (n - 1.0) / n);
    est.censored_fraction = n_cens / n;
    if (est.censored_fraction > opts.max_censored) {
        std::ostringstream msg;
        msg << "mean_exit_time_mc: " << est.censored_fraction * 100.0 << "% of paths did not exit within "
            << opts.max_steps << " steps";
        throw ConvergenceFailure(msg.str());
    }
    est.bound = calibrated_exit_constant(alpha, 1) * std::pow(upper - lower, alpha);
    est.within_bound = est.mean <= est.bound + 3.0 * est.std_error;
    return est;
}

}  // namespace ostop
