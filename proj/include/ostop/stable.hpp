#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace ostop {

// Rotationally symmetric alpha-stable process with E exp(i xi.X_t) = exp(-t |xi|^alpha).
// alpha = 2 is the process generated by the Laplacian (N(0, 2t) coordinates).

/// p(1, 0, 0) = sup_x p(1, 0, x), by quadrature of the characteristic function; cached.
double heat_kernel_constant(double alpha, std::size_t d);

/// heat_kernel_constant(alpha, d) * t^{-d/alpha}.
double heat_kernel_bound(double alpha, std::size_t d, double t);

/// Mean exit time from the ball of radius r started at distance |x| from the centre:
/// K (r^2 - |x|^2)^{alpha/2}, K = Gamma(d/2) / (2^alpha Gamma(1 + alpha/2) Gamma((d + alpha)/2)).
double ball_exit_time(double alpha, std::size_t d, double radius, double abs_x);

/// Same on the interval (lower, upper).
double interval_exit_time(double alpha, double lower, double upper, double x);

/// Volume of the unit ball in R^d.
double unit_ball_volume(std::size_t d);

/// c_1 with sup_x E_x tau_D <= c_1 m(D)^{alpha/d}, calibrated on balls (where it is attained).
double calibrated_exit_constant(double alpha, std::size_t d);

/// One standard symmetric alpha-stable variate (Chambers-Mallows-Stuck).
double sample_symmetric_stable(double alpha, std::mt19937_64& rng);

struct ExitTimeOptions {
    double dt = 1e-3;
    std::size_t max_steps = 200'000;
    double max_censored = 1e-3;  ///< ConvergenceFailure above this censored fraction
    unsigned threads = 1;
};

struct ExitTimeEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double censored_fraction = 0.0;
    std::size_t n_paths = 0;
    double dt = 0.0;
    double bound = 0.0;     ///< c_1 m(D)^{alpha/d}
    bool within_bound = false;  ///< mean <= bound + 3 std_error
};

/// Monte-Carlo E_x tau_D on an interval. alpha = 2 uses Gaussian steps with a
/// Brownian-bridge crossing test; alpha < 2 monitors stable increments at each step.
ExitTimeEstimate mean_exit_time_mc(double alpha, double lower, double upper, double x, std::size_t n_paths,
                                   std::uint64_t seed, const ExitTimeOptions& opts = {});

}  // namespace ostop
