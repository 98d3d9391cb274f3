#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

namespace ostop {

enum class JumpFamily { none, point_masses, double_exponential, truncated_normal };

std::string to_string(JumpFamily f);

/// Compound-Poisson jump description. For the double-exponential and
/// truncated-normal families the d components of a jump are iid.
struct JumpSpec {
    JumpFamily family = JumpFamily::none;
    double intensity = 0.0;

    // point_masses: atoms[a] is a jump vector in R^d taken with weights[a].
    std::vector<std::vector<double>> atoms;
    std::vector<double> weights;

    // double_exponential: up with prob p_up and rate eta_up, down with rate eta_down.
    double p_up = 0.5;
    double eta_up = 0.0;
    double eta_down = 0.0;

    // truncated_normal: N(mean, stdev^2) conditioned on [lower, upper].
    double mean = 0.0;
    double stdev = 0.0;
    double lower = -1.0;
    double upper = 1.0;
};

struct ExpLevyParams {
    std::vector<double> initial_prices;
    double rate = 0.0;
    std::vector<double> dividends;
    std::vector<double> vol_matrix;  ///< d x d, row-major
    JumpSpec jumps;
};

enum class GrowthClass { bounded, linear };

std::string to_string(GrowthClass g);

/// X^i_t = x_i exp((r - delta_i) t + xi^i_t), xi a Levy process with Gaussian
/// covariance a, compound-Poisson jumps and the drift correction that makes
/// exp(xi^i) a martingale.
class ExpLevyModel {
public:
    std::size_t dim() const noexcept { return params_.initial_prices.size(); }
    const std::vector<double>& initial_prices() const noexcept { return params_.initial_prices; }
    double rate() const noexcept { return params_.rate; }
    const std::vector<double>& dividends() const noexcept { return params_.dividends; }
    double vol(std::size_t i, std::size_t j) const { return params_.vol_matrix[i * dim() + j]; }
    const std::vector<double>& vol_matrix() const noexcept { return params_.vol_matrix; }
    const JumpSpec& jumps() const noexcept { return params_.jumps; }
    const ExpLevyParams& params() const noexcept { return params_; }

    /// Per-asset drift of xi: -a_ii/2 - lambda_J (E e^{Y_i} - 1).
    const std::vector<double>& drift_correction() const noexcept { return drift_; }

    /// Supremum of the beta for which the jump law has the exponential moment
    /// int |y|^2 e^{beta |y|} nu(dy) < infinity (excluded at the endpoint).
    double beta_sup() const noexcept { return beta_sup_; }
    bool admits(GrowthClass g) const noexcept { return beta_sup_ > (g == GrowthClass::bounded ? 1.0 : 2.0); }

    /// det a > 0.
    bool nondegenerate() const noexcept { return nondegenerate_; }

    /// E e^{Y_i} and E Y_i^2 for one jump.
    double jump_exp_moment(std::size_t i) const { return jump_exp_moment_[i]; }
    double jump_second_moment(std::size_t i) const { return jump_second_moment_[i]; }

    /// Row-major F with F F^T = a, from the eigen-decomposition (safe when a is singular).
    const std::vector<double>& vol_factor() const noexcept { return chol_; }

    /// Draws one jump vector.
    std::vector<double> sample_jump(std::mt19937_64& rng) const;

    /// Variance of xi^i_t: (a_ii + lambda_J E Y_i^2) t.
    double log_variance(std::size_t i, double t) const;

private:
    friend ExpLevyModel build_exp_levy(const ExpLevyParams& p);
    ExpLevyParams params_;
    std::vector<double> drift_;
    std::vector<double> chol_;
    std::vector<double> jump_exp_moment_;
    std::vector<double> jump_second_moment_;
    double beta_sup_ = 0.0;
    bool nondegenerate_ = false;
};

/// Validates the parameters and fixes the drift correction analytically.
/// Throws HypothesisViolation when a is not symmetric nonnegative-definite or
/// when the jump law admits neither payoff class.
ExpLevyModel build_exp_levy(const ExpLevyParams& p);

/// Moments of N(mean, sd^2) conditioned on [lo, hi]: E e^Y, E Y, E Y^2.
struct TruncatedNormalMoments {
    double exp_moment;
    double mean;
    double second_moment;
};
TruncatedNormalMoments truncated_normal_moments(double mean, double sd, double lo, double hi);

}  // namespace ostop
