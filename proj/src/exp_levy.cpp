#include "ostop/exp_levy.hpp"

#include "ostop/errors.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ostop {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

std::string to_string(JumpFamily f) {
    switch (f) {
        case JumpFamily::none: return "none";
        case JumpFamily::point_masses: return "point-masses";
        case JumpFamily::double_exponential: return "double-exponential";
        case JumpFamily::truncated_normal: return "truncated-normal";
    }
    return "unknown";
}

std::string to_string(GrowthClass g) { return g == GrowthClass::bounded ? "bounded" : "linear"; }

TruncatedNormalMoments truncated_normal_moments(double mean, double sd, double lo, double hi) {
    const double a = (lo - mean) / sd;
    const double b = (hi - mean) / sd;
    const double z = norm_cdf(b) - norm_cdf(a);
    const double ratio = (norm_pdf(a) - norm_pdf(b)) / z;
    const double m1 = mean + sd * ratio;
    const double var = sd * sd * (1.0 + (a * norm_pdf(a) - b * norm_pdf(b)) / z - ratio * ratio);
    const double e = std::exp(mean + 0.5 * sd * sd) * (norm_cdf(b - sd) - norm_cdf(a - sd)) / z;
    return {e, m1, var + m1 * m1};
}

std::vector<double> ExpLevyModel::sample_jump(std::mt19937_64& rng) const {
    const JumpSpec& j = params_.jumps;
    const std::size_t d = dim();
    std::vector<double> y(d, 0.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    switch (j.family) {
        case JumpFamily::none: break;
        case JumpFamily::point_masses: {
            double u = unif(rng);
            std::size_t a = 0;
            for (; a + 1 < j.weights.size(); ++a) {
                if (u < j.weights[a]) break;
                u -= j.weights[a];
            }
            y = j.atoms[a];
            break;
        }
        case JumpFamily::double_exponential:
            for (std::size_t i = 0; i < d; ++i) {
                const bool up = unif(rng) < j.p_up;
                const double e = -std::log1p(-unif(rng));
                y[i] = up ? e / j.eta_up : -e / j.eta_down;
            }
            break;
        case JumpFamily::truncated_normal: {
            const double pa = norm_cdf((j.lower - j.mean) / j.stdev);
            const double pb = norm_cdf((j.upper - j.mean) / j.stdev);
            for (std::size_t i = 0; i < d; ++i) {
                const double u = pa + (pb - pa) * unif(rng);
                const double q = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
                y[i] = std::clamp(j.mean + j.stdev * q, j.lower, j.upper);
            }
            break;
        }
    }
    return y;
}

double ExpLevyModel::log_variance(std::size_t i, double t) const {
    return (vol(i, i) + params_.jumps.intensity * jump_second_moment_[i]) * t;
}

ExpLevyModel build_exp_levy(const ExpLevyParams& p) {
    const std::size_t d = p.initial_prices.size();
    if (d == 0) throw std::invalid_argument("exp-Levy model needs at least one asset");
    for (double x : p.initial_prices)
        if (!(x > 0.0)) throw std::invalid_argument("initial prices must be positive");
    if (!(p.rate >= 0.0)) throw std::invalid_argument("rate must be nonnegative");
    if (p.dividends.size() != d) throw std::invalid_argument("need one dividend yield per asset");
    for (double q : p.dividends)
        if (!(q >= 0.0)) throw std::invalid_argument("dividend yields must be nonnegative");
    if (p.vol_matrix.size() != d * d) throw std::invalid_argument("vol_matrix must be d x d");

    ExpLevyModel m;
    m.params_ = p;

    Eigen::MatrixXd a(d, d);
    double scale = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k) {
            a(i, k) = p.vol_matrix[i * d + k];
            scale = std::max(scale, std::abs(a(i, k)));
        }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < i; ++k)
            if (std::abs(a(i, k) - a(k, i)) > 1e-12 * std::max(1.0, scale))
                throw HypothesisViolation("vol-matrix", "a must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    const double floor = 1e-12 * std::max(1.0, scale);
    if (eig.eigenvalues().minCoeff() < -floor) {
        std::ostringstream msg;
        msg << "a must be nonnegative-definite (smallest eigenvalue " << eig.eigenvalues().minCoeff() << ")";
        throw HypothesisViolation("vol-matrix", msg.str());
    }
    m.nondegenerate_ = eig.eigenvalues().minCoeff() > floor;
    m.chol_.assign(d * d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        const double s = std::sqrt(std::max(0.0, eig.eigenvalues()[k]));
        for (std::size_t i = 0; i < d; ++i) m.chol_[i * d + k] = eig.eigenvectors()(i, k) * s;
    }

    const JumpSpec& j = p.jumps;
    if (!(j.intensity >= 0.0)) throw std::invalid_argument("jump intensity must be nonnegative");
    m.jump_exp_moment_.assign(d, 1.0);
    m.jump_second_moment_.assign(d, 0.0);
    m.beta_sup_ = std::numeric_limits<double>::infinity();
    const bool active = j.family != JumpFamily::none && j.intensity > 0.0;
    if (active) {
        switch (j.family) {
            case JumpFamily::none: break;
            case JumpFamily::point_masses: {
                if (j.atoms.empty() || j.atoms.size() != j.weights.size())
                    throw std::invalid_argument("point-mass jumps need matching atoms and weights");
                double total = 0.0;
                for (double w : j.weights) {
                    if (!(w > 0.0)) throw std::invalid_argument("point-mass weights must be positive");
                    total += w;
                }
                if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("point-mass weights must sum to 1");
                for (const auto& y : j.atoms)
                    if (y.size() != d) throw std::invalid_argument("jump atoms must have one coordinate per asset");
                for (std::size_t i = 0; i < d; ++i) {
                    double e = 0.0, s2 = 0.0;
                    for (std::size_t a2 = 0; a2 < j.atoms.size(); ++a2) {
                        e += j.weights[a2] * std::exp(j.atoms[a2][i]);
                        s2 += j.weights[a2] * j.atoms[a2][i] * j.atoms[a2][i];
                    }
                    m.jump_exp_moment_[i] = e;
                    m.jump_second_moment_[i] = s2;
                }
                break;
            }
            case JumpFamily::double_exponential: {
                if (!(j.p_up >= 0.0 && j.p_up <= 1.0)) throw std::invalid_argument("p_up must lie in [0, 1]");
                if (!(j.eta_up > 0.0 && j.eta_down > 0.0))
                    throw std::invalid_argument("double-exponential rates must be positive");
                m.beta_sup_ = std::min(j.eta_up, j.eta_down);
                if (m.beta_sup_ <= 1.0) {
                    std::ostringstream msg;
                    msg << "double-exponential jumps have exponential moments only for beta < " << m.beta_sup_
                        << "; neither bounded (beta > 1) nor linear-growth (beta > 2) payoffs are admissible";
                    throw HypothesisViolation("exponential-moment", msg.str());
                }
                const double e = j.p_up * j.eta_up / (j.eta_up - 1.0) + (1.0 - j.p_up) * j.eta_down / (j.eta_down + 1.0);
                const double s2 = 2.0 * j.p_up / (j.eta_up * j.eta_up) + 2.0 * (1.0 - j.p_up) / (j.eta_down * j.eta_down);
                m.jump_exp_moment_.assign(d, e);
                m.jump_second_moment_.assign(d, s2);
                break;
            }
            case JumpFamily::truncated_normal: {
                if (!(j.stdev > 0.0 && j.lower < j.upper))
                    throw std::invalid_argument("truncated-normal jumps need stdev > 0 and lower < upper");
                const auto mom = truncated_normal_moments(j.mean, j.stdev, j.lower, j.upper);
                m.jump_exp_moment_.assign(d, mom.exp_moment);
                m.jump_second_moment_.assign(d, mom.second_moment);
                break;
            }
        }
    }
    m.drift_.resize(d);
    for (std::size_t i = 0; i < d; ++i)
        m.drift_[i] = -0.5 * a(i, i) - (active ? j.intensity * (m.jump_exp_moment_[i] - 1.0) : 0.0);
    if (!active) m.params_.jumps.intensity = 0.0;
    return m;
}

}  // namespace ostop
