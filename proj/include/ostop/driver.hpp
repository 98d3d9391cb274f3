#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace ostop {

/// Generator f(x, y) of a backward equation on a chain, x a state index.
/// Expected nonincreasing in y; solvers detect violations.
class Driver {
public:
    using Fn = std::function<double(std::size_t state, double y)>;

    Driver() = default;  ///< f = 0

    static Driver zero();
    /// f = -lambda y.
    static Driver linear(double lambda);
    /// f = -a tanh(y / b).
    static Driver soft_clip(double a, double b);
    /// f(s, y) = intercept[s] - slope[s] y, slopes >= 0.
    static Driver table(std::vector<double> intercept, std::vector<double> slope);
    static Driver custom(std::string name, Fn f);

    double operator()(std::size_t state, double y) const;
    const std::string& name() const noexcept { return name_; }
    bool is_zero() const noexcept { return kind_ == Kind::zero; }

    /// Root of c y - dt f(s, y) = b for c >= 1. Closed form for affine
    /// drivers; safeguarded regula falsi otherwise. Throws HypothesisViolation
    /// ("H2") when no root can be bracketed or the iteration stalls.
    /// `residual` (optional) receives |c y - dt f(s, y) - b|.
    double implicit_step(std::size_t state, double b, double dt, double c = 1.0, double* residual = nullptr) const;

    /// Samples (y - y')(f(s, y) - f(s, y')) <= 0 over adjacent points of `ys`
    /// for every state; throws HypothesisViolation("H2") on the first failure.
    void check_monotone(std::size_t n_states, const std::vector<double>& ys) const;

private:
    enum class Kind { zero, affine, generic };
    Kind kind_ = Kind::zero;
    std::string name_ = "zero";
    std::vector<double> intercept_;  // affine: per state, or a single shared entry
    std::vector<double> slope_;
    Fn fn_;

    double intercept(std::size_t s) const { return intercept_.size() == 1 ? intercept_[0] : intercept_[s]; }
    double slope(std::size_t s) const { return slope_.size() == 1 ? slope_[0] : slope_[s]; }
};

/// Parses "zero", "linear:lambda", "soft-clip:a,b".
Driver parse_driver(const std::string& spec);

}  // namespace ostop
