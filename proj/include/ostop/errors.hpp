#pragma once

#include <stdexcept>
#include <string>

namespace ostop {

/// A model or problem violates a standing hypothesis (monotone driver,
/// obstacle below terminal payoff, jump moments, ...). `condition()` names it.
class HypothesisViolation : public std::invalid_argument {
public:
    HypothesisViolation(std::string condition, const std::string& what)
        : std::invalid_argument(condition + ": " + what), condition_(std::move(condition)) {}

    const std::string& condition() const noexcept { return condition_; }

private:
    std::string condition_;
};

/// An iterative procedure hit its cap without meeting its tolerance.
class ConvergenceFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Exhaustive enumeration refused because the instance is too large.
class InstanceTooLarge : public std::invalid_argument {
public:
    InstanceTooLarge(const std::string& what, double rules_needed)
        : std::invalid_argument(what), rules_needed_(rules_needed) {}

    double rules_needed() const noexcept { return rules_needed_; }

private:
    double rules_needed_;
};

/// Malformed experiment configuration.
class SchemaError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace ostop
