#pragma once

#include <cstddef>

namespace ostop::tol {

// Every numerical slack used by solvers and checks lives here.

/// Row sums of a transition kernel may exceed one by at most this much.
inline constexpr double kernel_row_sum = 1e-12;

/// Residual target of the implicit driver step, relative to max(1, |rhs|).
inline constexpr double implicit_residual = 1e-12;
inline constexpr std::size_t implicit_max_iter = 200;
inline constexpr std::size_t bracket_max_widen = 64;

/// Reflection may undershoot the obstacle by this much.
inline constexpr double reflection = 1e-12;
/// A node with dK above this must sit on the obstacle ...
inline constexpr double reflection_active = 1e-12;
/// ... to within this distance.
inline constexpr double minimality = 1e-9;

/// Equality checks between independently computed values.
inline constexpr double equality = 1e-9;
/// Slack allowed in monotonicity checks.
inline constexpr double monotone = 1e-12;

/// Infinite-horizon fixed point: a-posteriori error target and iteration cap.
inline constexpr double fixed_point = 1e-10;
inline constexpr std::size_t fixed_point_max_iter = 5'000'000;

/// Survival mass below which a killed chain is treated as dead.
inline constexpr double survival_floor = 1e-14;

/// Sampled monotonicity check of drivers: (y-y')(f(y)-f(y')) <= this * scale.
inline constexpr double driver_monotone = 1e-12;

}  // namespace ostop::tol
