#include "ostop/errors.hpp"
#include "ostop/oracle/brute_force_snell.hpp"
#include "ostop/random_problems.hpp"
#include "ostop/solvers.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>

using namespace ostop;

namespace {

std::shared_ptr<const MarkovChainModel> dense_chain(std::size_t n, std::vector<double> P, double dt) {
    return std::make_shared<const MarkovChainModel>(MarkovChainModel::from_dense(n, P, dt));
}

}  // namespace

TEST_CASE("one-state linear driver: implicit Euler is (1 + dt lambda)^-N") {
    for (std::size_t N : {1u, 10u, 100u}) {
        StoppingProblem p;
        p.chain = dense_chain(1, {1.0}, 1.0 / static_cast<double>(N));
        p.n_steps = N;
        p.driver = Driver::linear(0.5);
        p.terminal = {1.0};
        const double expect = std::pow(1.0 + 0.5 / static_cast<double>(N), -static_cast<double>(N));
        CHECK(solve_bsde(p)(0, 0) == doctest::Approx(expect).epsilon(1e-13));
        CHECK(std::abs(solve_bsde(p)(0, 0) - std::exp(-0.5)) <= 5.0 / static_cast<double>(N));
    }
}

TEST_CASE("two-state hand example") {
    StoppingProblem p;
    p.chain = dense_chain(2, {0.5, 0.5, 0.0, 1.0}, 1.0);
    p.n_steps = 1;
    p.obstacle = {1.0, 0.0};
    p.terminal = {1.0, 2.0};
    const auto sol = solve_rbsde(p);
    CHECK(sol.Y(0, 0) == doctest::Approx(1.5));
    CHECK(sol.dK(0, 0) == doctest::Approx(0.0));
    CHECK(sol.Y(0, 1) == doctest::Approx(2.0));
    p.obstacle = {2.5, 0.0};
    p.terminal = {2.5, 2.0};
    const auto sol2 = solve_rbsde(p);
    CHECK(sol2.Y(0, 0) == doctest::Approx(2.5));
    CHECK(sol2.dK(0, 0) == doctest::Approx(0.25));
    const auto bf = oracle::brute_force_snell(p, 0);
    CHECK(bf.value == doctest::Approx(2.5));
    CHECK(bf.rules_enumerated == doctest::Approx(2.0));
}

TEST_CASE("two-step tree by hand, with discount") {
    // 0 -> {1, 2} evenly, 1 -> 1, 2 -> 2 (each leaks 10%).
    StoppingProblem p;
    p.chain = dense_chain(3, {0.0, 0.5, 0.5, 0.0, 0.9, 0.0, 0.0, 0.0, 0.9}, 1.0);
    p.n_steps = 2;
    p.discount = 0.1;
    p.obstacle = {0.3, 1.0, 0.0};
    p.terminal = {0.3, 1.0, 2.0};
    const double r = std::exp(-0.1);
    // step 1: state 1 max(1, 0.9 r), state 2 max(0, 1.8 r); step 0: max(0.3, r/2 (Y1 + Y2))
    const double y1 = std::max(1.0, 0.9 * r), y2 = 1.8 * r;
    const double expect = std::max(0.3, 0.5 * r * (y1 + y2));
    CHECK(snell_value(p)[0] == doctest::Approx(expect).epsilon(1e-14));
    CHECK(oracle::brute_force_snell(p, 0).value == doctest::Approx(expect).epsilon(1e-14));
    CHECK(oracle::count_stopping_rules(p, 0) == doctest::Approx(1.0 + 2.0 * 2.0));
}

TEST_CASE("brute force refuses large instances") {
    std::mt19937_64 rng(1);
    RandomChainSpec spec;
    spec.n_states = 8;
    spec.max_successors = 8;
    const auto chain = random_chain(spec, rng);
    auto p = random_problem(chain, 4, random_driver("zero", 8, rng), rng);
    CHECK_THROWS_AS(oracle::brute_force_snell(p, 0), InstanceTooLarge);
    p.n_steps = 5;
    CHECK_THROWS_AS(oracle::brute_force_snell(p, 0), InstanceTooLarge);
}

TEST_CASE("snell_value agrees with the full solve and invariants hold") {
    for (const char* kind : {"zero", "linear", "soft-clip", "table"}) {
        std::mt19937_64 rng(42);
        RandomChainSpec spec;
        spec.n_states = 12;
        spec.kill_max = 0.1;
        const auto chain = random_chain(spec, rng);
        const auto p = random_problem(chain, 25, random_driver(kind, 12, rng), rng);
        const auto sol = solve_rbsde(p);
        const auto v = snell_value(p);
        for (std::size_t s = 0; s < 12; ++s) CHECK(v[s] == doctest::Approx(sol.Y(0, s)).epsilon(1e-14));
        const auto inv = check_invariants(sol, p);
        CHECK_MESSAGE(inv.ok, inv.message);
        for (std::size_t k = 0; k < 25; ++k)
            for (std::size_t s = 0; s < 12; ++s) {
                CHECK(sol.Y(k, s) >= p.g(s) - 1e-12);
                CHECK(sol.dK(k, s) >= 0.0);
            }
    }
}

TEST_CASE("B1 and B2 are enforced") {
    StoppingProblem p;
    p.chain = dense_chain(1, {0.5}, 1.0);
    p.n_steps = 3;
    p.obstacle = {1.0};
    p.terminal = {0.0};
    try {
        solve_rbsde(p);
        FAIL("expected B1");
    } catch (const HypothesisViolation& e) {
        CHECK(e.condition() == "B1");
        CHECK(std::string(e.what()).find("g(X_T) <= phi(X_T)") != std::string::npos);
    }
    StoppingProblem q;
    q.chain = dense_chain(1, {1.0}, 1.0);
    q.obstacle = {1.0};
    try {
        solve_rbsde(q);
        FAIL("expected B2");
    } catch (const HypothesisViolation& e) {
        CHECK(e.condition() == "B2");
    }
    q.discount = 0.2;  // discounting makes the horizon summable
    CHECK(solve_rbsde(q).Y(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("infinite horizon fixed points") {
    // Y = max(1, 0.5 Y) = 1
    StoppingProblem p;
    p.chain = dense_chain(1, {0.5}, 1.0);
    p.obstacle = {1.0};
    CHECK(solve_rbsde(p).Y(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    // No obstacle, f = c: Y = 0.5 Y + dt c  =>  Y = 2 dt c
    StoppingProblem q;
    q.chain = dense_chain(1, {0.5}, 0.25);
    q.driver = Driver::table({3.0}, {0.0});
    const auto sol = solve_rbsde(q);
    CHECK(sol.Y(0, 0) == doctest::Approx(1.5).epsilon(1e-10));
    CHECK(sol.fixed_point_error <= 1e-10);
}

TEST_CASE("penalization increases in n towards the reflected solution") {
    std::mt19937_64 rng(9);
    RandomChainSpec spec;
    spec.n_states = 15;
    spec.kill_max = 0.1;
    spec.dt = 0.1;
    const auto chain = random_chain(spec, rng);
    const auto p = random_problem(chain, 30, random_driver("soft-clip", 15, rng), rng);
    const auto ref = solve_rbsde(p);
    Grid prev;
    double prev_gap = 1e300;
    for (double n : {1.0, 10.0, 100.0, 1000.0}) {
        const auto Y = solve_penalized(p, n);
        double gap = 0.0;
        for (std::size_t k = 0; k <= 30; ++k)
            for (std::size_t s = 0; s < 15; ++s) {
                gap = std::max(gap, std::abs(Y(k, s) - ref.Y(k, s)));
                CHECK(Y(k, s) <= ref.Y(k, s) + 1e-12);
                if (prev.rows()) CHECK(Y(k, s) >= prev(k, s) - 1e-12);
            }
        CHECK(gap < prev_gap);
        prev_gap = gap;
        prev = Y;
    }
}

TEST_CASE("epsilon-optimal rules lose at most epsilon") {
    std::mt19937_64 rng(3);
    RandomChainSpec spec;
    spec.n_states = 10;
    spec.kill_max = 0.2;
    const auto chain = random_chain(spec, rng);
    const auto p = random_problem(chain, 20, random_driver("soft-clip", 10, rng), rng);
    const auto sol = solve_rbsde(p);
    for (double eps : {1e-9, 0.01, 0.1, 0.5}) {
        const auto rule = epsilon_optimal_time(sol, p, eps);
        const auto v = evaluate_stopping_rule(p, rule);
        for (std::size_t s = 0; s < 10; ++s) {
            CHECK(v[s] >= sol.Y(0, s) - eps - 1e-10);
            CHECK(v[s] <= sol.Y(0, s) + 1e-10);
        }
    }
}

TEST_CASE("nonlinear expectation composes over intermediate times") {
    std::mt19937_64 rng(5);
    RandomChainSpec spec;
    spec.n_states = 6;
    const auto chain = random_chain(spec, rng);
    StoppingProblem p;
    p.chain = chain;
    p.n_steps = 10;
    p.driver = Driver::soft_clip(0.5, 1.0);
    std::vector<double> xi{1.0, -1.0, 0.5, 2.0, 0.0, -0.3};
    const auto direct = nonlinear_expectation(p, 0, 10, xi);
    const auto mid = nonlinear_expectation(p, 4, 10, xi);
    const auto composed = nonlinear_expectation(p, 0, 4, mid);
    for (std::size_t s = 0; s < 6; ++s) CHECK(direct[s] == doctest::Approx(composed[s]).epsilon(1e-13));
}

TEST_CASE("discounting as a factor matches the scaled-data pipeline") {
    std::mt19937_64 rng(11);
    RandomChainSpec spec;
    spec.n_states = 8;
    spec.dt = 0.05;
    const auto chain = random_chain(spec, rng);
    auto p = random_problem(chain, 20, random_driver("soft-clip", 8, rng), rng);
    p.discount = 0.3;
    const auto r = discount_transform_check(p);
    CHECK(r.passed);
    CHECK(r.max_difference <= 1e-9);
    CHECK(r.backward_euler_gap > 0.0);
}
