#include "ostop/errors.hpp"
#include "ostop/pricing.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace ostop;

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double bs_put(double x, double K, double r, double q, double sigma, double T) {
    const double d1 = (std::log(x / K) + (r - q + 0.5 * sigma * sigma) * T) / (sigma * std::sqrt(T));
    const double d2 = d1 - sigma * std::sqrt(T);
    return K * std::exp(-r * T) * norm_cdf(-d2) - x * std::exp(-q * T) * norm_cdf(-d1);
}

// Plain Cox-Ross-Rubinstein tree with early exercise.
double crr_american_put(double x, double K, double r, double sigma, double T, int n) {
    const double dt = T / n, u = std::exp(sigma * std::sqrt(dt)), d = 1.0 / u;
    const double p = (std::exp(r * dt) - d) / (u - d), disc = std::exp(-r * dt);
    std::vector<double> pw(2 * n + 1);  // pw[i] = u^(i - n)
    for (int i = 0; i <= 2 * n; ++i) pw[i] = std::pow(u, i - n);
    std::vector<double> v(n + 1);
    for (int j = 0; j <= n; ++j) v[j] = std::max(K - x * pw[2 * j], 0.0);
    for (int k = n - 1; k >= 0; --k)
        for (int j = 0; j <= k; ++j)
            v[j] = std::max(disc * (p * v[j + 1] + (1 - p) * v[j]), K - x * pw[2 * j - k + n]);
    return v[0];
}

ExpLevyModel gbm(double x, double r, double q, double sigma) {
    ExpLevyParams p;
    p.initial_prices = {x};
    p.rate = r;
    p.dividends = {q};
    p.vol_matrix = {sigma * sigma};
    return build_exp_levy(p);
}

}  // namespace

TEST_CASE("payoff parsing and checks") {
    const auto put = parse_payoff("put:100", 1);
    CHECK(put(std::vector<double>{80.0}) == doctest::Approx(20.0));
    CHECK(put.growth() == GrowthClass::bounded);
    CHECK(put.growth_constant() == doctest::Approx(100.0));
    const auto cc = parse_payoff("capped-call:1,0.5", 1);
    CHECK(cc(std::vector<double>{3.0}) == doctest::Approx(0.5));
    const auto basket = parse_payoff("basket-put:1,0.5,0.5", 2);
    CHECK(basket(std::vector<double>{0.6, 0.8}) == doctest::Approx(0.3));
    CHECK(parse_payoff("call:1", 1).growth() == GrowthClass::linear);
    CHECK_THROWS_AS(parse_payoff("straddle:1", 1), SchemaError);
    CHECK_THROWS_AS(parse_payoff("put:1,2", 1), SchemaError);
    CHECK_THROWS_AS(parse_payoff("basket-put:1,0.5", 2), SchemaError);
    CHECK_THROWS_AS(parse_payoff("put:-1", 1), HypothesisViolation);
}

TEST_CASE("European lattice price against Black-Scholes") {
    const auto m = gbm(100.0, 0.05, 0.02, 0.25);
    const auto psi = parse_payoff("put:105", 1);
    const auto r = price_european(m, psi, 1.0, 2000);
    CHECK(r.value == doctest::Approx(bs_put(100.0, 105.0, 0.05, 0.02, 0.25, 1.0)).epsilon(2e-3));
}

TEST_CASE("American lattice price against an independent binomial tree") {
    const auto m = gbm(100.0, 0.05, 0.0, 0.2);
    const auto psi = parse_payoff("put:100", 1);
    const double crr = crr_american_put(100.0, 100.0, 0.05, 0.2, 1.0, 10000);
    const auto am = price_american(m, psi, 1.0, 2000);
    CHECK(am.value == doctest::Approx(crr).epsilon(1e-3));
    const auto eu = price_european(m, psi, 1.0, 2000);
    CHECK(am.value >= eu.value);
    CHECK(am.value >= psi(std::vector<double>{100.0}));
}

TEST_CASE("put value is homogeneous in (x, K)") {
    const auto a = price_american(gbm(100.0, 0.05, 0.0, 0.3), parse_payoff("put:110", 1), 2.0, 500).value;
    const auto b = price_american(gbm(250.0, 0.05, 0.0, 0.3), parse_payoff("put:275", 1), 2.0, 500).value;
    CHECK(b == doctest::Approx(2.5 * a).epsilon(1e-12));
}

TEST_CASE("point-mass jumps: European put against the Poisson mixture") {
    ExpLevyParams p;
    p.initial_prices = {100.0};
    p.rate = 0.05;
    p.dividends = {0.0};
    p.vol_matrix = {0.04};
    p.jumps.family = JumpFamily::point_masses;
    p.jumps.intensity = 0.5;
    p.jumps.atoms = {{-0.2}};
    p.jumps.weights = {1.0};
    const auto m = build_exp_levy(p);
    const double T = 1.0, lam = 0.5, y = -0.2, k = std::exp(y) - 1.0;
    double mix = 0.0, pn = std::exp(-lam * T);
    for (int n = 0; n < 40; ++n) {
        mix += pn * bs_put(100.0 * std::exp(n * y - lam * k * T), 100.0, 0.05, 0.0, 0.2, T);
        pn *= lam * T / (n + 1);
    }
    const auto lat = price_european(m, parse_payoff("put:100", 1), T, 2000);
    CHECK(lat.value == doctest::Approx(mix).epsilon(1e-2));
}

TEST_CASE("Gauss rule for double-exponential jumps matches moments") {
    JumpSpec j;
    j.family = JumpFamily::double_exponential;
    j.p_up = 0.3;
    j.eta_up = 8.0;
    j.eta_down = 4.0;
    std::vector<double> nodes, weights;
    jump_quadrature(j, 5, nodes, weights);
    CHECK(nodes.size() == 5);
    for (int m = 0; m <= 6; ++m) {
        double q = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) q += weights[i] * std::pow(nodes[i], m);
        const double exact = j.p_up * std::tgamma(m + 1.0) / std::pow(j.eta_up, m) +
                             (1 - j.p_up) * (m % 2 ? -1.0 : 1.0) * std::tgamma(m + 1.0) / std::pow(j.eta_down, m);
        CHECK(q == doctest::Approx(exact).epsilon(1e-3).scale(1e-6));
    }
}

TEST_CASE("perpetual put against the closed form") {
    const auto m = gbm(100.0, 0.05, 0.0, 0.2);
    const double b = 2 * 0.05 * 100.0 / (2 * 0.05 + 0.04);
    const double exact = (100.0 - b) * std::pow(100.0 / b, -2 * 0.05 / 0.04);
    const auto pr = price_perpetual(m, parse_payoff("put:100", 1), 1e-2);
    CHECK(pr.certified);
    CHECK(std::abs(pr.value - exact) <= 1e-2);
    CHECK(pr.T_star >= std::log(400.0 / 1e-2) / 0.05 - 1e-9);
}

TEST_CASE("perpetual call with dividends against the closed form") {
    const double s2 = 0.04, r = 0.1, q = 0.05;
    const double bq = r - q - 0.5 * s2;
    const double th = (-bq + std::sqrt(bq * bq + 2.0 * s2 * r)) / s2;
    const double bd = th / (th - 1.0);
    const double exact = (bd - 1.0) * std::pow(1.0 / bd, th);
    const auto pr = price_perpetual(gbm(1.0, r, q, 0.2), parse_payoff("call:1", 1), 1e-3);
    CHECK(std::abs(pr.value - exact) <= 1e-3);
}

TEST_CASE("perpetual pricing rejects hypotheses it cannot certify") {
    CHECK_THROWS_AS(price_perpetual(gbm(1.0, 0.1, 0.0, 0.2), parse_payoff("call:1", 1), 1e-2), HypothesisViolation);
    CHECK_THROWS_AS(price_perpetual(gbm(1.0, 0.0, 0.0, 0.2), parse_payoff("put:1", 1), 1e-2), HypothesisViolation);
    try {
        verify_horizon_convergence(gbm(1.0, 0.1, 0.0, 0.2), parse_payoff("call:1", 1), {1.0}, 100);
        FAIL("expected a violation");
    } catch (const HypothesisViolation& e) {
        CHECK(e.condition() == "dividend-or-bounded");
    }
    ExpLevyParams p;
    p.initial_prices = {1.0};
    p.rate = 0.1;
    p.dividends = {0.05};
    p.vol_matrix = {0.04};
    p.jumps.family = JumpFamily::double_exponential;
    p.jumps.intensity = 0.5;
    p.jumps.eta_up = 1.5;
    p.jumps.eta_down = 3.0;
    try {
        verify_horizon_convergence(build_exp_levy(p), parse_payoff("call:1", 1), {1.0}, 100);
        FAIL("expected a violation");
    } catch (const HypothesisViolation& e) {
        CHECK(e.condition() == "exponential-moment");
    }
    p.jumps = {};
    p.vol_matrix = {0.0};
    try {
        verify_horizon_convergence(build_exp_levy(p), parse_payoff("put:1", 1), {1.0}, 100);
        FAIL("expected a violation");
    } catch (const HypothesisViolation& e) {
        CHECK(e.condition() == "nondegenerate-vol");
    }
}

TEST_CASE("two-asset basket lattice") {
    ExpLevyParams p;
    p.initial_prices = {1.0, 1.0};
    p.rate = 0.05;
    p.dividends = {0.0, 0.0};
    p.vol_matrix = {0.04, 0.01, 0.01, 0.09};
    const auto m = build_exp_levy(p);
    const auto psi = parse_payoff("basket-put:1,0.5,0.5", 2);
    const auto a1 = price_american(m, psi, 0.5, 50);
    const auto e1 = price_european(m, psi, 0.5, 50);
    CHECK(a1.value >= e1.value);
    CHECK(a1.value > 0.0);
    const auto a2 = price_american(m, psi, 1.0, 100);
    CHECK(a2.value >= a1.value - 2e-3);
}

TEST_CASE("discounted prices with dividends: supermartingale check") {
    const auto rep = dividend_supermartingale_check(gbm(1.0, 0.1, 0.05, 0.2), 1.0, 20000, 3);
    CHECK(rep.ok);
    for (const auto& row : rep.rows)
        if (!row.equality_expected) CHECK(row.estimate <= row.bound + 3.0 * row.std_error);
    const auto mart = dividend_supermartingale_check(gbm(1.0, 0.1, 0.0, 0.2), 1.0, 20000, 3);
    CHECK(std::abs(mart.rows.front().estimate - 1.0) <= 3.0 * mart.rows.front().std_error);
}
