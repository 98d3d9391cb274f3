#pragma once

#include "ostop/asymptotics.hpp"
#include "ostop/exp_levy.hpp"
#include "ostop/markov_chain.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ostop {

enum class PayoffKind { put, call, capped_call, basket_put, constant };

struct Payoff {
    PayoffKind kind = PayoffKind::put;
    double strike = 0.0;
    double cap = 0.0;
    double level = 0.0;           ///< constant payoff value
    std::vector<double> weights;  ///< basket weights
    std::string name;

    double operator()(std::span<const double> x) const;
    GrowthClass growth() const;
    /// ||psi||_inf for bounded payoffs, K in |psi(x)| <= K(1 + |x|) otherwise.
    double growth_constant() const;
};

/// "put:K", "call:K", "capped-call:K,C", "basket-put:K,w1,...,wd", "constant:c".
Payoff parse_payoff(const std::string& spec, std::size_t dim);

/// Samples psi on a log grid around the model's spot: psi >= 0, the declared
/// growth bound, and no jumps between neighbouring samples beyond the Lipschitz scale.
void check_payoff(const Payoff& psi, std::size_t dim);

struct LatticeOptions {
    double log_width = 8.0;          ///< states beyond this log-distance from spot are killed
    std::size_t max_jump_atoms = 7;  ///< Gauss rule size for continuous jump laws
    unsigned threads = 1;
};

/// Recombining log-price lattice in the eigen-coordinates of a, steps
/// sqrt(lambda_k dt), branch probabilities fixed by exact one-step martingale
/// conditions. Jumps are Gauss-discretized and snapped to the lattice.
struct PriceLattice {
    std::shared_ptr<const MarkovChainModel> chain;
    std::size_t root = 0;
    double dt = 0.0;
    std::vector<double> h;
    std::vector<double> u;  ///< up-probability shifts, p(+-) = (1 +- u)/2
    std::size_t jump_atoms = 0;
};

PriceLattice build_price_lattice(const ExpLevyModel& m, double dt, const LatticeOptions& opts = {});

/// Gauss rule with at most `atoms` nodes for the one-dimensional jump law of the model.
void jump_quadrature(const JumpSpec& j, std::size_t atoms, std::vector<double>& nodes, std::vector<double>& weights);

struct PriceResult {
    double value = 0.0;
    double T = 0.0;
    std::size_t n_steps = 0;
    double dt = 0.0;
    std::size_t n_states = 0;
};

/// V_T(x) = sup over stopping times up to T of E e^{-r sigma} psi(X_sigma) on the lattice.
PriceResult price_american(const ExpLevyModel& m, const Payoff& psi, double T, std::size_t n_steps,
                           const LatticeOptions& opts = {});

/// Same lattice without early exercise.
PriceResult price_european(const ExpLevyModel& m, const Payoff& psi, double T, std::size_t n_steps,
                           const LatticeOptions& opts = {});

struct PerpetualOptions {
    double initial_dt = 0.01;
    std::size_t max_refinements = 6;
    LatticeOptions lattice;
};

struct PerpetualResult {
    double value = 0.0;
    double T_star = 0.0;        ///< truncation horizon actually used
    double bound_at_T_star = 0.0;
    double dt = 0.0;
    std::size_t n_steps = 0;
    double eps_disc = 0.0;      ///< last doubling difference
    std::size_t refinements = 0;
    bool certified = false;     ///< bound <= tol/2 and eps_disc <= tol/2
};

/// Perpetual value as V_{T*}, T* from the horizon bound, dt halved until the
/// doubling difference is below tol/2.
PerpetualResult price_perpetual(const ExpLevyModel& m, const Payoff& psi, double tol, const PerpetualOptions& opts = {});

struct PriceReport {
    std::vector<double> x;
    std::vector<double> T;
    std::vector<double> V_T;
    std::vector<double> eps_disc;  ///< |V_T(N) - V_T(2N)| + perpetual eps_disc
    std::vector<double> gap;
    std::vector<RateBound> bound;
    std::vector<bool> row_ok;
    PerpetualResult perpetual;
    std::size_t n_steps = 0;
    bool monotone = false;
    bool ok = false;
    std::string failure;
};

struct VerifyOptions {
    double perpetual_tol = 1e-2;
    PerpetualOptions perpetual;
    double monotone_slack = 1e-9;
};

/// V_T for each T against the perpetual value: V_T nondecreasing in T and
/// V - V_T <= bound(T) + eps_disc on every row. Rejects degenerate a, payoffs
/// outside the jump-moment class, and linear growth without positive dividends.
PriceReport verify_horizon_convergence(const ExpLevyModel& m, const Payoff& psi, const std::vector<double>& T_list,
                                       std::size_t n_steps, const VerifyOptions& opts = {});

struct SupermartingaleRow {
    std::string rule;
    std::size_t asset = 0;
    double estimate = 0.0;
    double std_error = 0.0;
    double bound = 0.0;  ///< x_i e^{-delta_i T}
    bool equality_expected = false;
    bool ok = false;
};

struct SupermartingaleReport {
    std::vector<SupermartingaleRow> rows;
    bool ok = false;
};

struct SupermartingaleOptions {
    std::vector<double> up_levels{1.1, 1.25};
    std::vector<double> down_levels{0.9};
    double extra_horizon = 0.0;  ///< passage rules are capped at T + extra (0: T)
    std::size_t grid_steps = 200;
    unsigned threads = 1;
};

/// Monte-Carlo E_x e^{-r tau} X^i_tau against x_i e^{-delta_i T} for tau = T and
/// tau = first grid time after T that X^i crosses a level (capped).
SupermartingaleReport dividend_supermartingale_check(const ExpLevyModel& m, double T, std::size_t n_paths,
                                                     std::uint64_t seed, const SupermartingaleOptions& opts = {});

}  // namespace ostop
