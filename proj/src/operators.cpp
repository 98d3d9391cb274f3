#include "ostop/operators.hpp"

#include "ostop/errors.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <cmath>
#include <stdexcept>

namespace ostop {

std::vector<double> semigroup_steps(const MarkovChainModel& chain, std::span<const double> h, std::size_t steps,
                                    double rho) {
    if (h.size() != chain.size()) throw std::invalid_argument("semigroup: function size does not match chain");
    std::vector<double> cur(h.begin(), h.end());
    std::vector<double> next(cur.size());
    for (std::size_t k = 0; k < steps; ++k) {
        chain.kernel().apply(cur, next, rho);
        cur.swap(next);
    }
    return cur;
}

std::vector<double> semigroup_apply(const MarkovChainModel& chain, std::span<const double> h, double t) {
    return semigroup_steps(chain, h, chain.steps_for(t));
}

std::vector<double> survival(const MarkovChainModel& chain, double t) {
    std::vector<double> one(chain.size(), 1.0);
    return semigroup_apply(chain, one, t);
}

double discount_factor(const MarkovChainModel& chain, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("discount rate must be nonnegative");
    return std::exp(-lambda * chain.step());
}

std::vector<double> potential_apply(const MarkovChainModel& chain, std::span<const double> h, double lambda) {
    if (h.size() != chain.size()) throw std::invalid_argument("potential: function size does not match chain");
    if (lambda < 0.0) throw std::invalid_argument("potential: lambda must be nonnegative");
    if (lambda == 0.0 && !chain.is_transient())
        throw HypothesisViolation("transience",
                                  "R_0 diverges on a chain with a conservative closed class; use lambda > 0");
    const double rho = discount_factor(chain, lambda);
    const std::size_t n = chain.size();

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(chain.kernel().nonzeros() + n);
    for (std::size_t i = 0; i < n; ++i) {
        trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
        auto cols = chain.kernel().cols(i);
        auto vals = chain.kernel().values(i);
        for (std::size_t p = 0; p < cols.size(); ++p)
            trip.emplace_back(static_cast<int>(i), static_cast<int>(cols[p]), -rho * vals[p]);
    }
    Eigen::SparseMatrix<double> a(static_cast<int>(n), static_cast<int>(n));
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw std::runtime_error("potential: factorization of I - rho P failed");
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) rhs[static_cast<Eigen::Index>(i)] = chain.step() * h[i];
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw std::runtime_error("potential: solve failed");
    return {x.data(), x.data() + n};
}

}  // namespace ostop
