#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ostop {

/// Row-compressed substochastic transition matrix. The deficit of row i is
/// the probability of jumping to the cemetery from state i.
class SparseKernel {
public:
    SparseKernel() = default;

    /// Appends one row given as (column, probability) pairs. Zero entries are dropped.
    void push_row(std::span<const std::size_t> cols, std::span<const double> probs);
    static SparseKernel from_dense(std::size_t n, std::span<const double> row_major);

    std::size_t size() const noexcept { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
    std::size_t nonzeros() const noexcept { return values_.size(); }

    std::span<const std::size_t> cols(std::size_t row) const {
        return {cols_.data() + row_ptr_[row], row_ptr_[row + 1] - row_ptr_[row]};
    }
    std::span<const double> values(std::size_t row) const {
        return {values_.data() + row_ptr_[row], row_ptr_[row + 1] - row_ptr_[row]};
    }
    double row_sum(std::size_t row) const;
    double entry(std::size_t row, std::size_t col) const;

    /// out = scale * P h.
    void apply(std::span<const double> h, std::span<double> out, double scale = 1.0) const;

private:
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> cols_;
    std::vector<double> values_;
};

enum class GeneratorTag { generic, laplacian, fractional_laplacian, exp_levy_lattice };

std::string to_string(GeneratorTag tag);

/// Finite-state, discrete-time killed Markov chain. Immutable once built.
///
/// States carry coordinates in R^dim (a lattice over the domain for the
/// stable chains, asset prices for pricing lattices). Functions on the state
/// space are plain vectors indexed by state; the cemetery is implicit and every
/// function vanishes there.
class MarkovChainModel {
public:
    MarkovChainModel(std::vector<double> points, std::size_t dim, double step,
                     SparseKernel kernel, GeneratorTag tag);

    /// Convenience for small explicit chains; points default to 0..n-1.
    static MarkovChainModel from_dense(std::size_t n, std::span<const double> row_major, double step,
                                       std::vector<double> points = {});

    std::size_t size() const noexcept { return kernel_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    double step() const noexcept { return step_; }
    GeneratorTag tag() const noexcept { return tag_; }
    const SparseKernel& kernel() const noexcept { return kernel_; }

    std::span<const double> point(std::size_t state) const {
        return {points_.data() + state * dim_, dim_};
    }
    const std::vector<double>& points() const noexcept { return points_; }

    /// Probability of being sent to the cemetery in one step from `state`.
    double killing(std::size_t state) const;

    /// True when every state reaches a state with positive killing, so that
    /// P^k 1 -> 0 and infinite-horizon sums converge.
    bool is_transient() const noexcept { return transient_; }

    /// Evaluates h at every state coordinate.
    std::vector<double> evaluate(const std::function<double(std::span<const double>)>& h) const;

    /// Index of the state whose coordinates are nearest to x (Euclidean).
    std::size_t nearest_state(std::span<const double> x) const;

    /// Converts a time to a step count; throws unless t is a multiple of step().
    std::size_t steps_for(double t) const;

private:
    std::vector<double> points_;
    std::size_t dim_;
    double step_;
    SparseKernel kernel_;
    GeneratorTag tag_;
    bool transient_ = false;
};

/// Lattice chain discretizing the generator with symbol -|xi|^alpha on a box,
/// killed on leaving it. alpha = 2 gives the nearest-neighbour walk for the
/// Laplacian (any dim); alpha < 2 uses fractional centred differences (dim 1).
struct StableChainSpec {
    double alpha = 2.0;
    std::vector<double> lower{-1.0};
    std::vector<double> upper{1.0};
    double h = 0.01;
    double dt = 0.0;  ///< 0 selects half the stability threshold
};

MarkovChainModel build_stable_chain(const StableChainSpec& spec);

/// Largest dt for which the explicit kernel stays nonnegative.
double stable_chain_dt_threshold(double alpha, std::size_t dim, double h);

/// Coefficients g_k, k = 0..count-1, of the fractional centred difference of
/// order alpha: h^-alpha * sum_k g_|k| u(x - k h). g_0 > 0, g_k <= 0 otherwise.
std::vector<double> fractional_difference_weights(double alpha, std::size_t count);

}  // namespace ostop
