#include "ostop/markov_chain.hpp"

#include "ostop/errors.hpp"
#include "ostop/tolerances.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ostop {

void SparseKernel::push_row(std::span<const std::size_t> cols, std::span<const double> probs) {
    if (cols.size() != probs.size()) throw std::invalid_argument("SparseKernel: cols/probs size mismatch");
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (probs[i] == 0.0) continue;
        cols_.push_back(cols[i]);
        values_.push_back(probs[i]);
    }
    row_ptr_.push_back(values_.size());
}

SparseKernel SparseKernel::from_dense(std::size_t n, std::span<const double> row_major) {
    if (row_major.size() != n * n) throw std::invalid_argument("SparseKernel: dense matrix must be n*n");
    SparseKernel k;
    std::vector<std::size_t> cols(n);
    for (std::size_t j = 0; j < n; ++j) cols[j] = j;
    for (std::size_t i = 0; i < n; ++i) k.push_row(cols, row_major.subspan(i * n, n));
    return k;
}

double SparseKernel::row_sum(std::size_t row) const {
    double s = 0.0;
    for (double v : values(row)) s += v;
    return s;
}

double SparseKernel::entry(std::size_t row, std::size_t col) const {
    auto c = cols(row);
    auto v = values(row);
    for (std::size_t i = 0; i < c.size(); ++i)
        if (c[i] == col) return v[i];
    return 0.0;
}

void SparseKernel::apply(std::span<const double> h, std::span<double> out, double scale) const {
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) acc += values_[p] * h[cols_[p]];
        out[i] = scale * acc;
    }
}

std::string to_string(GeneratorTag tag) {
    switch (tag) {
        case GeneratorTag::generic: return "generic";
        case GeneratorTag::laplacian: return "laplacian";
        case GeneratorTag::fractional_laplacian: return "fractional-laplacian";
        case GeneratorTag::exp_levy_lattice: return "exp-levy-lattice";
    }
    return "unknown";
}

MarkovChainModel::MarkovChainModel(std::vector<double> points, std::size_t dim, double step,
                                   SparseKernel kernel, GeneratorTag tag)
    : points_(std::move(points)), dim_(dim), step_(step), kernel_(std::move(kernel)), tag_(tag) {
    const std::size_t n = kernel_.size();
    if (n == 0) throw std::invalid_argument("MarkovChainModel: empty state space");
    if (dim_ == 0 || points_.size() != n * dim_)
        throw std::invalid_argument("MarkovChainModel: points must hold size()*dim coordinates");
    if (!(step_ > 0.0)) throw std::invalid_argument("MarkovChainModel: step must be positive");

    std::vector<std::vector<std::size_t>> predecessors(n);
    std::deque<std::size_t> frontier;
    std::vector<bool> reaches_cemetery(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t p = 0; p < kernel_.cols(i).size(); ++p) {
            const double v = kernel_.values(i)[p];
            const std::size_t j = kernel_.cols(i)[p];
            if (!(v >= 0.0)) {
                std::ostringstream msg;
                msg << "MarkovChainModel: negative kernel entry at (" << i << "," << j << ")";
                throw std::invalid_argument(msg.str());
            }
            if (j >= n) throw std::invalid_argument("MarkovChainModel: column index out of range");
            sum += v;
            predecessors[j].push_back(i);
        }
        if (sum > 1.0 + tol::kernel_row_sum) {
            std::ostringstream msg;
            msg << "MarkovChainModel: row " << i << " sums to " << sum << " > 1";
            throw std::invalid_argument(msg.str());
        }
        if (sum < 1.0 - 1e-15) {
            reaches_cemetery[i] = true;
            frontier.push_back(i);
        }
    }
    while (!frontier.empty()) {
        const std::size_t j = frontier.front();
        frontier.pop_front();
        for (std::size_t i : predecessors[j]) {
            if (!reaches_cemetery[i]) {
                reaches_cemetery[i] = true;
                frontier.push_back(i);
            }
        }
    }
    transient_ = std::all_of(reaches_cemetery.begin(), reaches_cemetery.end(), [](bool b) { return b; });
}

MarkovChainModel MarkovChainModel::from_dense(std::size_t n, std::span<const double> row_major, double step,
                                              std::vector<double> points) {
    if (points.empty()) {
        points.resize(n);
        for (std::size_t i = 0; i < n; ++i) points[i] = static_cast<double>(i);
    }
    const std::size_t dim = points.size() / n;
    return MarkovChainModel(std::move(points), dim, step, SparseKernel::from_dense(n, row_major),
                            GeneratorTag::generic);
}

double MarkovChainModel::killing(std::size_t state) const {
    return std::max(0.0, 1.0 - kernel_.row_sum(state));
}

std::vector<double> MarkovChainModel::evaluate(const std::function<double(std::span<const double>)>& h) const {
    std::vector<double> out(size());
    for (std::size_t s = 0; s < size(); ++s) out[s] = h(point(s));
    return out;
}

std::size_t MarkovChainModel::nearest_state(std::span<const double> x) const {
    if (x.size() != dim_) throw std::invalid_argument("nearest_state: dimension mismatch");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < size(); ++s) {
        double d = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) d += (point(s)[i] - x[i]) * (point(s)[i] - x[i]);
        if (d < best_d) {
            best_d = d;
            best = s;
        }
    }
    return best;
}

std::size_t MarkovChainModel::steps_for(double t) const {
    if (t < 0.0) throw std::invalid_argument("time must be nonnegative");
    const double k = t / step_;
    const double r = std::round(k);
    if (std::abs(k - r) > 1e-9 * std::max(1.0, r)) {
        std::ostringstream msg;
        msg << "time " << t << " is not a multiple of the chain step " << step_;
        throw std::invalid_argument(msg.str());
    }
    return static_cast<std::size_t>(r);
}

std::vector<double> fractional_difference_weights(double alpha, std::size_t count) {
    // g_0 = Gamma(alpha+1)/Gamma(alpha/2+1)^2, g_{k+1} = g_k (k - alpha/2)/(k + alpha/2 + 1).
    std::vector<double> g(count);
    if (count == 0) return g;
    g[0] = std::exp(std::lgamma(alpha + 1.0) - 2.0 * std::lgamma(alpha / 2.0 + 1.0));
    for (std::size_t k = 0; k + 1 < count; ++k) {
        const double kk = static_cast<double>(k);
        g[k + 1] = g[k] * (kk - alpha / 2.0) / (kk + alpha / 2.0 + 1.0);
    }
    return g;
}

double stable_chain_dt_threshold(double alpha, std::size_t dim, double h) {
    const double diag = fractional_difference_weights(alpha, 1)[0] * static_cast<double>(dim);
    return std::pow(h, alpha) / diag;
}

MarkovChainModel build_stable_chain(const StableChainSpec& spec) {
    const double alpha = spec.alpha;
    if (!(alpha > 0.0 && alpha <= 2.0)) throw std::invalid_argument("build_stable_chain: alpha must lie in (0, 2]");
    const std::size_t dim = spec.lower.size();
    if (dim == 0 || spec.upper.size() != dim) throw std::invalid_argument("build_stable_chain: bad domain");
    if (dim > 1 && alpha != 2.0)
        throw std::invalid_argument("build_stable_chain: alpha < 2 is supported on intervals only");
    if (!(spec.h > 0.0)) throw std::invalid_argument("build_stable_chain: h must be positive");

    const double threshold = stable_chain_dt_threshold(alpha, dim, spec.h);
    const double dt = spec.dt > 0.0 ? spec.dt : 0.5 * threshold;
    if (dt > threshold * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "dt = " << dt << " exceeds the stability threshold dt <= " << threshold
            << " for alpha = " << alpha << ", h = " << spec.h;
        throw HypothesisViolation("explicit-stability", msg.str());
    }

    // Interior lattice points lower + i*h, i = 1..cells-1, per axis.
    std::vector<std::size_t> extent(dim);
    for (std::size_t a = 0; a < dim; ++a) {
        const double width = spec.upper[a] - spec.lower[a];
        if (!(width > 0.0)) throw std::invalid_argument("build_stable_chain: empty domain");
        const double cells = width / spec.h;
        const double rc = std::round(cells);
        if (std::abs(cells - rc) > 1e-8 * rc || rc < 2.0)
            throw std::invalid_argument("build_stable_chain: domain width must be an integer multiple (>= 2) of h");
        extent[a] = static_cast<std::size_t>(rc) - 1;
    }
    std::size_t n = 1;
    for (auto e : extent) n *= e;

    std::vector<double> points(n * dim);
    for (std::size_t s = 0; s < n; ++s) {
        std::size_t rem = s;
        for (std::size_t a = dim; a-- > 0;) {
            const std::size_t idx = rem % extent[a];
            rem /= extent[a];
            points[s * dim + a] = spec.lower[a] + static_cast<double>(idx + 1) * spec.h;
        }
    }

    const double scale = dt / std::pow(spec.h, alpha);
    SparseKernel kernel;
    std::vector<std::size_t> cols;
    std::vector<double> probs;
    if (alpha == 2.0) {
        // Nearest-neighbour walk: 2*dim neighbours at dt/h^2, the rest stays put.
        std::vector<std::size_t> stride(dim, 1);
        for (std::size_t a = dim - 1; a-- > 0;) stride[a] = stride[a + 1] * extent[a + 1];
        for (std::size_t s = 0; s < n; ++s) {
            cols.clear();
            probs.clear();
            cols.push_back(s);
            probs.push_back(1.0 - 2.0 * static_cast<double>(dim) * scale);
            for (std::size_t a = 0; a < dim; ++a) {
                const std::size_t idx = (s / stride[a]) % extent[a];
                if (idx > 0) {
                    cols.push_back(s - stride[a]);
                    probs.push_back(scale);
                }
                if (idx + 1 < extent[a]) {
                    cols.push_back(s + stride[a]);
                    probs.push_back(scale);
                }
            }
            kernel.push_row(cols, probs);
        }
        return MarkovChainModel(std::move(points), dim, dt, std::move(kernel), GeneratorTag::laplacian);
    }

    const auto g = fractional_difference_weights(alpha, n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        cols.clear();
        probs.clear();
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = i > j ? i - j : j - i;
            cols.push_back(j);
            probs.push_back(k == 0 ? 1.0 - scale * g[0] : -scale * g[k]);
        }
        kernel.push_row(cols, probs);
    }
    return MarkovChainModel(std::move(points), 1, dt, std::move(kernel), GeneratorTag::fractional_laplacian);
}

}  // namespace ostop
