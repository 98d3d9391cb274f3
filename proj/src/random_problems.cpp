#include "ostop/random_problems.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ostop {

std::shared_ptr<const MarkovChainModel> random_chain(const RandomChainSpec& spec, std::mt19937_64& rng) {
    if (spec.n_states == 0 || spec.max_successors == 0 || spec.kill_min < 0.0 || spec.kill_max > 1.0 ||
        spec.kill_min > spec.kill_max || !(spec.dt > 0.0))
        throw std::invalid_argument("random_chain: bad spec");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = spec.n_states;
    std::vector<std::size_t> order(n);
    SparseKernel kernel;
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min(spec.max_successors, n))(rng);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        cols.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(cols.begin(), cols.end());
        vals.resize(k);
        double total = 0.0;
        for (double& v : vals) total += (v = 0.05 + unit(rng));
        const double kill = spec.kill_min + (spec.kill_max - spec.kill_min) * unit(rng);
        for (double& v : vals) v *= (1.0 - kill) / total;
        kernel.push_row(cols, vals);
    }
    std::vector<double> points(n);
    std::iota(points.begin(), points.end(), 0.0);
    return std::make_shared<const MarkovChainModel>(std::move(points), 1, spec.dt, std::move(kernel),
                                                    GeneratorTag::generic);
}

Driver RandomDriverSpec::build() const {
    if (kind == "zero") return Driver::zero();
    if (kind == "linear") return Driver::linear(a);
    if (kind == "soft-clip") return Driver::soft_clip(a, b);
    if (kind == "table") return Driver::table(intercept, slope);
    throw std::invalid_argument("unknown random driver kind '" + kind + "'");
}

RandomDriverSpec random_driver(const std::string& kind, std::size_t n_states, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RandomDriverSpec d;
    d.kind = kind;
    if (kind == "linear") {
        d.a = unit(rng);
    } else if (kind == "soft-clip") {
        d.a = unit(rng);
        d.b = 0.5 + 1.5 * unit(rng);
    } else if (kind == "table") {
        d.intercept.resize(n_states);
        d.slope.resize(n_states);
        for (std::size_t s = 0; s < n_states; ++s) {
            d.intercept[s] = unit(rng) - 0.5;
            d.slope[s] = unit(rng);
        }
    } else if (kind != "zero") {
        throw std::invalid_argument("unknown random driver kind '" + kind + "'");
    }
    return d;
}

StoppingProblem random_problem(std::shared_ptr<const MarkovChainModel> chain, std::size_t n_steps,
                               const RandomDriverSpec& driver, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    StoppingProblem p;
    const std::size_t n = chain->size();
    p.chain = std::move(chain);
    p.n_steps = n_steps;
    p.driver = driver.build();
    p.obstacle.resize(n);
    p.terminal.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        p.obstacle[s] = sym(rng);
        p.terminal[s] = std::max(p.obstacle[s], sym(rng));
    }
    return p;
}

StoppingProblem perturb_problem(const StoppingProblem& p, const RandomDriverSpec& driver, double scale,
                                std::mt19937_64& rng, RandomDriverSpec* perturbed) {
    std::uniform_real_distribution<double> sym(-scale, scale);
    StoppingProblem q = p;
    for (std::size_t s = 0; s < q.size(); ++s) {
        if (q.has_obstacle()) q.obstacle[s] += sym(rng);
        double phi = p.phi(s) + sym(rng);
        if (q.has_obstacle()) phi = std::max(phi, q.obstacle[s]);
        if (q.terminal.empty()) q.terminal.assign(q.size(), 0.0);
        q.terminal[s] = phi;
    }
    RandomDriverSpec d = driver;
    if (d.kind == "linear") {
        d.a = std::max(0.0, d.a + sym(rng));
    } else if (d.kind == "soft-clip") {
        d.a = std::max(0.0, d.a + sym(rng));
    } else if (d.kind == "table") {
        for (auto& c : d.intercept) c += sym(rng);
        for (auto& c : d.slope) c = std::max(0.0, c + sym(rng));
    }
    q.driver = d.build();
    if (perturbed) *perturbed = d;
    return q;
}

}  // namespace ostop
