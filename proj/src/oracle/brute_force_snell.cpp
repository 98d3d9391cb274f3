#include "ostop/oracle/brute_force_snell.hpp"

#include "ostop/errors.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ostop::oracle {

namespace {

std::vector<HistoryNode> history_tree(const StoppingProblem& p, std::size_t x0) {
    const std::size_t N = *p.n_steps;
    std::vector<HistoryNode> nodes;
    nodes.push_back({x0, 0, 0, 1.0, {}});
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].step == N) continue;
        const std::size_t s = nodes[i].state;
        auto cols = p.chain->kernel().cols(s);
        auto vals = p.chain->kernel().values(s);
        for (std::size_t q = 0; q < cols.size(); ++q) {
            nodes[i].children.push_back(nodes.size());
            nodes.push_back({cols[q], nodes[i].step + 1, i, vals[q], {}});
        }
    }
    return nodes;
}

std::vector<double> rule_counts(const std::vector<HistoryNode>& nodes, std::size_t N) {
    std::vector<double> r(nodes.size(), 1.0);
    for (std::size_t i = nodes.size(); i-- > 0;) {
        if (nodes[i].step == N) continue;
        double prod = 1.0;
        for (std::size_t c : nodes[i].children) prod *= r[c];
        r[i] = 1.0 + prod;
    }
    return r;
}

void check_problem(const StoppingProblem& p, std::size_t x0) {
    validate(p);
    if (p.infinite()) throw std::invalid_argument("brute_force_snell needs a finite horizon");
    if (!p.has_obstacle()) throw std::invalid_argument("brute_force_snell needs an obstacle");
    if (x0 >= p.size()) throw std::invalid_argument("brute_force_snell: start state out of range");
}

}  // namespace

double count_stopping_rules(const StoppingProblem& p, std::size_t x0) {
    check_problem(p, x0);
    return rule_counts(history_tree(p, x0), *p.n_steps).front();
}

BruteForceResult brute_force_snell(const StoppingProblem& p, std::size_t x0, const BruteForceLimits& limits) {
    check_problem(p, x0);
    const std::size_t N = *p.n_steps;
    BruteForceResult out;
    out.nodes = history_tree(p, x0);
    const auto& nodes = out.nodes;
    const auto counts = rule_counts(nodes, N);
    out.rules_enumerated = counts.front();

    std::set<std::size_t> reachable;
    for (const auto& nd : nodes) reachable.insert(nd.state);
    if (N > limits.max_steps || reachable.size() > limits.max_reachable_states || counts.front() > limits.max_rules) {
        std::ostringstream msg;
        msg << "instance too large for exhaustive enumeration: " << N << " steps, " << reachable.size()
            << " reachable states, " << counts.front() << " stopping rules (limits " << limits.max_steps << ", "
            << limits.max_reachable_states << ", " << limits.max_rules << ")";
        throw InstanceTooLarge(msg.str(), counts.front());
    }

    // values[i][r] = stopped f-expectation at node i under the r-th rule of its subtree.
    // r = 0 stops at i; r = 1 + j continues, j read in mixed radix over the children.
    const double rho = p.rho();
    const double dt = p.step();
    std::vector<std::vector<double>> values(nodes.size());
    for (std::size_t i = nodes.size(); i-- > 0;) {
        const auto& nd = nodes[i];
        if (nd.step == N) {
            values[i] = {p.phi(nd.state)};
            continue;
        }
        const std::size_t total = static_cast<std::size_t>(counts[i]);
        auto& v = values[i];
        v.resize(total);
        v[0] = p.g(nd.state);
        std::vector<std::size_t> digit(nd.children.size(), 0);
        for (std::size_t j = 0; j + 1 < total; ++j) {
            double b = 0.0;
            for (std::size_t c = 0; c < nd.children.size(); ++c) {
                const std::size_t child = nd.children[c];
                b += nodes[child].prob * values[child][digit[c]];
            }
            v[j + 1] = p.driver.implicit_step(nd.state, rho * b, dt);
            for (std::size_t c = 0; c < nd.children.size(); ++c) {
                if (++digit[c] < values[nd.children[c]].size()) break;
                digit[c] = 0;
            }
        }
    }

    const auto& root = values.front();
    const std::size_t best = static_cast<std::size_t>(std::max_element(root.begin(), root.end()) - root.begin());
    out.value = root[best];
    out.stop.assign(nodes.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> todo{{0, best}};
    while (!todo.empty()) {
        auto [i, r] = todo.back();
        todo.pop_back();
        if (nodes[i].step == N || r == 0) {
            out.stop[i] = 1;
            continue;
        }
        std::size_t j = r - 1;
        for (std::size_t c : nodes[i].children) {
            const std::size_t size = values[c].size();
            todo.emplace_back(c, j % size);
            j /= size;
        }
    }
    return out;
}

}  // namespace ostop::oracle
