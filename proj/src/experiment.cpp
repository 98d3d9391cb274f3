#include "ostop/experiment.hpp"

#include "ostop/asymptotics.hpp"
#include "ostop/errors.hpp"
#include "ostop/exp_levy.hpp"
#include "ostop/oracle/brute_force_snell.hpp"
#include "ostop/pricing.hpp"
#include "ostop/random_problems.hpp"
#include "ostop/solvers.hpp"
#include "ostop/stable.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>
#include <Eigen/Core>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <variant>

namespace ostop {

namespace {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------- config

enum class KeyType { text, real, count, reals, texts };

// Every key the runner understands. Anything else is a schema error.
const std::map<std::string, KeyType>& schema() {
    static const std::map<std::string, KeyType> keys{
        {"experiment.subcommand", KeyType::text},
        {"experiment.name", KeyType::text},
        {"experiment.seed", KeyType::count},
        {"experiment.threads", KeyType::count},

        {"model.type", KeyType::text},
        {"model.spot", KeyType::reals},
        {"model.rate", KeyType::real},
        {"model.dividends", KeyType::reals},
        {"model.vol", KeyType::reals},
        {"model.jump_family", KeyType::text},
        {"model.jump_intensity", KeyType::real},
        {"model.jump_atoms", KeyType::reals},
        {"model.jump_weights", KeyType::reals},
        {"model.jump_p_up", KeyType::real},
        {"model.jump_eta_up", KeyType::real},
        {"model.jump_eta_down", KeyType::real},
        {"model.jump_mean", KeyType::real},
        {"model.jump_stdev", KeyType::real},
        {"model.jump_lower", KeyType::real},
        {"model.jump_upper", KeyType::real},
        {"model.alpha", KeyType::real},
        {"model.alphas", KeyType::reals},
        {"model.lower", KeyType::reals},
        {"model.upper", KeyType::reals},
        {"model.h", KeyType::real},
        {"model.dt", KeyType::real},
        {"model.states", KeyType::count},
        {"model.max_successors", KeyType::count},
        {"model.kill_min", KeyType::real},
        {"model.kill_max", KeyType::real},

        {"problem.driver", KeyType::text},
        {"problem.drivers", KeyType::texts},
        {"problem.obstacle", KeyType::text},
        {"problem.terminal", KeyType::text},
        {"problem.steps", KeyType::count},
        {"problem.discount", KeyType::real},
        {"problem.payoff", KeyType::text},
        {"problem.start", KeyType::reals},

        {"numerics.maturities", KeyType::reals},
        {"numerics.horizons", KeyType::reals},
        {"numerics.lattice_steps", KeyType::count},
        {"numerics.step_counts", KeyType::reals},
        {"numerics.tolerance", KeyType::real},
        {"numerics.initial_dt", KeyType::real},
        {"numerics.log_width", KeyType::real},
        {"numerics.paths", KeyType::count},
        {"numerics.dt", KeyType::real},
        {"numerics.ladder", KeyType::reals},
        {"numerics.trials", KeyType::count},
        {"numerics.perturbation", KeyType::real},
        {"numerics.epsilons", KeyType::reals},
        {"numerics.reference", KeyType::text},
        {"numerics.reference_tol", KeyType::real},
        {"numerics.exponent_tol", KeyType::real},
        {"numerics.grid_steps", KeyType::count},
        {"numerics.max_gap", KeyType::real},
    };
    return keys;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw SchemaError(key + ": expected a finite number, got '" + raw + "'");
}

std::uint64_t parse_count(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    try {
        std::size_t used = 0;
        if (!s.empty() && s[0] != '-') {
            const unsigned long long v = std::stoull(s, &used);
            if (used == s.size()) return v;
        }
    } catch (const std::exception&) {
    }
    throw SchemaError(key + ": expected a nonnegative integer, got '" + raw + "'");
}

std::vector<std::string> split(const std::string& raw) {
    std::vector<std::string> out;
    std::stringstream ss(raw);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    return out;
}

class Config {
public:
    explicit Config(const std::filesystem::path& file) {
        boost::property_tree::ptree tree;
        try {
            boost::property_tree::ini_parser::read_ini(file.string(), tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw SchemaError("cannot read config: " + std::string(e.what()));
        }
        for (const auto& [section, body] : tree) {
            if (body.empty()) throw SchemaError("key '" + section + "' must live inside a [section]");
            for (const auto& [key, value] : body) {
                const std::string full = section + "." + key;
                if (!schema().count(full)) throw SchemaError("unknown key '" + key + "' in [" + section + "]");
                values_[full] = value.get_value<std::string>();
            }
        }
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string text(const std::string& key, std::optional<std::string> fallback = {}) {
        return trim(raw(key, fallback));
    }
    double real(const std::string& key, std::optional<double> fallback = {}) {
        if (!has(key) && fallback) return mark(key), *fallback;
        return parse_real(key, raw(key, {}));
    }
    std::uint64_t count(const std::string& key, std::optional<std::uint64_t> fallback = {}) {
        if (!has(key) && fallback) return mark(key), *fallback;
        return parse_count(key, raw(key, {}));
    }
    std::vector<double> reals(const std::string& key, std::optional<std::vector<double>> fallback = {}) {
        if (!has(key) && fallback) return mark(key), *fallback;
        std::vector<double> out;
        for (const auto& tok : split(raw(key, {}))) out.push_back(parse_real(key, tok));
        if (out.empty()) throw SchemaError(key + ": empty list");
        return out;
    }
    std::vector<std::string> texts(const std::string& key, std::optional<std::vector<std::string>> fallback = {}) {
        if (!has(key) && fallback) return mark(key), *fallback;
        return split(raw(key, {}));
    }

    /// Keys present in the file that the subcommand never asked for.
    std::vector<std::string> unused() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!read_.count(k)) out.push_back(k);
        return out;
    }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> read_;

    void mark(const std::string& key) { read_.insert(key); }
    std::string raw(const std::string& key, const std::optional<std::string>& fallback) {
        mark(key);
        const auto it = values_.find(key);
        if (it != values_.end()) return it->second;
        if (fallback) return *fallback;
        const auto dot = key.find('.');
        throw SchemaError("missing required key '" + key.substr(dot + 1) + "' in [" + key.substr(0, dot) + "]");
    }
};

// ---------------------------------------------------------------- tables

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
    std::string suffix;  ///< "" for the main table
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

struct Result {
    std::vector<Table> tables;
    json summary = json::object();
    bool ok = true;
    std::string failure;

    void fail(const std::string& what) {
        if (ok) failure = what;
        ok = false;
    }
};

std::string format_cell(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", *d);
        return buf;
    }
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    return std::get<std::string>(c);
}

json cell_json(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return std::isfinite(*d) ? json(*d) : json(nullptr);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
    return std::get<std::string>(c);
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

void write_csv(const Table& t, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << csv_escape(format_cell(row[c]));
        out << '\n';
    }
}

json table_json(const Table& t) {
    json rows = json::array();
    for (const auto& row : t.rows) {
        json r = json::object();
        for (std::size_t c = 0; c < row.size(); ++c) r[t.columns[c]] = cell_json(row[c]);
        rows.push_back(std::move(r));
    }
    return json{{"columns", t.columns}, {"rows", std::move(rows)}};
}

Cell num(double v) { return v; }
Cell cnt(std::size_t v) { return static_cast<std::int64_t>(v); }
Cell flag(bool v) { return static_cast<std::int64_t>(v ? 1 : 0); }

std::string describe(const std::string& label, double value) {
    std::ostringstream s;
    s << label << " = " << std::setprecision(10) << value;
    return s.str();
}

// ---------------------------------------------------------------- models

struct Context {
    Config& cfg;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::vector<std::string>& warnings;
};

ExpLevyModel load_exp_levy(Config& cfg) {
    const std::string type = cfg.text("model.type", "exp-levy");
    if (type != "exp-levy") throw SchemaError("model.type: this subcommand needs exp-levy, got '" + type + "'");
    ExpLevyParams p;
    p.initial_prices = cfg.reals("model.spot");
    const std::size_t d = p.initial_prices.size();
    p.rate = cfg.real("model.rate");
    p.dividends = cfg.reals("model.dividends", std::vector<double>(d, 0.0));
    p.vol_matrix = cfg.reals("model.vol");
    if (p.dividends.size() != d) throw SchemaError("model.dividends: need one entry per asset");
    if (p.vol_matrix.size() != d * d) throw SchemaError("model.vol: need d*d entries (row-major a = sigma sigma^T)");
    const std::string family = cfg.text("model.jump_family", "none");
    JumpSpec& j = p.jumps;
    if (family == "none") {
        j.family = JumpFamily::none;
    } else {
        j.intensity = cfg.real("model.jump_intensity");
        if (family == "point") {
            j.family = JumpFamily::point_masses;
            const auto flat = cfg.reals("model.jump_atoms");
            j.weights = cfg.reals("model.jump_weights");
            if (flat.size() != j.weights.size() * d)
                throw SchemaError("model.jump_atoms: need d entries per weight");
            for (std::size_t a = 0; a < j.weights.size(); ++a)
                j.atoms.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(a * d),
                                     flat.begin() + static_cast<std::ptrdiff_t>((a + 1) * d));
        } else if (family == "double-exponential") {
            j.family = JumpFamily::double_exponential;
            j.p_up = cfg.real("model.jump_p_up");
            j.eta_up = cfg.real("model.jump_eta_up");
            j.eta_down = cfg.real("model.jump_eta_down");
        } else if (family == "truncated-normal") {
            j.family = JumpFamily::truncated_normal;
            j.mean = cfg.real("model.jump_mean");
            j.stdev = cfg.real("model.jump_stdev");
            j.lower = cfg.real("model.jump_lower");
            j.upper = cfg.real("model.jump_upper");
        } else {
            throw SchemaError("model.jump_family: expected none, point, double-exponential or truncated-normal");
        }
    }
    return build_exp_levy(p);
}

struct ChainModel {
    std::string type;
    std::shared_ptr<const MarkovChainModel> chain;
    StableChainSpec stable;
    RandomChainSpec random;
};

/// Chain models. random-chain is redrawn per trial from `rng`; this loads its spec.
ChainModel load_chain(Config& cfg, std::mt19937_64* rng) {
    ChainModel m;
    m.type = cfg.text("model.type");
    if (m.type == "stable-chain") {
        m.stable.alpha = cfg.real("model.alpha");
        m.stable.lower = cfg.reals("model.lower");
        m.stable.upper = cfg.reals("model.upper");
        m.stable.h = cfg.real("model.h");
        m.stable.dt = cfg.real("model.dt", 0.0);
        if (m.stable.lower.size() != m.stable.upper.size()) throw SchemaError("model.lower/upper: sizes differ");
        m.chain = std::make_shared<const MarkovChainModel>(build_stable_chain(m.stable));
    } else if (m.type == "random-chain") {
        m.random.n_states = cfg.count("model.states");
        m.random.max_successors = cfg.count("model.max_successors", 4);
        m.random.kill_min = cfg.real("model.kill_min", 0.0);
        m.random.kill_max = cfg.real("model.kill_max", m.random.kill_min);
        m.random.dt = cfg.real("model.dt", 0.1);
        if (rng) m.chain = random_chain(m.random, *rng);
    } else {
        throw SchemaError("model.type: expected stable-chain or random-chain for this subcommand, got '" + m.type + "'");
    }
    return m;
}

/// Named functions of the state coordinates.
std::function<double(std::span<const double>)> parse_state_function(const std::string& key, const std::string& spec,
                                                                    std::mt19937_64& rng, std::vector<double>* sampled,
                                                                    std::size_t n_states) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    std::vector<double> a;
    if (colon != std::string::npos)
        for (const auto& tok : split(spec.substr(colon + 1))) a.push_back(parse_real(key, tok));
    auto need = [&](std::size_t n) {
        if (a.size() != n) throw SchemaError(key + ": '" + kind + "' takes " + std::to_string(n) + " parameter(s)");
    };
    if (kind == "zero") {
        need(0);
        return [](std::span<const double>) { return 0.0; };
    }
    if (kind == "constant") {
        need(1);
        return [c = a[0]](std::span<const double>) { return c; };
    }
    if (kind == "indicator") {
        need(2);
        return [lo = a[0], hi = a[1]](std::span<const double> x) {
            for (double v : x)
                if (v < lo || v > hi) return 0.0;
            return 1.0;
        };
    }
    if (kind == "put" || kind == "call") {
        need(1);
        const double sgn = kind == "put" ? 1.0 : -1.0;
        return [k = a[0], sgn](std::span<const double> x) { return std::max(sgn * (k - x[0]), 0.0); };
    }
    if (kind == "tent") {
        need(2);
        return [c = a[0], w = a[1]](std::span<const double> x) {
            double r = 0.0;
            for (double v : x) r += (v - c) * (v - c);
            return std::max(0.0, 1.0 - std::sqrt(r) / w);
        };
    }
    if (kind == "random") {
        need(2);
        std::uniform_real_distribution<double> u(a[0], a[1]);
        sampled->resize(n_states);
        for (double& v : *sampled) v = u(rng);
        return nullptr;
    }
    throw SchemaError(key + ": unknown function '" + spec +
                      "' (expected zero, constant:c, indicator:a,b, put:K, call:K, tent:c,w, random:lo,hi)");
}

std::vector<double> state_values(const std::string& key, const std::string& spec, const MarkovChainModel& chain,
                                 std::mt19937_64& rng) {
    std::vector<double> sampled;
    auto fn = parse_state_function(key, spec, rng, &sampled, chain.size());
    if (!fn) return sampled;
    return chain.evaluate(fn);
}

struct ProblemSpec {
    std::string driver = "zero";
    std::string obstacle = "none";
    std::string terminal = "zero";
    std::optional<std::size_t> steps;
    double discount = 0.0;
    std::vector<double> start;
};

ProblemSpec load_problem(Config& cfg, bool need_steps) {
    ProblemSpec p;
    p.driver = cfg.text("problem.driver", "zero");
    parse_driver(p.driver);  // fail early on bad syntax
    p.obstacle = cfg.text("problem.obstacle", "none");
    p.terminal = cfg.text("problem.terminal", "zero");
    if (need_steps) p.steps = cfg.count("problem.steps");
    p.discount = cfg.real("problem.discount", 0.0);
    p.start = cfg.reals("problem.start", std::vector<double>{0.0});
    return p;
}

StoppingProblem build_problem(const ProblemSpec& spec, std::shared_ptr<const MarkovChainModel> chain,
                              std::mt19937_64& rng) {
    StoppingProblem p;
    p.chain = chain;
    p.n_steps = spec.steps;
    p.driver = parse_driver(spec.driver);
    p.discount = spec.discount;
    if (spec.obstacle != "none") p.obstacle = state_values("problem.obstacle", spec.obstacle, *chain, rng);
    p.terminal = state_values("problem.terminal", spec.terminal, *chain, rng);
    return p;
}

std::size_t start_state(const MarkovChainModel& chain, const std::vector<double>& start) {
    if (start.size() != chain.dim()) throw SchemaError("problem.start: need one coordinate per dimension");
    return chain.nearest_state(start);
}

std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

std::vector<std::size_t> steps_for_times(const MarkovChainModel& chain, const std::vector<double>& times) {
    std::vector<std::size_t> out;
    for (double t : times) {
        if (!(t > 0.0)) throw SchemaError("numerics.horizons: times must be positive");
        out.push_back(chain.steps_for(t));
    }
    return out;
}

// ---------------------------------------------------------------- subcommands

using Finish = std::function<void()>;  // called once every key is read

Result cmd_price(Context& ctx, const Finish& finish) {
    auto& cfg = ctx.cfg;
    const auto model = load_exp_levy(cfg);
    const auto psi = parse_payoff(cfg.text("problem.payoff"), model.dim());
    const auto maturities = cfg.reals("numerics.maturities");
    const auto steps = cfg.count("numerics.lattice_steps");
    LatticeOptions lat;
    lat.log_width = cfg.real("numerics.log_width", lat.log_width);
    lat.threads = ctx.threads;
    finish();

    Result res;
    Table t{"", {"T", "n_steps", "american", "european", "payoff_at_spot", "n_states", "ok"}, {}};
    const double intrinsic = psi(model.initial_prices());
    double prev = -1.0;
    for (double T : maturities) {
        const auto am = price_american(model, psi, T, steps, lat);
        const auto eu = price_european(model, psi, T, steps, lat);
        bool ok = am.value >= 0.0 && am.value >= intrinsic - tol::monotone && am.value >= eu.value - tol::monotone;
        if (!ok) res.fail("T = " + format_cell(T) + ": american value below payoff, european value or zero");
        if (am.value < prev - 1e-9) {
            ok = false;
            res.fail("T = " + format_cell(T) + ": american value decreased in T");
        }
        prev = am.value;
        t.rows.push_back({num(T), cnt(steps), num(am.value), num(eu.value), num(intrinsic), cnt(am.n_states), flag(ok)});
    }
    res.tables.push_back(std::move(t));
    return res;
}

/// Closed-form perpetual put or call for a jump-free one-asset model.
double perpetual_closed_form(const ExpLevyModel& m, const Payoff& psi) {
    if (m.dim() != 1 || m.jumps().family != JumpFamily::none || m.jumps().intensity > 0.0)
        throw SchemaError("numerics.reference = closed-form needs a one-asset model without jumps");
    const double s2 = m.vol(0, 0), r = m.rate(), q = m.dividends()[0], x = m.initial_prices()[0], K = psi.strike;
    // 0.5 s2 t(t-1) + (r - q) t - r = 0
    const double a = 0.5 * s2, b = r - q - 0.5 * s2, c = -r;
    const double disc = std::sqrt(b * b - 4.0 * a * c);
    if (psi.kind == PayoffKind::put) {
        const double th = (-b - disc) / (2.0 * a);
        const double bd = th * K / (th - 1.0);
        return x <= bd ? K - x : (K - bd) * std::pow(x / bd, th);
    }
    if (psi.kind == PayoffKind::call) {
        if (!(q > 0.0)) throw SchemaError("numerics.reference = closed-form: the call needs a positive dividend");
        const double th = (-b + disc) / (2.0 * a);
        const double bd = th * K / (th - 1.0);
        return x >= bd ? x - K : (bd - K) * std::pow(x / bd, th);
    }
    throw SchemaError("numerics.reference = closed-form supports put and call payoffs");
}

Result cmd_perpetual(Context& ctx, const Finish& finish) {
    auto& cfg = ctx.cfg;
    const auto model = load_exp_levy(cfg);
    const auto psi = parse_payoff(cfg.text("problem.payoff"), model.dim());
    const double tolerance = cfg.real("numerics.tolerance", 1e-2);
    PerpetualOptions po;
    po.initial_dt = cfg.real("numerics.initial_dt", po.initial_dt);
    po.lattice.log_width = cfg.real("numerics.log_width", po.lattice.log_width);
    po.lattice.threads = ctx.threads;
    const std::string reference = cfg.text("numerics.reference", "none");
    const double ref_tol = cfg.real("numerics.reference_tol", tolerance);
    double ref = std::nan("");
    if (reference == "closed-form") {
        ref = perpetual_closed_form(model, psi);
    } else if (reference != "none") {
        ref = parse_real("numerics.reference", reference);
    }
    finish();

    const auto pr = price_perpetual(model, psi, tolerance, po);
    Result res;
    const double diff = std::isnan(ref) ? std::nan("") : pr.value - ref;
    bool ok = pr.certified;
    if (!pr.certified) res.fail("perpetual value not certified: eps_disc or bound above tolerance/2");
    if (!std::isnan(ref) && !(std::abs(diff) <= ref_tol)) {
        ok = false;
        res.fail(describe("perpetual value differs from the reference by", diff));
    }
    res.tables.push_back({"",
                          {"value", "T_star", "bound_at_T_star", "dt", "n_steps", "eps_disc", "refinements",
                           "certified", "reference", "difference", "ok"},
                          {{num(pr.value), num(pr.T_star), num(pr.bound_at_T_star), num(pr.dt), cnt(pr.n_steps),
                            num(pr.eps_disc), cnt(pr.refinements), flag(pr.certified), num(ref), num(diff),
                            flag(ok)}}});
    return res;
}

void convergence_rows(const ConvergenceTable& tab, const std::vector<std::size_t>& horizons, Result& res) {
    Table t{"",
            {"T", "n_steps", "V_T", "V", "gap", "bound_terminal", "bound_driver", "bound_obstacle", "bound", "slack",
             "extra_bound"},
            {}};
    for (std::size_t i = 0; i < tab.rows.size(); ++i) {
        const auto& r = tab.rows[i];
        t.rows.push_back({num(r.T), cnt(horizons[i]), num(r.V_T), num(r.V), num(r.gap), num(r.bound.terminal),
                          num(r.bound.driver), num(r.bound.obstacle_tail), num(r.bound.total), num(r.slack),
                          num(r.extra_bound)});
    }
    res.tables.push_back(std::move(t));
    if (!tab.ok) res.fail(tab.failure);
}

Result cmd_converge(Context& ctx, const Finish& finish) {
    auto& cfg = ctx.cfg;
    auto rng = trial_rng(ctx.seed, 0);
    const auto model = load_chain(cfg, &rng);
    const auto spec = load_problem(cfg, false);
    const auto times = cfg.reals("numerics.horizons");
    const bool fit = cfg.has("numerics.exponent_tol");
    const double exponent_tol = cfg.real("numerics.exponent_tol", 0.2);
    finish();

    auto p = build_problem(spec, model.chain, rng);
    const std::size_t x = start_state(*model.chain, spec.start);
    const auto horizons = steps_for_times(*model.chain, times);
    validate(with_horizon(p, horizons.front()));
    ConvergenceOptions co;
    co.fit_exponent = fit;
    Result res;
    double target = std::nan("");
    if (model.type == "stable-chain") {
        const std::size_t d = model.chain->dim();
        double cell = 1.0, measure = 1.0;
        for (std::size_t k = 0; k < d; ++k) {
            cell *= model.stable.h;
            measure *= model.stable.upper[k] - model.stable.lower[k];
        }
        StableNorms norms;
        for (std::size_t s = 0; s < p.size(); ++s) {
            norms.terminal_l1 += cell * std::abs(p.phi(s));
            norms.driver_l1 += cell * std::abs(p.driver(s, 0.0));
            if (p.has_obstacle()) norms.obstacle_sup = std::max(norms.obstacle_sup, std::abs(p.g(s)));
        }
        const double alpha = model.stable.alpha;
        co.extra_bound = [=](double T) { return stable_rate_bound(alpha, d, measure, norms, T); };
        target = -static_cast<double>(d) / alpha;
        res.summary["stable_norms"] = {{"terminal_l1", norms.terminal_l1},
                                       {"driver_l1", norms.driver_l1},
                                       {"obstacle_sup", norms.obstacle_sup},
                                       {"domain_measure", measure}};
    }
    const auto tab = convergence_study(p, horizons, x, co);
    convergence_rows(tab, horizons, res);
    if (fit) {
        res.summary["decay_exponent"] = tab.decay_exponent;
        res.summary["target_exponent"] = target;
        if (std::isnan(target)) {
            res.fail("numerics.exponent_tol needs a stable-chain model");
        } else if (!(std::abs(tab.decay_exponent - target) <= exponent_tol * std::abs(target))) {
            res.fail(describe("fitted decay exponent", tab.decay_exponent) + describe(", target", target));
        }
    }
    return res;
}

Result cmd_verify(Context& ctx, const Finish& finish) {
    auto& cfg = ctx.cfg;
    const auto model = load_exp_levy(cfg);
    const auto psi = parse_payoff(cfg.text("problem.payoff"), model.dim());
    const auto maturities = cfg.reals("numerics.maturities");
    const auto steps = cfg.count("numerics.lattice_steps");
    VerifyOptions vo;
    vo.perpetual_tol = cfg.real("numerics.tolerance", vo.perpetual_tol);
    vo.perpetual.initial_dt = cfg.real("numerics.initial_dt", vo.perpetual.initial_dt);
    vo.perpetual.lattice.log_width = cfg.real("numerics.log_width", vo.perpetual.lattice.log_width);
    vo.perpetual.lattice.threads = ctx.threads;
    const std::size_t paths = cfg.count("numerics.paths", 0);
    SupermartingaleOptions so;
    so.grid_steps = cfg.count("numerics.grid_steps", so.grid_steps);
    so.threads = ctx.threads;
    finish();

    const auto rep = verify_horizon_convergence(model, psi, maturities, steps, vo);
    Result res;
    Table t{"",
            {"T", "V_T", "V_perp", "gap", "bound_terminal", "bound_driver", "bound_obstacle", "bound", "eps_disc",
             "ok"},
            {}};
    for (std::size_t i = 0; i < rep.T.size(); ++i)
        t.rows.push_back({num(rep.T[i]), num(rep.V_T[i]), num(rep.perpetual.value), num(rep.gap[i]),
                          num(rep.bound[i].terminal), num(rep.bound[i].driver), num(rep.bound[i].obstacle_tail),
                          num(rep.bound[i].total), num(rep.eps_disc[i]), flag(rep.row_ok[i])});
    res.tables.push_back(std::move(t));
    res.summary["perpetual"] = {{"value", rep.perpetual.value},
                                {"T_star", rep.perpetual.T_star},
                                {"dt", rep.perpetual.dt},
                                {"eps_disc", rep.perpetual.eps_disc},
                                {"certified", rep.perpetual.certified}};
    res.summary["monotone"] = rep.monotone;
    if (!rep.ok) res.fail(rep.failure);

    if (paths > 0) {
        const double T = maturities.front();
        const auto sm = dividend_supermartingale_check(model, T, paths, ctx.seed, so);
        Table s{"supermartingale", {"rule", "asset", "estimate", "std_error", "bound", "equality_expected", "ok"}, {}};
        for (const auto& r : sm.rows) {
            s.rows.push_back({r.rule, cnt(r.asset), num(r.estimate), num(r.std_error), num(r.bound),
                              flag(r.equality_expected), flag(r.ok)});
            if (!r.ok) res.fail("discounted price check failed for rule '" + r.rule + "'");
        }
        res.tables.push_back(std::move(s));
    }
    return res;
}

Result cmd_penalize(Context& ctx, const Finish& finish) {
    auto& cfg = ctx.cfg;
    auto rng = trial_rng(ctx.seed, 0);
    const auto model = load_chain(cfg, &rng);
    const auto spec = load_problem(cfg, true);
    const auto ladder = cfg.reals("numerics.ladder");
    const bool has_max = cfg.has("numerics.max_gap");
    const double max_gap = cfg.real("numerics.max_gap", 0.0);
    finish();

    auto p = build_problem(spec, model.chain, rng);
    if (!p.has_obstacle()) throw SchemaError("penalize needs problem.obstacle");
    validate(p);
    SolverOptions so;
    so.threads = ctx.threads;
    const auto ref = solve_rbsde(p, so);
    Result res;
    Table t{"", {"n", "sup_gap", "min_increment", "gap_at_start", "ok"}, {}};
    const std::size_t x = start_state(*model.chain, spec.start);
    Grid prev;
    double prev_gap = std::numeric_limits<double>::infinity();
    for (double n : ladder) {
        const auto Y = solve_penalized(p, n, {}, so);
        double gap = 0.0, inc = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < Y.rows(); ++k)
            for (std::size_t s = 0; s < Y.cols(); ++s) {
                gap = std::max(gap, std::abs(Y(k, s) - ref.Y(k, s)));
                if (prev.rows()) inc = std::min(inc, Y(k, s) - prev(k, s));
            }
        bool ok = gap < prev_gap && (!prev.rows() || inc >= -tol::monotone);
        if (!(gap < prev_gap)) res.fail("n = " + format_cell(n) + ": sup gap did not decrease");
        if (prev.rows() && inc < -tol::monotone) res.fail("n = " + format_cell(n) + describe(": Y^n decreased by", -inc));
        t.rows.push_back({num(n), num(gap), prev.rows() ? num(inc) : num(std::nan("")), num(std::abs(Y(0, x) - ref.Y(0, x))),
                          flag(ok)});
        prev = Y;
        prev_gap = gap;
    }
    if (has_max && !(prev_gap <= max_gap)) res.fail(describe("final sup gap", prev_gap) + describe(" above max_gap", max_gap));
    res.tables.push_back(std::move(t));
    return res;
}

struct TrialSetup {
    ChainModel model;
    std::vector<std::string> drivers;
    std::size_t trials = 0;
    std::size_t steps = 0;
    double discount = 0.0;
};

TrialSetup load_trials(Config& cfg, std::vector<std::string> default_drivers) {
    TrialSetup t;
    t.model = load_chain(cfg, nullptr);
    if (t.model.type != "random-chain") throw SchemaError("model.type: this subcommand draws random-chain instances");
    t.drivers = cfg.texts("problem.drivers", default_drivers);
    for (const auto& d : t.drivers)
        if (d != "zero" && d != "linear" && d != "soft-clip" && d != "table")
            throw SchemaError("problem.drivers: expected zero, linear, soft-clip or table, got '" + d + "'");
    t.trials = cfg.count("numerics.trials");
    t.steps = cfg.count("problem.steps");
    t.discount = cfg.real("problem.discount", 0.0);
    return t;
}

Result cmd_stability(Context& ctx, const Finish& finish) {
    auto setup = load_trials(ctx.cfg, {"zero", "linear", "soft-clip", "table"});
    const double scale = ctx.cfg.real("numerics.perturbation", 0.1);
    finish();

    Result res;
    Table t{"", {"trial", "driver", "lhs", "lhs_stopping", "rhs", "rhs_driver", "rhs_obstacle", "rhs_deterministic", "slack", "ok"}, {}};
    for (std::size_t i = 0; i < setup.trials; ++i) {
        auto rng = trial_rng(ctx.seed, i);
        const auto chain = random_chain(setup.model.random, rng);
        const auto& kind = setup.drivers[i % setup.drivers.size()];
        const auto drv = random_driver(kind, chain->size(), rng);
        auto p1 = random_problem(chain, setup.steps, drv, rng);
        p1.discount = setup.discount;
        const auto p2 = perturb_problem(p1, drv, scale, rng);
        const std::size_t x = std::uniform_int_distribution<std::size_t>(0, chain->size() - 1)(rng);
        const auto g = stability_gap(p1, p2, x);
        t.rows.push_back({cnt(i), kind, num(g.lhs), num(g.lhs_stopping), num(g.rhs), num(g.rhs_driver),
                          num(g.rhs_obstacle), num(g.rhs_deterministic), num(g.rhs - g.lhs), flag(g.ok)});
        if (!g.ok) res.fail("trial " + std::to_string(i) + describe(": lhs", g.lhs) + describe(" > rhs", g.rhs));
    }
    res.tables.push_back(std::move(t));
    return res;
}

Result cmd_truncation(Context& ctx, const Finish& finish) {
    auto setup = load_trials(ctx.cfg, {"zero", "linear", "soft-clip", "table"});
    finish();

    Result res;
    Table t{"", {"trial", "driver", "lhs", "rhs", "rhs_terminal", "rhs_driver", "rhs_obstacle", "steps_examined", "slack", "ok"}, {}};
    for (std::size_t i = 0; i < setup.trials; ++i) {
        auto rng = trial_rng(ctx.seed, i);
        const auto chain = random_chain(setup.model.random, rng);
        const auto& kind = setup.drivers[i % setup.drivers.size()];
        auto p = random_problem(chain, setup.steps, random_driver(kind, chain->size(), rng), rng);
        p.discount = setup.discount;
        const std::size_t x = std::uniform_int_distribution<std::size_t>(0, chain->size() - 1)(rng);
        const auto g = horizon_truncation_gap(p, x);
        t.rows.push_back({cnt(i), kind, num(g.lhs), num(g.rhs), num(g.rhs_terminal), num(g.rhs_driver),
                          num(g.rhs_obstacle), cnt(g.steps_examined), num(g.rhs - g.lhs), flag(g.ok)});
        if (!g.ok) res.fail("trial " + std::to_string(i) + describe(": lhs", g.lhs) + describe(" > rhs", g.rhs));
    }
    res.tables.push_back(std::move(t));
    return res;
}

Result cmd_discount(Context& ctx, const Finish& finish) {
    auto setup = load_trials(ctx.cfg, {"zero", "linear", "soft-clip", "table"});
    finish();
    if (!(setup.discount > 0.0)) throw SchemaError("problem.discount: the discount subcommand needs a positive rate");

    Result res;
    Table t{"", {"trial", "driver", "max_difference", "backward_euler_gap", "ok"}, {}};
    for (std::size_t i = 0; i < setup.trials; ++i) {
        auto rng = trial_rng(ctx.seed, i);
        const auto chain = random_chain(setup.model.random, rng);
        const auto& kind = setup.drivers[i % setup.drivers.size()];
        auto p = random_problem(chain, setup.steps, random_driver(kind, chain->size(), rng), rng);
        p.discount = setup.discount;
        const auto r = discount_transform_check(p);
        t.rows.push_back({cnt(i), kind, num(r.max_difference), num(r.backward_euler_gap), flag(r.passed)});
        if (!r.passed) res.fail("trial " + std::to_string(i) + describe(": pipelines differ by", r.max_difference));
    }
    res.tables.push_back(std::move(t));
    return res;
}

Result cmd_snell_check(Context& ctx, const Finish& finish) {
    auto setup = load_trials(ctx.cfg, {"zero", "linear", "soft-clip"});
    const auto eps = ctx.cfg.reals("numerics.epsilons", std::vector<double>{0.1, 0.01});
    finish();

    Result res;
    Table t{"", {"trial", "driver", "n_steps", "state", "snell", "brute_force", "difference", "rules", "ok"}, {}};
    Table e{"epsilon", {"trial", "epsilon", "value", "stopped_value", "shortfall", "ok"}, {}};
    for (std::size_t i = 0; i < setup.trials; ++i) {
        auto rng = trial_rng(ctx.seed, i);
        const auto chain = random_chain(setup.model.random, rng);
        const auto& kind = setup.drivers[i % setup.drivers.size()];
        const std::size_t steps = 1 + i % std::max<std::size_t>(setup.steps, 1);
        auto p = random_problem(chain, steps, random_driver(kind, chain->size(), rng), rng);
        p.discount = setup.discount;
        const std::size_t x = std::uniform_int_distribution<std::size_t>(0, chain->size() - 1)(rng);
        const double v = snell_value(p)[x];
        const auto bf = oracle::brute_force_snell(p, x);
        const double diff = std::abs(v - bf.value);
        const bool ok = diff <= 1e-10;
        t.rows.push_back({cnt(i), kind, cnt(steps), cnt(x), num(v), num(bf.value), num(diff), num(bf.rules_enumerated), flag(ok)});
        if (!ok) res.fail("trial " + std::to_string(i) + describe(": snell and brute force differ by", diff));
        const auto sol = solve_rbsde(p);
        for (double ep : eps) {
            const auto rule = epsilon_optimal_time(sol, p, ep);
            const double stopped = evaluate_stopping_rule(p, rule)[x];
            const double shortfall = sol.Y(0, x) - stopped;
            const bool eok = stopped >= sol.Y(0, x) - ep - 1e-10;
            e.rows.push_back({cnt(i), num(ep), num(sol.Y(0, x)), num(stopped), num(shortfall), flag(eok)});
            if (!eok) res.fail("trial " + std::to_string(i) + describe(": eps-optimal rule short by", shortfall));
        }
    }
    res.tables.push_back(std::move(t));
    res.tables.push_back(std::move(e));
    return res;
}

Result cmd_linear_driver(Context& ctx, const Finish& finish) {
    auto& cfg = ctx.cfg;
    const std::string drv = cfg.text("problem.driver");
    const double horizon = cfg.real("numerics.horizons");
    const auto counts = cfg.reals("numerics.step_counts");
    finish();
    const double terminal = 1.0;
    if (drv.rfind("linear:", 0) != 0) throw SchemaError("problem.driver: linear-driver needs linear:lambda");
    const double lambda = parse_real("problem.driver", drv.substr(7));

    Result res;
    Table t{"", {"N", "Y0", "exact", "error", "allowed", "ok"}, {}};
    const double exact = terminal * std::exp(-lambda * horizon);
    for (double c : counts) {
        const auto N = static_cast<std::size_t>(c);
        if (N == 0 || static_cast<double>(N) != c) throw SchemaError("numerics.step_counts: positive integers only");
        const std::vector<double> one{1.0};
        auto chain = std::make_shared<const MarkovChainModel>(
            MarkovChainModel::from_dense(1, one, horizon / static_cast<double>(N)));
        StoppingProblem p;
        p.chain = chain;
        p.n_steps = N;
        p.driver = Driver::linear(lambda);
        p.terminal = {terminal};
        const double y0 = solve_bsde(p)(0, 0);
        const double err = std::abs(y0 - exact), allowed = 5.0 / static_cast<double>(N);
        const bool ok = err <= allowed;
        t.rows.push_back({cnt(N), num(y0), num(exact), num(err), num(allowed), flag(ok)});
        if (!ok) res.fail("N = " + std::to_string(N) + describe(": error", err));
    }
    res.tables.push_back(std::move(t));
    return res;
}

Result cmd_exit_time(Context& ctx, const Finish& finish) {
    auto& cfg = ctx.cfg;
    const std::string type = cfg.text("model.type");
    if (type != "stable-process") throw SchemaError("model.type: exit-time needs stable-process");
    const auto alphas = cfg.reals("model.alphas");
    const auto lower = cfg.reals("model.lower");
    const auto upper = cfg.reals("model.upper");
    const auto start = cfg.reals("problem.start", std::vector<double>{0.0});
    const std::size_t paths = cfg.count("numerics.paths");
    ExitTimeOptions eo;
    eo.dt = cfg.real("numerics.dt", eo.dt);
    eo.threads = ctx.threads;
    finish();
    if (lower.size() != 1 || upper.size() != 1 || start.size() != 1)
        throw SchemaError("exit-time runs on an interval: lower, upper and start take one value");

    Result res;
    Table t{"", {"alpha", "mean", "std_error", "exact", "z_score", "bound", "censored_fraction", "dt", "ok"}, {}};
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        const double a = alphas[i];
        const auto est = mean_exit_time_mc(a, lower[0], upper[0], start[0], paths, ctx.seed + i, eo);
        const double exact = interval_exit_time(a, lower[0], upper[0], start[0]);
        const double z = (est.mean - exact) / est.std_error;
        const bool ok = std::abs(z) <= 3.0 && est.within_bound;
        t.rows.push_back({num(a), num(est.mean), num(est.std_error), num(exact), num(z), num(est.bound),
                          num(est.censored_fraction), num(est.dt), flag(ok)});
        if (!ok) res.fail("alpha = " + format_cell(a) + describe(": z-score", z) + describe(", mean", est.mean) +
                          describe(", bound", est.bound));
    }
    res.tables.push_back(std::move(t));
    return res;
}

const std::map<std::string, Result (*)(Context&, const Finish&)>& commands() {
    static const std::map<std::string, Result (*)(Context&, const Finish&)> table{
        {"price", cmd_price},
        {"perpetual", cmd_perpetual},
        {"converge", cmd_converge},
        {"verify-5-6", cmd_verify},
        {"penalize", cmd_penalize},
        {"stability", cmd_stability},
        {"exit-time", cmd_exit_time},
        {"truncation", cmd_truncation},
        {"discount", cmd_discount},
        {"snell-check", cmd_snell_check},
        {"linear-driver", cmd_linear_driver},
    };
    return table;
}

std::string versions() {
    std::ostringstream s;
    s << "ostop 1.0.0; eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION
      << "; boost " << BOOST_VERSION / 100000 << '.' << BOOST_VERSION / 100 % 1000 << '.' << BOOST_VERSION % 100
      << "; nlohmann_json " << NLOHMANN_JSON_VERSION_MAJOR << '.' << NLOHMANN_JSON_VERSION_MINOR << '.'
      << NLOHMANN_JSON_VERSION_PATCH << "; compiler " << __VERSION__;
    return s.str();
}

}  // namespace

std::string sha256_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    std::ostringstream hex;
    for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

RunOutcome run_experiment(const std::filesystem::path& config, const RunOptions& opts) {
    RunOutcome out;
    const auto t0 = std::chrono::steady_clock::now();
    std::string subcommand, name = config.stem().string(), config_hash;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    Result res;
    bool ran = false;
    try {
        if (!std::filesystem::exists(config)) throw SchemaError("config file not found: " + config.string());
        config_hash = sha256_file(config);
        Config cfg(config);
        subcommand = cfg.text("experiment.subcommand");
        name = cfg.text("experiment.name", name);
        seed = opts.seed ? *opts.seed : cfg.count("experiment.seed", 1);
        threads = static_cast<unsigned>(std::max<std::uint64_t>(1, cfg.count("experiment.threads", 1)));
        if (opts.threads) threads = std::min(threads, std::max(1u, *opts.threads));
        const auto it = commands().find(subcommand);
        if (it == commands().end()) {
            std::string known;
            for (const auto& [k, v] : commands()) known += (known.empty() ? "" : ", ") + k;
            throw SchemaError("experiment.subcommand: unknown '" + subcommand + "' (expected one of " + known + ")");
        }
        Context ctx{cfg, seed, threads, out.warnings};
        const Finish finish = [&] {
            for (const auto& k : cfg.unused()) out.warnings.push_back("key '" + k + "' is not used by " + subcommand);
        };
        res = it->second(ctx, finish);
        ran = true;
        if (!res.ok) {
            out.status = RunStatus::assertion_failed;
            out.message = res.failure;
        } else if (opts.strict && !out.warnings.empty()) {
            out.status = RunStatus::assertion_failed;
            out.message = "strict mode: " + out.warnings.front();
        }
    } catch (const SchemaError& e) {
        out.status = RunStatus::schema_error;
        out.message = e.what();
    } catch (const HypothesisViolation& e) {
        out.status = RunStatus::hypothesis_violation;
        out.message = e.condition() == "B1" ? std::string("assumption (B1) violated: ") + e.what()
                                            : std::string("hypothesis ") + e.what();
    } catch (const std::exception& e) {
        out.status = RunStatus::assertion_failed;
        out.message = e.what();
    }

    std::filesystem::create_directories(opts.out_dir);
    json body = json::object();
    body["experiment"] = name;
    body["subcommand"] = subcommand;
    body["seed"] = seed;
    body["status"] = static_cast<int>(out.status);
    body["passed"] = out.status == RunStatus::pass;
    body["message"] = out.message;
    if (ran) {
        for (const auto& t : res.tables) {
            const std::string stem = t.suffix.empty() ? name : name + "_" + t.suffix;
            const auto csv = opts.out_dir / (stem + ".csv");
            write_csv(t, csv);
            out.outputs.push_back(csv);
            body[t.suffix.empty() ? "table" : t.suffix] = table_json(t);
        }
        body["summary"] = res.summary;
    }
    body["warnings"] = out.warnings;
    const auto json_path = opts.out_dir / (name + ".json");
    std::ofstream(json_path) << body.dump(2) << '\n';
    out.outputs.push_back(json_path);

    json manifest = json::object();
    manifest["config"] = std::filesystem::absolute(config).string();
    manifest["config_sha256"] = config_hash;
    manifest["subcommand"] = subcommand;
    manifest["seed"] = seed;
    manifest["threads"] = threads;
    manifest["strict"] = opts.strict;
    manifest["versions"] = versions();
    manifest["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["status"] = static_cast<int>(out.status);
    json files = json::array();
    for (const auto& f : out.outputs) files.push_back(f.filename().string());
    manifest["outputs"] = files;
    const auto manifest_path = opts.out_dir / (name + ".manifest.json");
    std::ofstream(manifest_path) << manifest.dump(2) << '\n';
    out.outputs.push_back(manifest_path);
    return out;
}

}  // namespace ostop
