#include "ostop/path_set.hpp"

#include "ostop/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ostop {

static_assert(std::endian::native == std::endian::little, "path-set I/O assumes a little-endian host");

std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
    return std::mt19937_64(seq);
}

PathSet sample_paths(const ExpLevyModel& model, const std::vector<double>& grid, std::size_t n_paths,
                     std::uint64_t seed, unsigned threads, std::size_t first_path) {
    if (grid.empty() || grid.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
    for (std::size_t j = 1; j < grid.size(); ++j)
        if (!(grid[j] > grid[j - 1])) throw std::invalid_argument("time grid must be strictly increasing");
    const std::size_t d = model.dim();
    PathSet ps;
    ps.n_paths = n_paths;
    ps.dim = d;
    ps.seed = seed;
    ps.grid = grid;
    ps.values.assign(n_paths * grid.size() * d, 0.0);

    std::vector<double> drift(d);
    for (std::size_t i = 0; i < d; ++i)
        drift[i] = model.rate() - model.dividends()[i] + model.drift_correction()[i];
    const auto& f = model.vol_factor();
    const double lambda = model.jumps().intensity;

    parallel_for(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> noise(d), z(d);
        for (std::size_t p = lo; p < hi; ++p) {
            auto rng = path_rng(seed, first_path + p);
            std::normal_distribution<double> normal(0.0, 1.0);
            std::fill(noise.begin(), noise.end(), 0.0);
            for (std::size_t j = 0; j < grid.size(); ++j) {
                if (j > 0) {
                    const double dt = grid[j] - grid[j - 1];
                    const double sq = std::sqrt(dt);
                    for (std::size_t k = 0; k < d; ++k) z[k] = normal(rng);
                    for (std::size_t i = 0; i < d; ++i) {
                        double s = 0.0;
                        for (std::size_t k = 0; k < d; ++k) s += f[i * d + k] * z[k];
                        noise[i] += sq * s;
                    }
                    if (lambda > 0.0) {
                        std::poisson_distribution<long> pois(lambda * dt);
                        const long n_jumps = pois(rng);
                        for (long q = 0; q < n_jumps; ++q) {
                            const auto y = model.sample_jump(rng);
                            for (std::size_t i = 0; i < d; ++i) noise[i] += y[i];
                        }
                    }
                }
                for (std::size_t i = 0; i < d; ++i)
                    ps.at(p, j, i) = model.initial_prices()[i] * std::exp(drift[i] * grid[j] + noise[i]);
            }
        }
    });
    return ps;
}

PathSet sample_chain_paths(const MarkovChainModel& chain, std::size_t start, std::size_t n_steps,
                           std::size_t n_paths, std::uint64_t seed, unsigned threads) {
    if (start >= chain.size()) throw std::invalid_argument("start state out of range");
    const std::size_t d = chain.dim();
    PathSet ps;
    ps.n_paths = n_paths;
    ps.dim = d;
    ps.seed = seed;
    ps.grid.resize(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) ps.grid[k] = static_cast<double>(k) * chain.step();
    ps.values.assign(n_paths * ps.grid.size() * d, PathSet::cemetery);

    parallel_for(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t p = lo; p < hi; ++p) {
            auto rng = path_rng(seed, p);
            std::size_t s = start;
            for (std::size_t k = 0; k <= n_steps; ++k) {
                for (std::size_t i = 0; i < d; ++i) ps.at(p, k, i) = chain.point(s)[i];
                if (k == n_steps) break;
                double u = unif(rng);
                auto cols = chain.kernel().cols(s);
                auto vals = chain.kernel().values(s);
                std::size_t next = chain.size();
                for (std::size_t q = 0; q < cols.size(); ++q) {
                    if (u < vals[q]) {
                        next = cols[q];
                        break;
                    }
                    u -= vals[q];
                }
                if (next == chain.size()) break;
                s = next;
            }
        }
    });
    return ps;
}

namespace {

constexpr char kMagic[4] = {'S', 'T', 'P', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("path-set file truncated");
    return v;
}

}  // namespace

void write_path_set(const PathSet& ps, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + file.string() + " for writing");
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, ps.n_paths);
    put<std::uint64_t>(out, ps.n_times());
    put<std::uint64_t>(out, ps.dim);
    put<std::uint64_t>(out, ps.seed);
    for (double t : ps.grid) put(out, t);
    for (std::size_t j = 0; j < ps.n_times(); ++j)
        for (std::size_t i = 0; i < ps.dim; ++i)
            for (std::size_t p = 0; p < ps.n_paths; ++p) put(out, ps.at(p, j, i));
    if (!out) throw std::runtime_error("write to " + file.string() + " failed");
}

PathSet read_path_set(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a path-set file");
    if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("unsupported path-set version");
    PathSet ps;
    ps.n_paths = get<std::uint64_t>(in);
    const auto n_times = get<std::uint64_t>(in);
    ps.dim = get<std::uint64_t>(in);
    ps.seed = get<std::uint64_t>(in);
    ps.grid.resize(n_times);
    for (auto& t : ps.grid) t = get<double>(in);
    ps.values.resize(ps.n_paths * n_times * ps.dim);
    for (std::size_t j = 0; j < n_times; ++j)
        for (std::size_t i = 0; i < ps.dim; ++i)
            for (std::size_t p = 0; p < ps.n_paths; ++p) ps.at(p, j, i) = get<double>(in);
    return ps;
}

}  // namespace ostop
