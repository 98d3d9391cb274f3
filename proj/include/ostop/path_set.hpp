#pragma once

#include "ostop/exp_levy.hpp"
#include "ostop/markov_chain.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <vector>

namespace ostop {

/// Simulated paths, values laid out [path][time][dim]. A killed path holds
/// NaN (the cemetery sentinel) from the killing time on.
struct PathSet {
    std::size_t n_paths = 0;
    std::size_t dim = 0;
    std::uint64_t seed = 0;
    std::vector<double> grid;
    std::vector<double> values;

    std::size_t n_times() const noexcept { return grid.size(); }
    double at(std::size_t path, std::size_t time, std::size_t coord = 0) const {
        return values[(path * grid.size() + time) * dim + coord];
    }
    double& at(std::size_t path, std::size_t time, std::size_t coord = 0) {
        return values[(path * grid.size() + time) * dim + coord];
    }
    static bool is_cemetery(double v) noexcept { return std::isnan(v); }
    static constexpr double cemetery = std::numeric_limits<double>::quiet_NaN();
};

/// Independent generator for one path, derived from (seed, path index) only.
std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path);

/// Exact simulation of X on the grid: Gaussian plus compound-Poisson log
/// increments, no time-stepping bias. Grid must start at 0 and increase.
/// Path p of the set uses the stream of path index first_path + p, so a large
/// sample can be produced in chunks.
PathSet sample_paths(const ExpLevyModel& model, const std::vector<double>& grid, std::size_t n_paths,
                     std::uint64_t seed, unsigned threads = 1, std::size_t first_path = 0);

/// Paths of a killed chain started at `start`; coordinates of the visited states.
PathSet sample_chain_paths(const MarkovChainModel& chain, std::size_t start, std::size_t n_steps,
                           std::size_t n_paths, std::uint64_t seed, unsigned threads = 1);

/// Columnar little-endian dump: "STPM", u32 version, u64 n_paths, n_times,
/// dim, seed, f64 grid, then f64 payload ordered [time][dim][path].
void write_path_set(const PathSet& ps, const std::filesystem::path& file);
PathSet read_path_set(const std::filesystem::path& file);

}  // namespace ostop
