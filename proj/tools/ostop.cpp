#include "ostop/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Optimal stopping experiments: reflected BSDEs on Markov chains, horizon asymptotics, pricing"};
    app.require_subcommand(1);

    std::string config;
    ostop::RunOptions opts;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    auto* run = app.add_subcommand("run", "Run the experiment described by an INI config");
    run->add_option("config", config, "Experiment config (INI)")->required();
    run->add_option("--out-dir", opts.out_dir, "Directory for CSV, JSON and manifest output");
    auto* seed_opt = run->add_option("--seed", seed, "Override the config seed");
    auto* threads_opt = run->add_option("--threads", threads, "Upper bound on worker threads");
    run->add_flag("--strict", opts.strict, "Treat warnings as failures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ostop::RunStatus::schema_error);
    }
    if (*seed_opt) opts.seed = seed;
    if (*threads_opt) opts.threads = threads;

    const auto out = ostop::run_experiment(config, opts);
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& f : out.outputs) std::cout << "wrote " << f.string() << '\n';
    if (out.status == ostop::RunStatus::pass) {
        std::cout << "PASS\n";
    } else {
        std::cerr << "FAIL (status " << static_cast<int>(out.status) << "): " << out.message << '\n';
    }
    return static_cast<int>(out.status);
}
