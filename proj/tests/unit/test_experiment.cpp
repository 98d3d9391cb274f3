#include "ostop/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ostop;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "ostop_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
    const auto file = dir / "run.ini";
    std::ofstream(file) << body;
    return file;
}

std::string slurp(const fs::path& f) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const char* kLinear = "[experiment]\nsubcommand = linear-driver\n[problem]\ndriver = linear:0.5\n"
                      "[numerics]\nhorizons = 1\nstep_counts = 100, 1000\n";

}  // namespace

TEST_CASE("sha256 of a known string") {
    const auto dir = scratch("sha");
    std::ofstream(dir / "abc") << "abc";
    CHECK(sha256_file(dir / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("passing run writes CSV, JSON and manifest") {
    const auto dir = scratch("pass");
    RunOptions o;
    o.out_dir = dir / "out";
    const auto out = run_experiment(write_config(dir, kLinear), o);
    CHECK(out.status == RunStatus::pass);
    const auto csv = slurp(o.out_dir / "run.csv");
    CHECK(csv.rfind("N,Y0,exact,error,allowed,ok\n", 0) == 0);
    CHECK(fs::exists(o.out_dir / "run.json"));
    const auto manifest = slurp(o.out_dir / "run.manifest.json");
    CHECK(manifest.find(sha256_file(dir / "run.ini")) != std::string::npos);
    CHECK(manifest.find("wall_time_seconds") != std::string::npos);
}

TEST_CASE("schema errors give status 2") {
    const auto dir = scratch("schema");
    RunOptions o;
    o.out_dir = dir / "out";
    CHECK(run_experiment(write_config(dir, std::string(kLinear) + "typo_key = 3\n"), o).status == RunStatus::schema_error);
    CHECK(run_experiment(write_config(dir, "[experiment]\nsubcommand = linear-driver\n"), o).status ==
          RunStatus::schema_error);
    CHECK(run_experiment(write_config(dir, "[experiment]\nsubcommand = dance\n"), o).status == RunStatus::schema_error);
    CHECK(run_experiment(dir / "missing.ini", o).status == RunStatus::schema_error);
    const auto bad_number = run_experiment(
        write_config(dir, "[experiment]\nsubcommand = linear-driver\n[problem]\ndriver = linear:0.5\n"
                          "[numerics]\nhorizons = one\nstep_counts = 100\n"),
        o);
    CHECK(bad_number.status == RunStatus::schema_error);
}

TEST_CASE("obstacle above the terminal payoff gives status 3 citing B1") {
    const auto dir = scratch("b1");
    RunOptions o;
    o.out_dir = dir / "out";
    const auto out = run_experiment(
        write_config(dir, "[experiment]\nsubcommand = converge\n[model]\ntype = stable-chain\nalpha = 2\n"
                          "lower = -1\nupper = 1\nh = 0.1\n[problem]\nobstacle = constant:1\nterminal = zero\n"
                          "[numerics]\nhorizons = 1\n"),
        o);
    CHECK(out.status == RunStatus::hypothesis_violation);
    CHECK(out.message.find("(B1)") != std::string::npos);
}

TEST_CASE("failing assertion gives status 1 and names the row") {
    const auto dir = scratch("fail");
    RunOptions o;
    o.out_dir = dir / "out";
    const auto out = run_experiment(
        write_config(dir, "[experiment]\nsubcommand = perpetual\n[model]\nspot = 100\nrate = 0.05\nvol = 0.04\n"
                          "[problem]\npayoff = put:100\n[numerics]\ntolerance = 0.01\nreference = 11\n"),
        o);
    CHECK(out.status == RunStatus::assertion_failed);
    CHECK(out.message.find("reference") != std::string::npos);
}

TEST_CASE("strict mode turns unused keys into failures") {
    const auto dir = scratch("strict");
    RunOptions o;
    o.out_dir = dir / "out";
    const auto cfg = write_config(dir, std::string(kLinear) + "trials = 4\n");
    const auto lax = run_experiment(cfg, o);
    CHECK(lax.status == RunStatus::pass);
    CHECK(lax.warnings.size() == 1);
    o.strict = true;
    CHECK(run_experiment(cfg, o).status == RunStatus::assertion_failed);
}

TEST_CASE("reruns are byte-identical and the seed flag takes effect") {
    const auto dir = scratch("determinism");
    const std::string body = "[experiment]\nsubcommand = stability\nseed = 5\n[model]\ntype = random-chain\n"
                             "states = 8\n[problem]\nsteps = 6\n[numerics]\ntrials = 6\n";
    const auto cfg = write_config(dir, body);
    RunOptions a, b, c;
    a.out_dir = dir / "a";
    b.out_dir = dir / "b";
    b.threads = 4;
    c.out_dir = dir / "c";
    c.seed = 6;
    CHECK(run_experiment(cfg, a).status == RunStatus::pass);
    CHECK(run_experiment(cfg, b).status == RunStatus::pass);
    CHECK(run_experiment(cfg, c).status == RunStatus::pass);
    CHECK(slurp(a.out_dir / "run.csv") == slurp(b.out_dir / "run.csv"));
    CHECK(slurp(a.out_dir / "run.csv") != slurp(c.out_dir / "run.csv"));
}
