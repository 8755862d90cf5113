#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fiberheat/experiments.hpp"

using namespace fiberheat;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "fiberheat_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// rows of a CSV column by header name
std::vector<std::string> column(const fs::path& csv, const std::string& name) {
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    std::vector<std::string> cols;
    std::stringstream hs(header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
    size_t idx = std::find(cols.begin(), cols.end(), name) - cols.begin();
    REQUIRE(idx < cols.size());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        std::stringstream ls(line);
        std::string cell;
        for (size_t i = 0; i <= idx; ++i) std::getline(ls, cell, ',');
        out.push_back(cell);
    }
    return out;
}

}  // namespace

TEST_CASE("geometry selftest passes on every catalog model", "[experiments]") {
    ExperimentConfig cfg = default_config("geometry-selftest");
    cfg.output_dir = fresh_dir("geo").string();
    std::ostringstream log;
    RunResult run = run_experiment(cfg, log);
    auto pass = column(fs::path(run.directory) / "results.csv", "pass");
    CHECK(pass.size() >= 16);  // 4 checks x 4 models
    for (const auto& p : pass) CHECK(p == "1");
    CHECK(fs::exists(fs::path(run.directory) / "manifest.txt"));
}

TEST_CASE("mde demo produces exact inversions", "[experiments]") {
    ExperimentConfig cfg = default_config("mde-demo");
    cfg.K = 8;
    cfg.mde_trials = 4;
    cfg.output_dir = fresh_dir("mde").string();
    std::ostringstream log;
    RunResult run = run_experiment(cfg, log);
    for (const auto& r :
         column(fs::path(run.directory) / "residuals.csv", "forward_residual_rel"))
        CHECK(std::stod(r) <= 1e-12);
    for (const auto& r :
         column(fs::path(run.directory) / "residuals.csv", "inversion_bound_ok"))
        CHECK(r == "1");
    auto err = column(fs::path(run.directory) / "resonance.csv", "error");
    REQUIRE(err.size() == 1);
    CHECK(err[0] == "SmallDivisor");
    CHECK(column(fs::path(run.directory) / "resonance.csv", "m")[0] == "1");
    CHECK(column(fs::path(run.directory) / "resonance.csv", "n")[0] == "-2");
}

TEST_CASE("diophantine scan writes measures and a clean cross-check",
          "[experiments]") {
    ExperimentConfig cfg = default_config("diophantine-scan");
    cfg.K = 30;
    cfg.brute_force_samples = 20000;
    cfg.M_list = {10.0, 100.0};
    cfg.output_dir = fresh_dir("dio").string();
    std::ostringstream log;
    RunResult run = run_experiment(cfg, log);
    auto mism = column(fs::path(run.directory) / "scan.csv", "mismatches");
    REQUIRE(mism.size() == 1);
    CHECK(mism[0] == "0");
    auto mu = column(fs::path(run.directory) / "measures.csv", "excluded_measure");
    REQUIRE(mu.size() == 2);
    CHECK(std::stod(mu[0]) > std::stod(mu[1]));
}

TEST_CASE("reruns are byte identical on data CSVs", "[experiments]") {
    ExperimentConfig cfg = default_config("annulus2d");
    cfg.n_psi = 48;
    cfg.n_theta = 48;
    cfg.eps_list = {1.0, 0.1};

    cfg.output_dir = fresh_dir("det_a").string();
    std::ostringstream log;
    RunResult a = run_experiment(cfg, log);
    cfg.output_dir = fresh_dir("det_b").string();
    RunResult b = run_experiment(cfg, log);

    for (const auto& f : a.files) {
        if (f == "solve_log.csv") continue;  // wall-clock log, excluded
        INFO("file " << f);
        CHECK(slurp(fs::path(a.directory) / f) == slurp(fs::path(b.directory) / f));
    }
}

TEST_CASE("manifest lists the config hash and every data file", "[experiments]") {
    ExperimentConfig cfg = default_config("geometry-selftest");
    cfg.output_dir = fresh_dir("manifest").string();
    std::ostringstream log;
    RunResult run = run_experiment(cfg, log);
    std::string manifest = slurp(fs::path(run.directory) / "manifest.txt");
    CHECK(manifest.find("config_hash " + config_hash(cfg)) != std::string::npos);
    for (const auto& f : run.files)
        CHECK(manifest.find("file " + f) != std::string::npos);
}

TEST_CASE("worker pool matches serial execution", "[experiments]") {
    ExperimentConfig cfg = default_config("channel2d");
    cfg.n_psi = 49;
    cfg.n_theta = 48;
    cfg.eps_list = {1e-1, 5e-2, 2e-2};
    cfg.output_dir = fresh_dir("pool_serial").string();
    std::ostringstream log;
    RunResult serial = run_experiment(cfg, log);
    cfg.workers = 3;
    cfg.output_dir = fresh_dir("pool_par").string();
    RunResult par = run_experiment(cfg, log);
    CHECK(slurp(fs::path(serial.directory) / "results.csv") ==
          slurp(fs::path(par.directory) / "results.csv"));
}
