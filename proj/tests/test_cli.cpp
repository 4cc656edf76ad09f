#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "spaco/io.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* env = std::getenv("SPACO_CLI");
    REQUIRE(env != nullptr);
    return env;
}

int run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("spaco_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("cli: simulate -> fit -> crossfit -> test pipeline") {
    TempDir dir;
    spaco::write_file(dir.sub("sim.json"),
                      R"({"I": 16, "T": 6, "J": 4, "q": 3, "gamma": 1.0, "c1": 3.0, "c2": 0.0})");

    REQUIRE(run("simulate --config " + dir.sub("sim.json") + " --out " + dir.sub("data") +
                " --seed 5") == 0);
    CHECK(fs::exists(dir.sub("data") + "/tensor.csv"));
    CHECK(fs::exists(dir.sub("data") + "/covariates.csv"));
    CHECK(fs::exists(dir.sub("data") + "/truth_signal.csv"));
    CHECK(fs::exists(dir.sub("data") + "/manifest.json"));

    // row count: observed cells (all of them, gamma = 1) times features
    {
        std::ifstream in(dir.sub("data") + "/tensor.csv");
        std::string line;
        long rows = -1;  // header
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 16 * 6 * 4);
    }

    spaco::write_file(dir.sub("fit.json"),
                      R"({"K": 3, "max_outer_iters": 25, "lambda2_mode": "auto", "seed": 5})");
    REQUIRE(run("fit --tensor " + dir.sub("data") + "/tensor.csv --covariates " +
                dir.sub("data") + "/covariates.csv --kinds " + dir.sub("data") +
                "/covariate_kinds.json --config " + dir.sub("fit.json") + " --out " +
                dir.sub("fit")) == 0);
    CHECK(fs::exists(dir.sub("fit") + "/params.json"));
    CHECK(fs::exists(dir.sub("fit") + "/report.json"));
    CHECK(fs::exists(dir.sub("fit") + "/posterior.csv"));
    CHECK(fs::exists(dir.sub("fit") + "/trajectories.svg"));
    CHECK(fs::exists(dir.sub("fit") + "/loadings_k1.svg"));

    {
        const auto report = spaco::Json::parse(spaco::read_file(dir.sub("fit") + "/report.json"));
        const auto& trace = report.at("objective_trace");
        REQUIRE(trace.size() >= 2);
        double prev = trace[0].at("total").get<double>();
        for (const auto& o : trace) {
            const double cur = o.at("total").get<double>();
            CHECK(cur <= prev + 1e-8 * std::abs(prev) + 1e-6);
            prev = cur;
        }
    }

    // missing config file is an input error
    REQUIRE(run("crossfit --tensor " + dir.sub("data") + "/tensor.csv --covariates " +
                dir.sub("data") + "/covariates.csv --kinds " + dir.sub("data") +
                "/covariate_kinds.json --fit-dir " + dir.sub("fit") + " --config " +
                dir.sub("cf.json") + " --out " + dir.sub("cf") + " --seed 6") == 2);
    spaco::write_file(dir.sub("cf.json"), R"({"M": 4, "refit_max_iters": 8})");
    REQUIRE(run("crossfit --tensor " + dir.sub("data") + "/tensor.csv --covariates " +
                dir.sub("data") + "/covariates.csv --kinds " + dir.sub("data") +
                "/covariate_kinds.json --fit-dir " + dir.sub("fit") + " --config " +
                dir.sub("cf.json") + " --out " + dir.sub("cf") + " --seed 6") == 0);
    CHECK(fs::exists(dir.sub("cf") + "/crossfit.json"));
    CHECK(fs::exists(dir.sub("cf") + "/mu_tilde.csv"));

    spaco::write_file(dir.sub("test.json"), R"({"B": 60, "mode": "both", "seed": 7})");
    REQUIRE(run("test --tensor " + dir.sub("data") + "/tensor.csv --covariates " +
                dir.sub("data") + "/covariates.csv --kinds " + dir.sub("data") +
                "/covariate_kinds.json --fit-dir " + dir.sub("fit") + " --crossfit " +
                dir.sub("cf") + "/crossfit.json --config " + dir.sub("test.json") +
                " --out " + dir.sub("test")) == 0);
    CHECK(fs::exists(dir.sub("test") + "/pvalues.csv"));
    CHECK(fs::exists(dir.sub("test") + "/manhattan_partial.svg"));
    CHECK(fs::exists(dir.sub("test") + "/manhattan_marginal.svg"));
    {
        std::ifstream in(dir.sub("test") + "/pvalues.csv");
        std::string line;
        long rows = -1;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 2 * 3 * 3);  // both modes, q = 3, K = 3
    }
}

TEST_CASE("cli: simulate twice with the same seed is byte-identical") {
    TempDir dir;
    spaco::write_file(dir.sub("sim.json"), R"({"I": 8, "T": 5, "J": 3, "q": 2, "c1": 1.0})");
    REQUIRE(run("simulate --config " + dir.sub("sim.json") + " --out " + dir.sub("a") +
                " --seed 9") == 0);
    REQUIRE(run("simulate --config " + dir.sub("sim.json") + " --out " + dir.sub("b") +
                " --seed 9") == 0);
    CHECK(spaco::read_file(dir.sub("a") + "/tensor.csv") ==
          spaco::read_file(dir.sub("b") + "/tensor.csv"));
    CHECK(spaco::read_file(dir.sub("a") + "/covariates.csv") ==
          spaco::read_file(dir.sub("b") + "/covariates.csv"));
}

TEST_CASE("cli: corrupt tensor csv exits with code 2") {
    TempDir dir;
    spaco::write_file(dir.sub("bad.csv"),
                      "subject_id,time,feature_id,value\na,1,f1,1.0\na,oops,f1,2\n");
    CHECK(run("fit --tensor " + dir.sub("bad.csv") + " --out " + dir.sub("out")) == 2);
}

TEST_CASE("cli: invalid bench table id exits with code 2") {
    TempDir dir;
    CHECK(run("bench --table 9 --scale 1 --out " + dir.sub("out")) == 2);
}

TEST_CASE("cli: bench table 2 smoke run emits the grid csv") {
    TempDir dir;
    spaco::write_file(
        dir.sub("bench.json"),
        R"({"I": 14, "T": 6, "J_small": 4, "J_large": 5, "q": 3, "fit_max_iters": 8})");
    REQUIRE(run("bench --table 2 --scale 1 --seed 3 --config " + dir.sub("bench.json") +
                " --out " + dir.sub("bench")) == 0);
    const std::string body = spaco::read_file(dir.sub("bench") + "/table2.csv");
    CHECK(body.find("SNR1J4/raw") != std::string::npos);
    CHECK(body.find("r.1SNR10") != std::string::npos);
    long rows = -1;  // header excluded
    for (size_t pos = body.find('\n'); pos != std::string::npos; pos = body.find('\n', pos + 1))
        ++rows;
    CHECK(rows == 18);
}
