// spaco: simulate | fit | crossfit | test | bench
//
// Exit codes: 0 success, 1 numerical failure, 2 input/config error.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "spaco/init.hpp"
#include "spaco/io.hpp"
#include "spaco/parallel.hpp"
#include "spaco/rng.hpp"
#include "spaco/svg.hpp"

namespace fs = std::filesystem;
using namespace spaco;

namespace {

struct ManifestBuilder {
    Json j;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    ManifestBuilder(const std::string& command, std::uint64_t seed) {
        j["command"] = command;
        j["seed"] = seed;
        j["tool_version"] = "spaco 1.0.0";
        j["inputs"] = Json::object();
        j["outputs"] = Json::array();
    }
    void input(const std::string& path) { j["inputs"][path] = file_hash(path); }
    void config_hash(const Json& cfg) { j["config_hash"] = content_hash(cfg.dump()); }
    void output(const std::string& path) { j["outputs"].push_back(path); }
    void write(const std::string& out_dir) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        j["wall_time_sec"] = secs;
        write_file(out_dir + "/manifest.json", j.dump(2) + "\n");
    }
};

Json load_config(const std::string& path) {
    if (path.empty()) return Json::object();
    return Json::parse(read_file(path));
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::invalid_argument("cannot create output directory " + dir);
}

std::vector<std::string> default_ids(const std::string& prefix, int n) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<size_t>(n));
    for (int i = 1; i <= n; ++i) ids.push_back(prefix + std::to_string(i));
    return ids;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
    Json cfg = load_config(config_path);
    ScenarioConfig sc = scenario_config_from_json(cfg);
    if (seed) sc.seed = *seed;
    ensure_dir(out_dir);

    ManifestBuilder manifest("simulate", sc.seed);
    manifest.config_hash(cfg);

    const SimData sim = generate(sc, sc.seed);
    const auto sids = default_ids("", sim.X.subjects());
    const auto fids = default_ids("", sim.X.features());

    write_tensor_csv(out_dir + "/tensor.csv", sim.X, &sids, &fids);
    manifest.output(out_dir + "/tensor.csv");
    write_covariates_csv(out_dir + "/covariates.csv", out_dir + "/covariate_kinds.json",
                         sim.Z, sids);
    manifest.output(out_dir + "/covariates.csv");
    manifest.output(out_dir + "/covariate_kinds.json");

    // truth: signal array over every cell, true scores and coefficients
    {
        std::ofstream truth(out_dir + "/truth_signal.csv");
        truth << "subject_id,time,feature_id,value\n";
        truth.precision(17);
        for (int i = 0; i < sim.X.subjects(); ++i)
            for (int t = 0; t < sim.X.times(); ++t)
                for (int j = 0; j < sim.X.features(); ++j)
                    truth << sids[static_cast<size_t>(i)] << ',' << sim.X.grid()[t] << ','
                          << fids[static_cast<size_t>(j)] << ',' << sim.F.at(i, t, j) << '\n';
    }
    manifest.output(out_dir + "/truth_signal.csv");
    write_posterior_csv(out_dir + "/truth_scores.csv", sim.U_true, sids);
    manifest.output(out_dir + "/truth_scores.csv");
    {
        Json jt = Json::object();
        Json rows = Json::array();
        for (int l = 0; l < sim.beta_true.rows(); ++l) {
            Json r = Json::array();
            for (int k = 0; k < sim.beta_true.cols(); ++k) r.push_back(sim.beta_true(l, k));
            rows.push_back(r);
        }
        jt["beta_true"] = rows;
        jt["theta"] = std::vector<double>(sim.theta.data(), sim.theta.data() + sim.theta.size());
        jt["resampled_subjects"] = sim.resampled;
        write_file(out_dir + "/truth_meta.json", jt.dump(2) + "\n");
    }
    manifest.output(out_dir + "/truth_meta.json");

    manifest.write(out_dir);
    return 0;
}

int cmd_fit(const std::string& tensor_path, const std::string& cov_path,
            const std::string& kinds_path, const std::string& config_path,
            const std::string& out_dir, std::optional<std::uint64_t> seed) {
    Json cfg = load_config(config_path);
    FitConfig fc = fit_config_from_json(cfg);
    if (seed) fc.seed = *seed;
    ensure_dir(out_dir);

    ManifestBuilder manifest("fit", fc.seed);
    manifest.config_hash(cfg);
    manifest.input(tensor_path);

    TensorData data = read_tensor_csv(tensor_path);
    CovariateMatrix Z;
    if (!cov_path.empty()) {
        if (kinds_path.empty())
            throw std::invalid_argument("--covariates requires --kinds <json>");
        manifest.input(cov_path);
        manifest.input(kinds_path);
        Z = read_covariates_csv(cov_path, kinds_path, data.subject_ids);
    }

    InitConfig icfg;
    icfg.K = fc.K;
    icfg.seed = derive_seed(fc.seed, 0x1417);
    if (cfg.contains("init")) {
        const Json& ij = cfg.at("init");
        icfg.ridge_delta = ij.value("ridge_delta", -1.0);
        icfg.bandwidth_hG = ij.value("bandwidth_hG", -1.0);
        icfg.core_als_iters = ij.value("core_als_iters", 200);
    }
    const InitResult init = initialize(data.X, Z.empty() ? 0 : Z.count(), icfg);
    const SpacoFit result = fit(data.X, Z, fc, init.params);

    write_file(out_dir + "/params.json", params_to_json(result.params).dump(2) + "\n");
    manifest.output(out_dir + "/params.json");
    Json report = fit_report_to_json(result.report);
    for (const auto& w : init.warnings) report["warnings"].push_back("init: " + w);
    write_file(out_dir + "/report.json", report.dump(2) + "\n");
    manifest.output(out_dir + "/report.json");
    write_posterior_csv(out_dir + "/posterior.csv", result.posterior.mu, data.subject_ids);
    manifest.output(out_dir + "/posterior.csv");

    write_file(out_dir + "/trajectories.svg",
               svg_trajectories(result.params.Phi, data.X.grid().points));
    manifest.output(out_dir + "/trajectories.svg");
    for (int k = 0; k < result.params.n_factors(); ++k) {
        write_file(out_dir + "/loadings_k" + std::to_string(k + 1) + ".svg",
                   svg_loadings(result.params.V.col(k), data.feature_ids,
                                "feature loadings, factor " + std::to_string(k + 1)));
        manifest.output(out_dir + "/loadings_k" + std::to_string(k + 1) + ".svg");
    }

    manifest.write(out_dir);
    return 0;
}

int cmd_crossfit(const std::string& tensor_path, const std::string& cov_path,
                 const std::string& kinds_path, const std::string& fit_dir,
                 const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
    Json cfg = load_config(config_path);
    CrossfitConfig cc;
    cc.M = cfg.value("M", 5);
    cc.refit_max_iters = cfg.value("refit_max_iters", 50);
    cc.seed = cfg.value("seed", static_cast<std::uint64_t>(0));
    if (seed) cc.seed = *seed;
    ensure_dir(out_dir);

    ManifestBuilder manifest("crossfit", cc.seed);
    manifest.config_hash(cfg);
    manifest.input(tensor_path);
    manifest.input(fit_dir + "/params.json");

    TensorData data = read_tensor_csv(tensor_path);
    CovariateMatrix Z;
    if (!cov_path.empty()) {
        manifest.input(cov_path);
        manifest.input(kinds_path);
        Z = read_covariates_csv(cov_path, kinds_path, data.subject_ids);
    }
    SpacoFit full;
    full.params = params_from_json(Json::parse(read_file(fit_dir + "/params.json")));
    full.posterior = posterior_moments(full.params, data.X, Z);

    const CrossfitResult cf = crossfit_posterior(data.X, Z, full, cc);
    write_file(out_dir + "/crossfit.json", crossfit_to_json(cf).dump(2) + "\n");
    manifest.output(out_dir + "/crossfit.json");
    write_posterior_csv(out_dir + "/mu_tilde.csv", cf.mu_tilde, data.subject_ids);
    manifest.output(out_dir + "/mu_tilde.csv");

    manifest.write(out_dir);
    return 0;
}

int cmd_test(const std::string& tensor_path, const std::string& cov_path,
             const std::string& kinds_path, const std::string& fit_dir,
             const std::string& crossfit_path, const std::string& config_path,
             const std::string& out_dir, std::optional<std::uint64_t> seed,
             const std::string& mode_flag) {
    Json cfg = load_config(config_path);
    TestConfig tc = test_config_from_json(cfg);
    if (seed) tc.seed = *seed;
    ensure_dir(out_dir);

    ManifestBuilder manifest("test", tc.seed);
    manifest.config_hash(cfg);
    manifest.input(tensor_path);

    TensorData data = read_tensor_csv(tensor_path);
    if (cov_path.empty()) {
        std::cout << "nothing to test: no covariates supplied\n";
        manifest.write(out_dir);
        return 0;
    }
    manifest.input(cov_path);
    manifest.input(kinds_path);
    CovariateMatrix Z = read_covariates_csv(cov_path, kinds_path, data.subject_ids);

    SpacoFit full;
    full.params = params_from_json(Json::parse(read_file(fit_dir + "/params.json")));
    full.posterior = posterior_moments(full.params, data.X, Z);
    manifest.input(fit_dir + "/params.json");

    CrossfitResult cf;
    if (!crossfit_path.empty() && fs::exists(crossfit_path)) {
        manifest.input(crossfit_path);
        cf = crossfit_from_json(Json::parse(read_file(crossfit_path)));
    } else {
        CrossfitConfig cc;
        cc.seed = derive_seed(tc.seed, 0xcf);
        cf = crossfit_posterior(data.X, Z, full, cc);
    }

    const std::string mode = mode_flag.empty() ? cfg.value("mode", "both") : mode_flag;
    const bool both = mode == "both";
    if (!both) tc.mode = mode == "marginal" ? TestMode::marginal : TestMode::partial;
    const TestResult tests = run_tests(data.X, Z, full, cf, tc, both);

    std::vector<std::string> names = Z.names;
    if (names.empty()) names = default_ids("z", Z.count());
    write_test_result_csv(out_dir + "/pvalues.csv", tests, names);
    manifest.output(out_dir + "/pvalues.csv");
    write_file(out_dir + "/pvalues.json", test_result_to_json(tests, names).dump(2) + "\n");
    manifest.output(out_dir + "/pvalues.json");

    if (both || tc.mode == TestMode::partial) {
        write_file(out_dir + "/manhattan_partial.svg",
                   svg_manhattan(tests.pvalues_partial, names, "partial association"));
        manifest.output(out_dir + "/manhattan_partial.svg");
    }
    if (both || tc.mode == TestMode::marginal) {
        write_file(out_dir + "/manhattan_marginal.svg",
                   svg_manhattan(tests.pvalues_marginal, names, "marginal association"));
        manifest.output(out_dir + "/manhattan_marginal.svg");
    }

    manifest.write(out_dir);
    return 0;
}

int cmd_bench(int table_id, int scale, std::uint64_t seed, const std::string& out_dir,
              const Json& overrides) {
    ensure_dir(out_dir);
    BenchConfig bc;
    bc.scale = scale;
    bc.seed = seed;
    bc.I = overrides.value("I", bc.I);
    bc.T = overrides.value("T", bc.T);
    bc.J_small = overrides.value("J_small", bc.J_small);
    bc.J_large = overrides.value("J_large", bc.J_large);
    bc.q = overrides.value("q", bc.q);
    bc.fit_max_iters = overrides.value("fit_max_iters", bc.fit_max_iters);
    bc.test_B = overrides.value("test_B", bc.test_B);
    bc.crossfit_M = overrides.value("crossfit_M", bc.crossfit_M);

    ManifestBuilder manifest("bench", seed);
    Json cfg = overrides;
    cfg["table"] = table_id;
    cfg["scale"] = scale;
    manifest.config_hash(cfg);

    const BenchResult result = run_table(table_id, bc);
    const std::string csv = out_dir + "/table" + std::to_string(table_id) + ".csv";
    write_bench_csv(csv, result);
    manifest.output(csv);
    manifest.write(out_dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SPACO: smoothed probabilistic PARAFAC with covariates"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware)");

    std::string config_path, out_dir = ".";
    std::uint64_t seed_value = 0;
    bool seed_given = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_value, "root seed")->each([&](const std::string&) {
            seed_given = true;
        });
    };

    auto* sim = app.add_subcommand("simulate", "generate benchmark data");
    add_common(sim);

    std::string tensor_path, cov_path, kinds_path, fit_dir = ".", crossfit_path, mode_flag;
    auto* fitc = app.add_subcommand("fit", "initialize and fit the model");
    add_common(fitc);
    fitc->add_option("--tensor", tensor_path, "long-format tensor csv")->required();
    fitc->add_option("--covariates", cov_path, "covariates csv");
    fitc->add_option("--kinds", kinds_path, "covariate kinds json");

    auto* cfc = app.add_subcommand("crossfit", "fold-held-out refits and shrinkage");
    add_common(cfc);
    cfc->add_option("--tensor", tensor_path, "long-format tensor csv")->required();
    cfc->add_option("--covariates", cov_path, "covariates csv");
    cfc->add_option("--kinds", kinds_path, "covariate kinds json");
    cfc->add_option("--fit-dir", fit_dir, "directory holding params.json")->required();

    auto* testc = app.add_subcommand("test", "randomization tests for covariates");
    add_common(testc);
    testc->add_option("--tensor", tensor_path, "long-format tensor csv")->required();
    testc->add_option("--covariates", cov_path, "covariates csv");
    testc->add_option("--kinds", kinds_path, "covariate kinds json");
    testc->add_option("--fit-dir", fit_dir, "directory holding params.json")->required();
    testc->add_option("--crossfit", crossfit_path, "crossfit.json (built on demand if absent)");
    testc->add_option("--mode", mode_flag, "partial | marginal | both");

    int table_id = 2, scale = 5;
    auto* benchc = app.add_subcommand("bench", "reproduce the published tables at desk scale");
    add_common(benchc);
    benchc->add_option("--table", table_id, "table id (2..5)")->required();
    benchc->add_option("--scale", scale, "repetitions per scenario");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    set_num_threads(threads);
    const std::optional<std::uint64_t> seed =
        seed_given ? std::optional<std::uint64_t>(seed_value) : std::nullopt;

    try {
        if (sim->parsed()) return cmd_simulate(config_path, out_dir, seed);
        if (fitc->parsed())
            return cmd_fit(tensor_path, cov_path, kinds_path, config_path, out_dir, seed);
        if (cfc->parsed())
            return cmd_crossfit(tensor_path, cov_path, kinds_path, fit_dir, config_path,
                                out_dir, seed);
        if (testc->parsed())
            return cmd_test(tensor_path, cov_path, kinds_path, fit_dir, crossfit_path,
                            config_path, out_dir, seed, mode_flag);
        if (benchc->parsed()) {
            if (table_id < 2 || table_id > 5) {
                std::cerr << "error: invalid table id " << table_id << " (expected 2..5)\n";
                return 2;
            }
            return cmd_bench(table_id, scale, seed.value_or(0), out_dir,
                             load_config(config_path));
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
