#include "spaco/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "spaco/init.hpp"
#include "spaco/parallel.hpp"
#include "spaco/rng.hpp"

namespace spaco {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Trajectory scale: theta_k ~ c1 * N(0, v) with
//   sd = c1 * (log J + log T) / sqrt(I T gamma),
// i.e. the (log J + log T) factor enters the standard deviation.  Reading it
// as a variance factor (with n = I) produces raw-data and reconstruction
// correlations far below the published tables across every (J, gamma) cell;
// this scaling reproduces them.
double theta_sd(const ScenarioConfig& c) {
    const double num = std::log(static_cast<double>(c.J)) + std::log(static_cast<double>(c.T));
    return c.c1 * num / std::sqrt(static_cast<double>(c.I) * c.T * c.gamma);
}

struct Welford {
    double mean = 0.0, m2 = 0.0;
    int n = 0;
    void add(double x) {
        if (!std::isfinite(x)) return;
        ++n;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    double se() const { return n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0; }
    double value() const { return n > 0 ? mean : kNaN; }
};

}  // namespace

SimData generate(const ScenarioConfig& config, std::uint64_t rep_seed) {
    if (config.K != 3)
        throw std::invalid_argument("generate: the benchmark model is defined for K = 3");
    if (!(config.gamma > 0.0 && config.gamma <= 1.0))
        throw std::invalid_argument("generate: gamma must lie in (0, 1]");
    const int I = config.I, T = config.T, J = config.J, q = config.q, K = config.K;

    std::vector<double> grid_pts(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) grid_pts[static_cast<size_t>(t)] = t + 1.0;
    SimData sim(LongitudinalTensor(I, T, J, TimeGrid(grid_pts)));

    std::normal_distribution<double> gauss(0.0, 1.0);

    // trajectory scales and curves on t = 1..T
    auto theta_rng = make_rng(rep_seed, 1);
    sim.theta.resize(K);
    const double sd = theta_sd(config);
    for (int k = 0; k < K; ++k) sim.theta[k] = sd * gauss(theta_rng);

    // shapes carry unit root-mean-square over the grid so every factor has
    // per-cell signal power theta_k^2
    Matrix Phi(T, K);
    for (int t = 0; t < T; ++t) {
        const double x = (t + 1.0) / T;
        Phi(t, 0) = 1.0;
        Phi(t, 1) = std::sqrt(std::max(0.0, 1.0 - x * x));
        Phi(t, 2) = std::cos(4.0 * M_PI * x);
    }
    for (int k = 0; k < K; ++k) {
        const double rms = std::sqrt(Phi.col(k).squaredNorm() / T);
        Phi.col(k) *= sim.theta[k] / rms;
    }

    auto v_rng = make_rng(rep_seed, 2);
    Matrix V(J, K);
    for (int j = 0; j < J; ++j)
        for (int k = 0; k < K; ++k) V(j, k) = gauss(v_rng) / std::sqrt(static_cast<double>(J));

    auto z_rng = make_rng(rep_seed, 3);
    Matrix Zmat(I, q);
    for (int i = 0; i < I; ++i)
        for (int l = 0; l < q; ++l) Zmat(i, l) = gauss(z_rng);
    sim.Z = CovariateMatrix(Zmat, std::vector<ColumnKind>(static_cast<size_t>(q),
                                                          ColumnKind::gaussian));

    auto beta_rng = make_rng(rep_seed, 4);
    sim.beta_true = Matrix::Zero(q, K);
    const double beta_sd = std::sqrt(std::log(static_cast<double>(q)) / I);
    for (int l = 0; l < 3 && l < q; ++l)
        for (int k = 0; k < K; ++k) sim.beta_true(l, k) = config.c2 * beta_sd * gauss(beta_rng);

    // scores: N(Z beta, 1), then each column standardized to mean 0, var 1
    auto u_rng = make_rng(rep_seed, 5);
    sim.U_true.resize(I, K);
    for (int i = 0; i < I; ++i)
        for (int k = 0; k < K; ++k)
            sim.U_true(i, k) = Zmat.row(i).dot(sim.beta_true.col(k)) + gauss(u_rng);
    for (int k = 0; k < K; ++k) {
        const double m = sim.U_true.col(k).mean();
        sim.U_true.col(k).array() -= m;
        const double v = sim.U_true.col(k).squaredNorm() / I;
        if (v > 0) sim.U_true.col(k) /= std::sqrt(v);
    }

    sim.F = DenseTensor(I, T, J);
    for (int i = 0; i < I; ++i)
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < J; ++j) {
                double f = 0.0;
                for (int k = 0; k < K; ++k) f += sim.U_true(i, k) * Phi(t, k) * V(j, k);
                sim.F.at(i, t, j) = f;
            }

    // observation mask: keep each time point with probability gamma, redraw
    // subjects left with none
    auto mask_rng = make_rng(rep_seed, 6);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < I; ++i) {
        bool any = false;
        for (int attempt = 0; !any; ++attempt) {
            if (attempt > 0) ++sim.resampled;
            for (int t = 0; t < T; ++t) {
                const bool keep = unif(mask_rng) < config.gamma;
                sim.X.set_observed(i, t, keep);
                any |= keep;
            }
        }
    }
    sim.X.refresh_mask_index();

    auto noise_rng = make_rng(rep_seed, 7);
    for (int i = 0; i < I; ++i)
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < J; ++j)
                sim.X.at(i, t, j) = sim.F.at(i, t, j) + gauss(noise_rng);

    return sim;
}

double score_reconstruction(const DenseTensor& Fhat, const DenseTensor& F) {
    if (Fhat.values.size() != F.values.size())
        throw std::invalid_argument("score_reconstruction: shape mismatch");
    const size_t n = F.values.size();
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += Fhat.values[i];
        mb += F.values[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double a = Fhat.values[i] - ma;
        const double b = F.values[i] - mb;
        sab += a * b;
        saa += a * a;
        sbb += b * b;
    }
    if (saa <= 0.0 || sbb <= 0.0) return kNaN;
    return sab / std::sqrt(saa * sbb);
}

double score_mse(const DenseTensor& Fhat, const DenseTensor& F) {
    if (Fhat.values.size() != F.values.size())
        throw std::invalid_argument("score_mse: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < F.values.size(); ++i) {
        const double d = Fhat.values[i] - F.values[i];
        s += d * d;
    }
    return s / static_cast<double>(F.values.size());
}

double score_reconstruction_masked(const DenseTensor& Fhat, const DenseTensor& F,
                                   const LongitudinalTensor& mask_src) {
    double ma = 0.0, mb = 0.0;
    long n = 0;
    for (int i = 0; i < mask_src.subjects(); ++i)
        for (int t : mask_src.observed_times(i))
            for (int j = 0; j < mask_src.features(); ++j) {
                ma += Fhat.at(i, t, j);
                mb += F.at(i, t, j);
                ++n;
            }
    if (n == 0) return kNaN;
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int i = 0; i < mask_src.subjects(); ++i)
        for (int t : mask_src.observed_times(i))
            for (int j = 0; j < mask_src.features(); ++j) {
                const double a = Fhat.at(i, t, j) - ma;
                const double b = F.at(i, t, j) - mb;
                sab += a * b;
                saa += a * a;
                sbb += b * b;
            }
    if (saa <= 0.0 || sbb <= 0.0) return kNaN;
    return sab / std::sqrt(saa * sbb);
}

SpacoFit fit_scenario(const LongitudinalTensor& X, const CovariateMatrix& Z,
                      int K, std::uint64_t seed, int max_outer_iters) {
    InitConfig icfg;
    icfg.K = K;
    icfg.seed = seed;
    const InitResult init = initialize(X, Z.empty() ? 0 : Z.count(), icfg);

    FitConfig fcfg;
    fcfg.K = K;
    fcfg.max_outer_iters = max_outer_iters;
    fcfg.seed = seed;
    return fit(X, Z, fcfg, init.params);
}

BenchResult run_table(int table_id, const BenchConfig& config) {
    if (table_id < 2 || table_id > 5)
        throw std::invalid_argument("run_table: table_id must be 2..5");

    const std::vector<double> c1_values = table_id <= 3 ? std::vector<double>{1, 3, 5}
                                                        : std::vector<double>{1, 3};
    const std::vector<int> J_values = {config.J_small, config.J_large};
    const std::vector<double> gammas = {1.0, 0.5, 0.1};
    const std::vector<double> c2_values = table_id <= 3 ? std::vector<double>{0, 3, 10}
                                                        : std::vector<double>{0, 10};

    BenchResult result;
    result.table_id = table_id;

    auto gamma_label = [](double g) {
        if (g == 1.0) return std::string("r1");
        if (g == 0.5) return std::string("r.5");
        return std::string("r.1");
    };

    if (table_id == 2 || table_id == 3) {
        const std::vector<std::string> methods =
            table_id == 2 ? std::vector<std::string>{"raw", "SPACO-", "SPACO"}
                          : std::vector<std::string>{"spaco0", "spaco"};
        for (double c1 : c1_values)
            for (int J : J_values)
                for (const auto& m : methods)
                    result.row_labels.push_back("SNR" + std::to_string(static_cast<int>(c1)) +
                                                "J" + std::to_string(J) + "/" + m);
        for (double g : gammas)
            for (double c2 : c2_values)
                result.col_labels.push_back(gamma_label(g) + "SNR" +
                                            std::to_string(static_cast<int>(c2)));

        const int n_rows = static_cast<int>(result.row_labels.size());
        const int n_cols = static_cast<int>(result.col_labels.size());
        std::vector<Welford> acc(static_cast<size_t>(n_rows) * n_cols);
        const int n_methods = static_cast<int>(methods.size());

        int setting = 0;
        for (size_t ic1 = 0; ic1 < c1_values.size(); ++ic1) {
            for (size_t iJ = 0; iJ < J_values.size(); ++iJ, ++setting) {
                int col = 0;
                for (double g : gammas) {
                    for (double c2 : c2_values) {
                        for (int rep = 0; rep < config.scale; ++rep) {
                            ScenarioConfig sc;
                            sc.I = config.I;
                            sc.T = config.T;
                            sc.J = J_values[iJ];
                            sc.q = config.q;
                            sc.gamma = g;
                            sc.c1 = c1_values[ic1];
                            sc.c2 = c2;
                            const std::uint64_t rs = derive_seed(
                                config.seed, static_cast<std::uint64_t>(table_id),
                                static_cast<std::uint64_t>(setting * 100 + col),
                                static_cast<std::uint64_t>(rep));
                            const SimData sim = generate(sc, rs);
                            const CovariateMatrix no_z;

                            const SpacoFit f0 = fit_scenario(sim.X, no_z, 3, rs,
                                                             config.fit_max_iters);
                            const SpacoFit f1 = fit_scenario(sim.X, sim.Z, 3,
                                                             derive_seed(rs, 11),
                                                             config.fit_max_iters);
                            const Vector ones = Vector::Ones(3);

                            auto cell = [&](int method_idx) -> Welford& {
                                const int row = setting * n_methods + method_idx;
                                return acc[static_cast<size_t>(row) * n_cols + col];
                            };
                            if (table_id == 2) {
                                DenseTensor raw(sc.I, sc.T, sc.J);
                                for (int i = 0; i < sc.I; ++i)
                                    for (int t = 0; t < sc.T; ++t)
                                        for (int j = 0; j < sc.J; ++j)
                                            raw.at(i, t, j) = sim.X.at(i, t, j);
                                cell(0).add(score_reconstruction_masked(raw, sim.F, sim.X));
                                cell(1).add(score_reconstruction(
                                    reconstruct(f0.params, f0.posterior.mu, ones), sim.F));
                                cell(2).add(score_reconstruction(
                                    reconstruct(f1.params, f1.posterior.mu, ones), sim.F));
                            } else {
                                CrossfitConfig cc;
                                cc.M = config.crossfit_M;
                                cc.seed = derive_seed(rs, 21);
                                const CrossfitResult cf0 =
                                    crossfit_posterior(sim.X, no_z, f0, cc);
                                const CrossfitResult cf1 =
                                    crossfit_posterior(sim.X, sim.Z, f1, cc);
                                const double mse0 = score_mse(
                                    reconstruct(f0.params, f0.posterior.mu, ones), sim.F);
                                const double mse0c = score_mse(
                                    reconstruct(f0.params, f0.posterior.mu, cf0.shrinkage),
                                    sim.F);
                                const double mse1 = score_mse(
                                    reconstruct(f1.params, f1.posterior.mu, ones), sim.F);
                                const double mse1c = score_mse(
                                    reconstruct(f1.params, f1.posterior.mu, cf1.shrinkage),
                                    sim.F);
                                cell(0).add(mse0 > 0 ? mse0c / mse0 : kNaN);
                                cell(1).add(mse1 > 0 ? mse1c / mse1 : kNaN);
                            }
                        }
                        ++col;
                    }
                }
            }
        }
        result.mean = Matrix::Constant(n_rows, n_cols, kNaN);
        result.se = Matrix::Constant(n_rows, n_cols, kNaN);
        for (int r = 0; r < n_rows; ++r)
            for (int c = 0; c < n_cols; ++c) {
                result.mean(r, c) = acc[static_cast<size_t>(r) * n_cols + c].value();
                result.se(r, c) = acc[static_cast<size_t>(r) * n_cols + c].se();
            }
        return result;
    }

    // Tables 4 and 5: type-I error and power at alpha in {0.01, 0.05} for the
    // covariate and no-covariate models
    const TestMode mode = table_id == 4 ? TestMode::partial : TestMode::marginal;
    for (double c1 : c1_values)
        for (int J : J_values)
            for (double c2 : c2_values)
                for (double g : gammas)
                    result.row_labels.push_back(
                        "SNR" + std::to_string(static_cast<int>(c1)) + "J" + std::to_string(J) +
                        "/SNR" + std::to_string(static_cast<int>(c2)) + gamma_label(g));
    result.col_labels = {"a01.SPACO.typeI",  "a01.SPACO.power",  "a01.SPACO-.typeI",
                         "a01.SPACO-.power", "a05.SPACO.typeI",  "a05.SPACO.power",
                         "a05.SPACO-.typeI", "a05.SPACO-.power"};
    const int n_rows = static_cast<int>(result.row_labels.size());
    const int n_cols = 8;
    std::vector<Welford> acc(static_cast<size_t>(n_rows) * n_cols);

    int row = 0;
    for (double c1 : c1_values) {
        for (int J : J_values) {
            for (double c2 : c2_values) {
                for (double g : gammas) {
                    for (int rep = 0; rep < config.scale; ++rep) {
                        ScenarioConfig sc;
                        sc.I = config.I;
                        sc.T = config.T;
                        sc.J = J;
                        sc.q = config.q;
                        sc.gamma = g;
                        sc.c1 = c1;
                        sc.c2 = c2;
                        const std::uint64_t rs =
                            derive_seed(config.seed, static_cast<std::uint64_t>(table_id),
                                        static_cast<std::uint64_t>(row),
                                        static_cast<std::uint64_t>(rep));
                        const SimData sim = generate(sc, rs);
                        const CovariateMatrix no_z;

                        for (int method = 0; method < 2; ++method) {
                            const bool with_z = method == 0;
                            const SpacoFit f = fit_scenario(
                                sim.X, with_z ? sim.Z : no_z, 3,
                                derive_seed(rs, with_z ? 11 : 12), config.fit_max_iters);
                            CrossfitConfig cc;
                            cc.M = config.crossfit_M;
                            cc.seed = derive_seed(rs, 21 + method);
                            const CrossfitResult cf = crossfit_posterior(
                                sim.X, with_z ? sim.Z : no_z, f, cc);
                            TestConfig tc;
                            tc.mode = mode;
                            tc.B = config.test_B;
                            tc.seed = derive_seed(rs, 31 + method);
                            const TestResult tests =
                                run_tests(sim.X, sim.Z, f, cf, tc, false);
                            const Matrix& pv = mode == TestMode::partial
                                                   ? tests.pvalues_partial
                                                   : tests.pvalues_marginal;

                            for (int ia = 0; ia < 2; ++ia) {
                                const double alpha = ia == 0 ? 0.01 : 0.05;
                                double rej_null = 0, n_null = 0, rej_alt = 0, n_alt = 0;
                                for (int j = 0; j < sc.q; ++j)
                                    for (int k = 0; k < 3; ++k) {
                                        const double p = pv(j, k);
                                        if (!std::isfinite(p)) continue;
                                        const bool is_null = c2 == 0 || j >= 3;
                                        if (is_null) {
                                            n_null += 1;
                                            rej_null += p <= alpha ? 1 : 0;
                                        } else {
                                            n_alt += 1;
                                            rej_alt += p <= alpha ? 1 : 0;
                                        }
                                    }
                                const int base = ia * 4 + method * 2;
                                if (n_null > 0)
                                    acc[static_cast<size_t>(row) * n_cols + base].add(
                                        rej_null / n_null);
                                if (n_alt > 0)
                                    acc[static_cast<size_t>(row) * n_cols + base + 1].add(
                                        rej_alt / n_alt);
                            }
                        }
                    }
                    ++row;
                }
            }
        }
    }
    result.mean = Matrix::Constant(n_rows, n_cols, kNaN);
    result.se = Matrix::Constant(n_rows, n_cols, kNaN);
    for (int r = 0; r < n_rows; ++r)
        for (int c = 0; c < n_cols; ++c) {
            result.mean(r, c) = acc[static_cast<size_t>(r) * n_cols + c].value();
            result.se(r, c) = acc[static_cast<size_t>(r) * n_cols + c].se();
        }
    return result;
}

}  // namespace spaco
