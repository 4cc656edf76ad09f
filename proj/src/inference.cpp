#include "spaco/inference.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "spaco/lasso.hpp"
#include "spaco/parallel.hpp"
#include "spaco/rng.hpp"

namespace spaco {

namespace {

constexpr int kLargeQ = 20;  // above this the null samplers switch to lasso

// hx_i = (V . Phi)_i' Lam_i X_{I,i} for one subject under arbitrary V/Phi/sigma2.
Vector subject_hx(const LongitudinalTensor& X, int i, const Matrix& V,
                  const Matrix& Phi, const Vector& sigma2) {
    Vector h = Vector::Zero(V.cols());
    const Matrix Vw = V.array().colwise() / sigma2.array();
    for (int t : X.observed_times(i))
        h += Phi.row(t).transpose().cwiseProduct(Vw.transpose() * X.slice(i, t));
    return h;
}

// Information matrix (V . Phi)_i' Lam_i (V . Phi)_i for one subject.
Matrix subject_gram(const LongitudinalTensor& X, int i, const Matrix& V,
                    const Matrix& Phi, const Vector& sigma2) {
    const int K = static_cast<int>(V.cols());
    const Matrix Vw = V.array().colwise() / sigma2.array();
    const Matrix SV = V.transpose() * Vw;
    Matrix G = Matrix::Zero(K, K);
    for (int t : X.observed_times(i)) {
        const Vector phi_t = Phi.row(t).transpose();
        G += SV.cwiseProduct(phi_t * phi_t.transpose());
    }
    return G;
}

}  // namespace

namespace {

// Restore the factor correspondence between a fold refit and the full fit:
// greedy match on |<V_k, V_l>| * |<Phi_k, Phi_l>|, then model-invariant sign
// flips so both inner products come out nonnegative.  Without this the
// shrinkage inner products <mu~_k, mu_k> compare unrelated (or silently
// sign-flipped) factors whenever the refit reorders near-tied columns.
void align_factors(SpacoParams& fold, const SpacoParams& full) {
    const int K = full.n_factors();
    const double T = static_cast<double>(full.n_times());
    std::vector<int> assigned(static_cast<size_t>(K), -1);
    std::vector<uint8_t> used(static_cast<size_t>(K), 0);
    for (int pass = 0; pass < K; ++pass) {
        double best = -1.0;
        int bk = -1, bl = -1;
        for (int k = 0; k < K; ++k) {
            if (assigned[static_cast<size_t>(k)] >= 0) continue;
            for (int l = 0; l < K; ++l) {
                if (used[static_cast<size_t>(l)]) continue;
                const double sv = full.V.col(k).dot(fold.V.col(l));
                const double sp = full.Phi.col(k).dot(fold.Phi.col(l)) / T;
                const double score = std::abs(sv) * std::abs(sp);
                if (score > best) {
                    best = score;
                    bk = k;
                    bl = l;
                }
            }
        }
        assigned[static_cast<size_t>(bk)] = bl;
        used[static_cast<size_t>(bl)] = 1;
    }

    SpacoParams out = fold;
    for (int k = 0; k < K; ++k) {
        const int l = assigned[static_cast<size_t>(k)];
        out.V.col(k) = fold.V.col(l);
        out.Phi.col(k) = fold.Phi.col(l);
        if (fold.beta.size() > 0) out.beta.col(k) = fold.beta.col(l);
        out.s2[k] = fold.s2[l];
        out.lambda1[k] = fold.lambda1[l];
        out.lambda2[k] = fold.lambda2[l];
        const bool flip_v = full.V.col(k).dot(out.V.col(k)) < 0;
        const bool flip_p = full.Phi.col(k).dot(out.Phi.col(k)) < 0;
        if (flip_v && flip_p) {
            out.V.col(k) = -out.V.col(k);
            out.Phi.col(k) = -out.Phi.col(k);
        } else if (flip_v) {
            out.V.col(k) = -out.V.col(k);
            if (out.beta.size() > 0) out.beta.col(k) = -out.beta.col(k);
        } else if (flip_p) {
            out.Phi.col(k) = -out.Phi.col(k);
            if (out.beta.size() > 0) out.beta.col(k) = -out.beta.col(k);
        }
    }
    fold = std::move(out);
}

}  // namespace

CrossfitPlan make_crossfit_plan(int n_subjects, int M, std::uint64_t seed) {
    if (M < 2 || M > n_subjects)
        throw std::invalid_argument("make_crossfit_plan: need 2 <= M <= subjects");
    CrossfitPlan plan;
    plan.M = M;
    plan.seed = seed;
    std::vector<int> idx(static_cast<size_t>(n_subjects));
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(seed, 0xcf01);
    std::shuffle(idx.begin(), idx.end(), rng);
    plan.fold_of.assign(static_cast<size_t>(n_subjects), 0);
    for (int r = 0; r < n_subjects; ++r) plan.fold_of[static_cast<size_t>(idx[static_cast<size_t>(r)])] = r % M;
    return plan;
}

CrossfitResult crossfit_posterior(const LongitudinalTensor& X, const CovariateMatrix& Z,
                                  const SpacoFit& full, const CrossfitConfig& config) {
    const int I = X.subjects();
    const int K = full.params.n_factors();
    const bool has_z = !Z.empty();

    CrossfitResult out;
    out.plan = make_crossfit_plan(I, config.M, config.seed);
    out.fold_params.assign(static_cast<size_t>(config.M), full.params);
    out.mu_tilde = Matrix::Zero(I, K);

    std::vector<std::vector<int>> fold_members(static_cast<size_t>(config.M));
    for (int i = 0; i < I; ++i)
        fold_members[static_cast<size_t>(out.plan.fold_of[static_cast<size_t>(i)])].push_back(i);

    // fold refits, warm-started from the full fit with frozen penalties
    for (int m = 0; m < config.M; ++m) {
        std::vector<int> train;
        for (int i = 0; i < I; ++i)
            if (out.plan.fold_of[static_cast<size_t>(i)] != m) train.push_back(i);
        const LongitudinalTensor Xtr = X.subset_subjects(train);
        const CovariateMatrix Ztr = has_z ? Z.subset_subjects(train) : CovariateMatrix();

        FitConfig cfg;
        cfg.K = K;
        cfg.max_outer_iters = config.refit_max_iters;
        cfg.lambda1_mode = TuneMode::fixed;
        cfg.lambda2_mode = TuneMode::fixed;
        cfg.seed = derive_seed(config.seed, 0xcf17, m);
        try {
            SpacoFit refit = fit(Xtr, Ztr, cfg, full.params);
            align_factors(refit.params, full.params);
            out.fold_params[static_cast<size_t>(m)] = refit.params;
        } catch (const std::exception& e) {
            out.warnings.push_back("crossfit_posterior: fold " + std::to_string(m) +
                                   " refit failed (" + e.what() + "), using full-fit params");
        }
    }

    // cross-fitted beta: the beta_k lasso with hx built from the fold-held-out
    // V/Phi of each subject (full-fit posterior covariances and variances)
    if (has_z) {
        Matrix hx_cf(I, K);
        for (int i = 0; i < I; ++i) {
            const SpacoParams& pm =
                out.fold_params[static_cast<size_t>(out.plan.fold_of[static_cast<size_t>(i)])];
            hx_cf.row(i) =
                subject_hx(X, i, pm.V, pm.Phi, full.params.sigma2).transpose();
        }
        out.beta_crossfit = full.params.beta;
        const Vector inv_s2 = full.params.s2.cwiseInverse();
        for (int k = 0; k < K; ++k) {
            const double sk2 = full.params.s2[k];
            Matrix Zt(I, Z.count());
            Vector yt(I);
            for (int i = 0; i < I; ++i) {
                const Matrix& Sig = full.posterior.Sigma[static_cast<size_t>(i)];
                const double w = std::max(sk2 - Sig(k, k), 1e-12);
                const double sw = std::sqrt(w);
                Zt.row(i) = (sw / sk2) * Z.Z.row(i);
                const Vector b = out.beta_crossfit.transpose() * Z.Z.row(i).transpose();
                const double cross =
                    Sig.row(k).dot(inv_s2.cwiseProduct(b)) - Sig(k, k) * b[k] / sk2;
                yt[i] = (Sig.row(k).dot(hx_cf.row(i).transpose()) + cross) / sw;
            }
            out.beta_crossfit.col(k) =
                lasso_cd(Zt, yt, full.params.lambda2[k], out.beta_crossfit.col(k));
        }
    }

    // held-out posterior means
    for (int m = 0; m < config.M; ++m) {
        const auto& members = fold_members[static_cast<size_t>(m)];
        if (members.empty()) continue;
        SpacoParams pm = out.fold_params[static_cast<size_t>(m)];
        CovariateMatrix Zm;
        if (has_z) {
            pm.beta = out.beta_crossfit;
            Zm = Z.subset_subjects(members);
        }
        const LongitudinalTensor Xm = X.subset_subjects(members);
        const PosteriorMoments post = posterior_moments(pm, Xm, Zm);
        for (size_t r = 0; r < members.size(); ++r)
            out.mu_tilde.row(members[r]) = post.mu.row(static_cast<long>(r));
    }

    out.shrinkage = shrinkage_factors(full.posterior.mu, out.mu_tilde).c;
    return out;
}

ShrinkageFactors shrinkage_factors(const Matrix& mu, const Matrix& mu_tilde) {
    if (mu.rows() != mu_tilde.rows() || mu.cols() != mu_tilde.cols())
        throw std::invalid_argument("shrinkage_factors: shape mismatch");
    ShrinkageFactors out;
    out.c = Vector::Zero(mu.cols());
    for (int k = 0; k < mu.cols(); ++k) {
        const double n_full = mu.col(k).norm();
        const double n_cf = mu_tilde.col(k).norm();
        if (n_full <= 0 || n_cf <= 0) {
            out.c[k] = 0.0;
            continue;
        }
        const double cosine = mu_tilde.col(k).dot(mu.col(k)) / (n_cf * n_full);
        out.c[k] = std::clamp((n_cf / n_full) * std::max(cosine, 0.0), 0.0, 1.0);
    }
    return out;
}

DenseTensor reconstruct(const SpacoParams& params, const Matrix& mu, const Vector& c) {
    const int I = static_cast<int>(mu.rows());
    const int T = params.n_times();
    const int J = params.n_features();
    const int K = params.n_factors();
    DenseTensor F(I, T, J);
    for (int i = 0; i < I; ++i)
        for (int t = 0; t < T; ++t) {
            double* row = &F.at(i, t, 0);
            for (int k = 0; k < K; ++k) {
                const double s = c[k] * mu(i, k) * params.Phi(t, k);
                for (int j = 0; j < J; ++j) row[j] += s * params.V(j, k);
            }
        }
    return F;
}

TestResponses build_test_response(int k, const SpacoParams& params,
                                  const LongitudinalTensor& X, const CovariateMatrix& Z,
                                  const Matrix& betas_other, double delta) {
    if (delta < 0.0 || delta > 1.0)
        throw std::invalid_argument("build_test_response: delta must lie in [0,1]");
    const int I = X.subjects();
    const int K = params.n_factors();
    const int q = Z.empty() ? 0 : Z.count();
    const Vector inv_s2 = params.s2.cwiseInverse();

    TestResponses resp;
    resp.ytilde = Vector::Zero(I);
    resp.w = Vector::Zero(I);
    resp.ztilde = Matrix::Zero(I, q);
    resp.included.assign(static_cast<size_t>(I), 0);

    for (int i = 0; i < I; ++i) {
        const Matrix G = subject_gram(X, i, params.V, params.Phi, params.sigma2);
        Matrix M = G;
        M.diagonal() += delta * inv_s2;
        Eigen::SelfAdjointEigenSolver<Matrix> es(M);
        const double emax = es.eigenvalues().maxCoeff();
        const double emin = es.eigenvalues().minCoeff();
        if (!(emin > std::max(1e-12, 1e-10 * emax))) {
            resp.n_excluded += 1;
            continue;  // singular information at delta = 0: subject excluded
        }
        const Matrix Sigma = es.eigenvectors() *
                             es.eigenvalues().cwiseInverse().asDiagonal() *
                             es.eigenvectors().transpose();
        const Vector hx = subject_hx(X, i, params.V, params.Phi, params.sigma2);
        double y = Sigma.row(k).dot(hx);
        if (delta > 0 && q > 0 && betas_other.size() > 0) {
            const Vector b = betas_other.transpose() * Z.Z.row(i).transpose();
            for (int l = 0; l < K; ++l) {
                if (l == k) continue;
                y += delta * Sigma(k, l) / params.s2[l] * b[l];
            }
        }
        resp.ytilde[i] = y;
        resp.w[i] = params.s2[k] + (1.0 - 2.0 * delta) * Sigma(k, k) +
                    (delta * delta - delta) *
                        Sigma.row(k).dot(inv_s2.cwiseProduct(Sigma.col(k)));
        if (q > 0)
            resp.ztilde.row(i) = (1.0 - delta * Sigma(k, k) / params.s2[k]) * Z.Z.row(i);
        resp.included[static_cast<size_t>(i)] = 1;
    }
    return resp;
}

TestResponses build_crossfit_test_response(int k, const CrossfitResult& cf,
                                           const LongitudinalTensor& X,
                                           const CovariateMatrix& Z) {
    const int I = X.subjects();
    const int q = Z.empty() ? 0 : Z.count();
    TestResponses resp;
    resp.ytilde = Vector::Zero(I);
    resp.w = Vector::Zero(I);
    resp.ztilde = Matrix::Zero(I, q);
    resp.included.assign(static_cast<size_t>(I), 0);

    for (int i = 0; i < I; ++i) {
        const SpacoParams& pm =
            cf.fold_params[static_cast<size_t>(cf.plan.fold_of[static_cast<size_t>(i)])];
        const Matrix G = subject_gram(X, i, pm.V, pm.Phi, pm.sigma2);
        Eigen::SelfAdjointEigenSolver<Matrix> es(G);
        const double emax = es.eigenvalues().maxCoeff();
        const double emin = es.eigenvalues().minCoeff();
        if (!(emin > std::max(1e-12, 1e-10 * emax))) {
            resp.n_excluded += 1;
            continue;
        }
        const Matrix Sigma0 = es.eigenvectors() *
                              es.eigenvalues().cwiseInverse().asDiagonal() *
                              es.eigenvectors().transpose();
        const Vector hx = subject_hx(X, i, pm.V, pm.Phi, pm.sigma2);
        resp.ytilde[i] = Sigma0.row(k).dot(hx);
        resp.w[i] = pm.s2[k] + Sigma0(k, k);
        if (q > 0) resp.ztilde.row(i) = Z.Z.row(i);
        resp.included[static_cast<size_t>(i)] = 1;
    }
    return resp;
}

NullSampler fit_null_sampler(const CovariateMatrix& Z, int j, TestMode mode,
                             std::uint64_t seed) {
    if (Z.empty() || j < 0 || j >= Z.count())
        throw std::invalid_argument("fit_null_sampler: bad covariate index");
    const Vector zj = Z.Z.col(j);
    if ((zj.maxCoeff() - zj.minCoeff()) < 1e-12)
        throw std::invalid_argument("fit_null_sampler: constant covariate column cannot be tested");

    NullSampler s;
    s.j = j;
    s.kind = Z.column_kind[static_cast<size_t>(j)];
    s.mode = mode;
    if (mode == TestMode::marginal) return s;

    const int I = Z.subjects();
    const int q = Z.count();
    Matrix D(I, q);  // [Z_{j^c}, 1]
    int c = 0;
    for (int col = 0; col < q; ++col) {
        if (col == j) continue;
        D.col(c++) = Z.Z.col(col);
    }
    D.col(q - 1).setOnes();

    if (s.kind == ColumnKind::gaussian) {
        if (q - 1 > kLargeQ) {
            const auto cv = lasso_cv(D, zj, 5, derive_seed(seed, 0x5a17, j), 20, 1e-2);
            s.theta = cv.beta;
        } else {
            s.theta = D.colPivHouseholderQr().solve(zj);
        }
        const Vector resid = zj - D * s.theta;
        s.sigma2 = std::max(resid.squaredNorm() / static_cast<double>(I), 1e-12);
    } else {
        const double lambda = (q - 1 > kLargeQ)
                                  ? logistic_lasso_cv(D, zj, 5, derive_seed(seed, 0x5a18, j))
                                  : 0.0;
        s.theta = logistic_lasso(D, zj, lambda);
    }
    return s;
}

Vector sample_null_covariate(const NullSampler& sampler, const CovariateMatrix& Z,
                             std::uint64_t draw_seed) {
    const int I = Z.subjects();
    const int q = Z.count();
    std::mt19937_64 rng(draw_seed);
    Vector out(I);

    if (sampler.mode == TestMode::marginal) {
        std::vector<int> perm(static_cast<size_t>(I));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int i = 0; i < I; ++i) out[i] = Z.Z(perm[static_cast<size_t>(i)], sampler.j);
        return out;
    }

    Matrix D(I, q);
    int c = 0;
    for (int col = 0; col < q; ++col) {
        if (col == sampler.j) continue;
        D.col(c++) = Z.Z.col(col);
    }
    D.col(q - 1).setOnes();
    const Vector eta = D * sampler.theta;

    if (sampler.kind == ColumnKind::gaussian) {
        std::normal_distribution<double> gauss(0.0, std::sqrt(sampler.sigma2));
        for (int i = 0; i < I; ++i) out[i] = eta[i] + gauss(rng);
    } else {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int i = 0; i < I; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-eta[i]));
            out[i] = unif(rng) < p ? 1.0 : 0.0;
        }
    }
    return out;
}

double test_lambda2(int k, const TestResponses& resp, const CovariateMatrix& Z,
                    std::uint64_t seed) {
    const int I = Z.subjects();
    std::vector<int> idx;
    for (int i = 0; i < I; ++i)
        if (resp.included[static_cast<size_t>(i)]) idx.push_back(i);
    if (idx.size() < 3) return 0.0;
    const int n = static_cast<int>(idx.size());
    Matrix Xw(n, Z.count());
    Vector yw(n);
    for (int r = 0; r < n; ++r) {
        const int i = idx[static_cast<size_t>(r)];
        const double sw = 1.0 / std::sqrt(resp.w[i]);
        Xw.row(r) = sw * Z.Z.row(i);
        yw[r] = sw * resp.ytilde[i];
    }
    return lasso_cv(Xw, yw, 5, derive_seed(seed, 0xbe7a, k), 30, 1e-3).lambda;
}

TestCell randomization_test(int k, int j, TestMode mode, const TestConfig& config,
                            const TestResponses& resp, const CovariateMatrix& Z,
                            const NullSampler& sampler, double lambda2) {
    if (config.null_fit == TestConfig::NullFit::skew_t && config.B < 50)
        throw std::invalid_argument("randomization_test: skew_t null fit needs B >= 50");

    TestCell cell;
    cell.covariate = j;
    cell.factor = k;
    cell.mode = mode;

    const int I = Z.subjects();
    std::vector<int> idx;
    for (int i = 0; i < I; ++i)
        if (resp.included[static_cast<size_t>(i)]) idx.push_back(i);
    if (idx.size() < 3) {
        cell.error = "too few subjects with usable responses";
        return cell;
    }

    const int n = static_cast<int>(idx.size());
    Vector invw(n), y(n), zj(n);
    Matrix Zin(n, Z.count());
    for (int r = 0; r < n; ++r) {
        const int i = idx[static_cast<size_t>(r)];
        invw[r] = 1.0 / resp.w[i];
        y[r] = resp.ytilde[i];
        zj[r] = Z.Z(i, j);
        Zin.row(r) = Z.Z.row(i);
    }

    // residualized response for the partial statistic; raw response for the
    // marginal one
    Vector r = y;
    if (mode == TestMode::partial) {
        const Vector sw = invw.array().sqrt();
        const Matrix Xw = Zin.array().colwise() * sw.array();
        const Vector yw = y.cwiseProduct(sw);
        if (lambda2 < 0) lambda2 = test_lambda2(k, resp, Z, config.seed);
        const Vector beta = lasso_cd(Xw, yw, lambda2, Vector(), 1e-9, 10000, j);
        r = y - Zin * beta;
    }

    auto statistic = [&](const Vector& zcol) {
        const double den = invw.dot(zcol.cwiseAbs2());
        if (den <= 0) return std::numeric_limits<double>::quiet_NaN();
        return invw.cwiseProduct(r).dot(zcol) / den;
    };

    cell.statistic = statistic(zj);
    if (!std::isfinite(cell.statistic)) {
        cell.error = "degenerate statistic denominator";
        return cell;
    }

    std::vector<double> draws(static_cast<size_t>(config.B));
    Vector zstar_in(n);
    for (int b = 0; b < config.B; ++b) {
        const Vector zstar =
            sample_null_covariate(sampler, Z, derive_seed(config.seed, static_cast<std::uint64_t>(j),
                                                          static_cast<std::uint64_t>(k),
                                                          static_cast<std::uint64_t>(b) + 1));
        for (int rr = 0; rr < n; ++rr) zstar_in[rr] = zstar[idx[static_cast<size_t>(rr)]];
        draws[static_cast<size_t>(b)] = statistic(zstar_in);
    }

    const double tabs = std::abs(cell.statistic);
    bool fitted = false;
    if (config.null_fit == TestConfig::NullFit::skew_t) {
        const SkewTFit fitres = fit_skew_t(draws);
        if (fitres.success) {
            cell.skewt_ok = true;
            cell.null_fit = fitres.params;
            cell.ks_distance = fitres.ks_distance;
            const double p =
                (1.0 - skew_t_cdf(fitres.params, tabs)) + skew_t_cdf(fitres.params, -tabs);
            cell.pvalue = std::clamp(p, 0.0, 1.0);
            fitted = true;
        }
    }
    if (!fitted) {
        int hi = 0, lo = 0;
        for (double d : draws) {
            if (d > tabs) ++hi;
            if (d <= -tabs) ++lo;
        }
        cell.pvalue = std::max(static_cast<double>(hi + lo) / config.B,
                               1.0 / (config.B + 1.0));
        cell.pvalue = std::min(cell.pvalue, 1.0);
    }
    return cell;
}

TestResult run_tests(const LongitudinalTensor& X, const CovariateMatrix& Z,
                     const SpacoFit& full, const CrossfitResult& cf,
                     const TestConfig& config, bool both_modes) {
    if (Z.empty()) return TestResult{};
    const int q = Z.count();
    const int K = full.params.n_factors();

    TestResult result;
    result.pvalues_partial = Matrix::Constant(q, K, std::numeric_limits<double>::quiet_NaN());
    result.pvalues_marginal = Matrix::Constant(q, K, std::numeric_limits<double>::quiet_NaN());

    std::vector<TestMode> modes;
    if (both_modes) modes = {TestMode::partial, TestMode::marginal};
    else modes = {config.mode};

    std::vector<TestResponses> responses;
    responses.reserve(static_cast<size_t>(K));
    std::vector<double> lambda2(static_cast<size_t>(K), 0.0);
    bool want_partial = false;
    for (TestMode mode : modes) want_partial |= mode == TestMode::partial;
    for (int k = 0; k < K; ++k) {
        responses.push_back(build_crossfit_test_response(k, cf, X, Z));
        if (want_partial)
            lambda2[static_cast<size_t>(k)] =
                test_lambda2(k, responses.back(), Z, config.seed);
    }

    // cells are independent; grid parallelized over covariates with
    // preallocated slots
    std::vector<std::vector<TestCell>> by_cov(static_cast<size_t>(q));
    parallel_for(0, q, [&](int j) {
        auto& rows = by_cov[static_cast<size_t>(j)];
        for (TestMode mode : modes) {
            NullSampler sampler;
            try {
                sampler = fit_null_sampler(Z, j, mode, config.seed);
            } catch (const std::exception& e) {
                for (int k = 0; k < K; ++k) {
                    TestCell cell;
                    cell.covariate = j;
                    cell.factor = k;
                    cell.mode = mode;
                    cell.error = e.what();
                    rows.push_back(cell);
                }
                continue;
            }
            for (int k = 0; k < K; ++k)
                rows.push_back(randomization_test(k, j, mode, config,
                                                  responses[static_cast<size_t>(k)], Z,
                                                  sampler, lambda2[static_cast<size_t>(k)]));
        }
    });

    for (const auto& rows : by_cov)
        for (const TestCell& cell : rows) {
            result.cells.push_back(cell);
            if (!cell.error.empty()) continue;
            if (cell.mode == TestMode::partial)
                result.pvalues_partial(cell.covariate, cell.factor) = cell.pvalue;
            else
                result.pvalues_marginal(cell.covariate, cell.factor) = cell.pvalue;
        }
    return result;
}

}  // namespace spaco
