#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spaco/model.hpp"
#include "spaco/skewt.hpp"
#include "spaco/solver.hpp"

namespace spaco {

struct CrossfitPlan {
    int M = 5;
    std::vector<int> fold_of;  // subject -> fold in [0, M)
    std::uint64_t seed = 0;
};

CrossfitPlan make_crossfit_plan(int n_subjects, int M, std::uint64_t seed);

struct CrossfitConfig {
    int M = 5;
    int refit_max_iters = 50;
    std::uint64_t seed = 0;
};

// Fold-held-out refits and score estimates.  mu_tilde row i is the posterior
// mean of subject i under the parameters fitted without its fold.  For a fit
// with covariates, beta_crossfit holds the lasso estimate built from the
// fold-held-out responses, and mu_tilde uses it as the prior mean.
struct CrossfitResult {
    CrossfitPlan plan;
    std::vector<SpacoParams> fold_params;
    Matrix mu_tilde;      // I x K
    Matrix beta_crossfit; // q x K, empty without covariates
    Vector shrinkage;     // K, the factors c_k
    std::vector<std::string> warnings;
};

CrossfitResult crossfit_posterior(const LongitudinalTensor& X, const CovariateMatrix& Z,
                                  const SpacoFit& full, const CrossfitConfig& config);

struct ShrinkageFactors {
    Vector c;  // K values in [0, 1]
};

// c_k = (|mu~_k| / |mu_k|) * (<mu~_k/|mu~_k|, mu_k/|mu_k|>)_+ clamped to [0,1];
// zero-norm columns give c_k = 0.
ShrinkageFactors shrinkage_factors(const Matrix& mu, const Matrix& mu_tilde);

// F^ = sum_k (c_k mu_k) o Phi_k o V_k
DenseTensor reconstruct(const SpacoParams& params, const Matrix& mu, const Vector& c);

enum class TestMode { partial, marginal };

struct TestConfig {
    TestMode mode = TestMode::partial;  // cmd-level "both" runs each
    double delta = 0.0;
    int B = 100;
    enum class NullFit { skew_t, empirical } null_fit = NullFit::skew_t;
    std::uint64_t seed = 0;
};

// Per-factor decoupled responses of the randomization test.  At delta = 0,
//   Sigma_i(0) = ((V.Phi)_i' Lam_i (V.Phi)_i)^{-1},  z~_i = z_i,
//   y~_i = Sigma_i(0)_{k,:} (V.Phi)_i' Lam_i X_{I,i},
//   w_i  = s_k^2 + Sigma_i(0)_{kk};
// subjects whose delta = 0 information matrix is singular are excluded.
struct TestResponses {
    Vector ytilde;                // I
    Vector w;                     // I
    Matrix ztilde;                // I x q
    std::vector<uint8_t> included;
    int n_excluded = 0;
};

TestResponses build_test_response(int k, const SpacoParams& params,
                                  const LongitudinalTensor& X, const CovariateMatrix& Z,
                                  const Matrix& betas_other, double delta);

// Cross-fitted variant: subject i uses V/Phi/s2/sigma2 from the fold model
// that excluded it (delta = 0 only).
TestResponses build_crossfit_test_response(int k, const CrossfitResult& cf,
                                           const LongitudinalTensor& X,
                                           const CovariateMatrix& Z);

// One fitted null generator for covariate j.  Conditional draws come from a
// (penalized) regression of Z_j on the others; marginal draws are
// permutations of the observed column.
struct NullSampler {
    int j = -1;
    ColumnKind kind = ColumnKind::gaussian;
    TestMode mode = TestMode::marginal;
    Vector theta;        // coefficients on [Z_{j^c}, 1]
    double sigma2 = 1.0; // gaussian conditional noise
};

NullSampler fit_null_sampler(const CovariateMatrix& Z, int j, TestMode mode,
                             std::uint64_t seed);
Vector sample_null_covariate(const NullSampler& sampler, const CovariateMatrix& Z,
                             std::uint64_t draw_seed);

struct TestCell {
    int covariate = 0;
    int factor = 0;
    TestMode mode = TestMode::partial;
    double statistic = 0.0;
    double pvalue = 1.0;
    bool skewt_ok = false;
    SkewTParams null_fit;
    double ks_distance = 1.0;
    std::string error;  // non-empty when the cell could not be tested
};

struct TestResult {
    Matrix pvalues_partial;   // q x K (NaN where not run / errored)
    Matrix pvalues_marginal;  // q x K
    std::vector<TestCell> cells;
};

// Penalty for the nuisance regression of the partial statistic, selected once
// per factor by cross-validation on the weighted lasso (the per-j fits then
// share it, with coordinate j pinned at zero).
double test_lambda2(int k, const TestResponses& resp, const CovariateMatrix& Z,
                    std::uint64_t seed);

// Randomization test for one (covariate, factor) pair given prebuilt
// responses: beta^ on the weighted lasso with coordinate j pinned at zero at
// penalty `lambda2` (< 0 selects it by CV), B fresh draws of Z_j, then a
// skew-t (or empirical) null CDF and the two-sided p-value.
TestCell randomization_test(int k, int j, TestMode mode, const TestConfig& config,
                            const TestResponses& resp, const CovariateMatrix& Z,
                            const NullSampler& sampler, double lambda2 = -1.0);

// Full q x K grid for one or both modes, using cross-fitted responses.
TestResult run_tests(const LongitudinalTensor& X, const CovariateMatrix& Z,
                     const SpacoFit& full, const CrossfitResult& cf,
                     const TestConfig& config, bool both_modes = true);

}  // namespace spaco
