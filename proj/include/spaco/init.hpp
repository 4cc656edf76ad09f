#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spaco/model.hpp"

namespace spaco {

struct InitConfig {
    int K = 1;
    double ridge_delta = -1.0;   // < 0: default 1/sqrt(J*T)
    double bandwidth_hG = -1.0;  // < 0: default T/sqrt(1 + #co-observed time pairs)
    int core_als_iters = 200;
    std::uint64_t seed = 0;
    // Test hook: replace the smoothed temporal basis with the eigenvectors of
    // the raw total product matrix (exact on complete noiseless data).  The
    // production path always smooths.
    bool raw_temporal_basis = false;
};

// K x K x K core from the orthonormal-basis regression, with the factors of
// its rank-K decomposition.  G(k_u, k_t, k_v) is stored flat, k_v fastest.
struct CoreArray {
    int K = 0;
    std::vector<double> G;
    Matrix A, B, C;  // K x K each; mode order (subject, time, feature)

    double at(int ku, int kt, int kv) const {
        return G[static_cast<size_t>((ku * K + kt) * K + kv)];
    }
    double& at(int ku, int kt, int kv) {
        return G[static_cast<size_t>((ku * K + kt) * K + kv)];
    }
};

struct InitResult {
    SpacoParams params;  // constraint-scaled V/Phi, beta = 0, s2/sigma2 filled
    Matrix U;            // I x K scores, consistent with params.V/params.Phi
    CoreArray core;
    double delta = 0.0;
    double hG = 0.0;
    std::vector<std::string> warnings;
};

// Top-K left singular vectors of the feature unfolding restricted to observed
// columns.  Pads with a seeded random orthonormal completion (and warns via
// the returned count) if K exceeds the numerical rank.
Matrix feature_basis(const LongitudinalTensor& X, int K,
                     std::uint64_t seed = 0, int* rank_deficit = nullptr);

// Temporal basis from functional PCA of the total product matrix of the
// projections Y(k): local linear surface smoothing off the diagonal, local
// linear regression on it, then the top-K eigenvectors.
Matrix temporal_basis(const LongitudinalTensor& X, const Matrix& Vperp,
                      double hG, bool raw_hook = false,
                      std::vector<std::string>* warnings = nullptr);

// Per-subject ridge regression of the observed rows of X_I on the Kronecker
// basis (Vperp x Phiperp); returns the I x K^2 coefficient matrix.
Matrix score_regression(const LongitudinalTensor& X, const Matrix& Vperp,
                        const Matrix& Phiperp, double delta);

// Rank-K alternating least squares on the small core (SVD-initialized,
// `iters` sweeps or 1e-10 relative change).  `Uperp` holds the top-K left
// singular vectors of Utilde; scores assemble as Uperp * core.A.
// `sweep_errors` (optional) receives the per-sweep squared reconstruction
// error of the core.
struct CoreParafacResult {
    CoreArray core;
    Matrix Uperp;  // I x K orthonormal
};
CoreParafacResult core_parafac(const Matrix& Utilde, int K, int iters,
                               std::vector<double>* sweep_errors = nullptr,
                               std::vector<std::string>* warnings = nullptr);

// The full pipeline; q sizes the (zero) beta block of the result.
InitResult initialize(const LongitudinalTensor& X, int q, const InitConfig& config);

double default_bandwidth(const LongitudinalTensor& X);

}  // namespace spaco
