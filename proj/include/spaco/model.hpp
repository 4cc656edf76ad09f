#pragma once

#include "spaco/tensor.hpp"

namespace spaco {

// Full parameter set of the probabilistic PARAFAC model
//   x_{itj} = sum_k u_{ik} phi_{tk} v_{jk} + eps_{itj},  eps ~ N(0, sigma_j^2)
//   u_i ~ N(beta' z_i, diag(s^2))
// under the scale constraints |V_k|^2 = 1, |Phi_k|^2 = T.
struct SpacoParams {
    Matrix V;        // J x K, unit-norm columns
    Matrix Phi;      // T x K, squared column norm T
    Matrix beta;     // q x K (q = 0 when no covariates)
    Vector s2;       // K, latent score variances (> 0)
    Vector sigma2;   // J, noise variances (> 0)
    Vector lambda1;  // K, smoothness penalties (>= 0)
    Vector lambda2;  // K, lasso penalties (>= 0)
    PenaltyMatrix penalty;

    int n_factors() const { return static_cast<int>(V.cols()); }
    int n_features() const { return static_cast<int>(V.rows()); }
    int n_times() const { return static_cast<int>(Phi.rows()); }
    int n_covariates() const { return static_cast<int>(beta.rows()); }

    // Throws unless dimensions are consistent, variances positive and the
    // scale constraints hold to `tol`.
    void validate(double tol = 1e-8) const;

    // Rescales each column pair so |V_k| = 1 and |Phi_k|^2 = T exactly,
    // pushing the freed scale into the latent scores (beta_k, s2_k).
    void enforce_constraints();
};

// Posterior mean and covariance of the latent scores given the data.
// `hx` caches (V . Phi)_i' Lambda_i X_{I,i} per subject; several update and
// test-response formulas reuse it.
struct PosteriorMoments {
    Matrix mu;                  // I x K
    std::vector<Matrix> Sigma;  // I blocks of K x K, SPD
    Matrix hx;                  // I x K
};

struct ObjectiveValue {
    double total = 0.0;
    double neg_half_loglik = 0.0;
    double smooth_penalty = 0.0;
    double lasso_penalty = 0.0;
};

PosteriorMoments posterior_moments(const SpacoParams& params,
                                   const LongitudinalTensor& X,
                                   const CovariateMatrix& Z);

// Marginal log-likelihood with the latent scores integrated out:
//   L(X|Theta) = -1/2 sum_i [ x_i' Lam_i x_i + z_i' beta Lam_f beta' z_i
//                             - mu_i' Sigma_i^{-1} mu_i ]
//              + 1/2 sum_i [ log|Lam_i| + log|Sigma_i| ] + I/2 log|Lam_f|.
// This equals the exact Gaussian log-density plus the fixed constant
// (sum_i |obs_i| / 2) * log(2*pi), which is omitted here and in every call,
// so differences of L across parameter values are exact.
double marginal_loglik(const SpacoParams& params, const LongitudinalTensor& X,
                       const CovariateMatrix& Z);
double marginal_loglik(const SpacoParams& params, const LongitudinalTensor& X,
                       const CovariateMatrix& Z, const PosteriorMoments& post);

// Penalized deviance tracked by the solver, reported as
//   total = -1/2 L(X|Theta) + sum_k lambda1_k/4 Phi_k' Omega Phi_k
//                           + sum_k lambda2_k/2 |beta_k|_1.
// The penalty weights carry the 1/4 and 1/2 factors so that `total` is, up to
// a positive constant, the exact functional the Lemma-form updates descend
// (beta steps minimize -L + lambda2 |beta|_1, proximal Phi steps minimize
// -L + lambda1/2 Phi' Omega Phi); with these weights the objective trace is
// non-increasing for every admissible step size.
ObjectiveValue penalized_objective(const SpacoParams& params,
                                   const LongitudinalTensor& X,
                                   const CovariateMatrix& Z);

// Expected complete-data log-likelihood E_{U|post}[ L(X, U | params) ], the
// EM surrogate maximized by the V/Phi/s2/sigma2 updates.  `post` holds the
// posterior moments at the expansion point Theta_0.
double expected_complete_loglik(const SpacoParams& params,
                                const LongitudinalTensor& X,
                                const CovariateMatrix& Z,
                                const PosteriorMoments& post);

// Checks the scale non-identifiability of one factor: with c1*c2*c3 = 1,
// {c1 Phi_k, c2 V_k, c3 beta_k, c3^2 s2_k} leaves the marginal log-likelihood
// unchanged.  Test utility; constraint enforcement picks the canonical
// representative in production.
bool scaling_invariance_check(const SpacoParams& params,
                              const LongitudinalTensor& X,
                              const CovariateMatrix& Z, int k, double c1,
                              double c2, double c3, double tol = 1e-9);

// Output conventions: factors ordered by s2 descending; each V_k sign-flipped
// so its largest-|entry| coordinate is positive, with beta_k (and posterior
// means, via recomputation) flipped consistently.
void order_factors(SpacoParams& params);

}  // namespace spaco
