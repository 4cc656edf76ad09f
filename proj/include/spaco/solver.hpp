#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spaco/model.hpp"

namespace spaco {

enum class TuneMode { fixed, autotune };

struct FitConfig {
    int K = 1;
    int max_outer_iters = 200;
    // Converged when the relative objective decrease stays below this for two
    // consecutive outer iterations (decrease measured against max(1, |J|)).
    double tol_rel_obj = 1e-6;
    int max_prox_iters = 100;
    // Candidate smoothness penalties; empty = build the default log-spaced
    // grid per factor.  Auto-tuning runs inside a short pilot phase of
    // `tuning_iters` outer iterations (lambda1 re-selected at every Phi
    // update, lambda2 once from the first pilot posterior); the chosen values
    // are then frozen, so the reported trace descends a single objective.
    // With lambda1_mode = fixed the initializer's lambda1 values are kept.
    std::vector<double> lambda1_grid;
    TuneMode lambda1_mode = TuneMode::autotune;
    TuneMode lambda2_mode = TuneMode::autotune;
    int tuning_iters = 1;
    int n_folds_beta = 5;
    std::uint64_t seed = 0;
};

struct FitReport {
    std::vector<ObjectiveValue> objective_trace;  // [0] = initial parameters
    bool converged = false;
    int n_iters = 0;
    Vector chosen_lambda1;
    Vector chosen_lambda2;
    std::vector<std::string> warnings;
};

struct SpacoFit {
    SpacoParams params;
    PosteriorMoments posterior;
    FitReport report;
};

// One lasso update of beta_k at the current posterior:
//   beta_k = argmin 1/2 |y~ - Z~ beta|^2 + lambda2_k |beta|_1
// with z~_i = sqrt(w_i)/s_k^2 z_i, y~_i = (1/sqrt(w_i)) [ (Sigma_i hx_i)_k +
// sum_{l != k} Sigma_i(k,l) beta_l' z_i / s_l^2 ] and w_i = s_k^2 -
// (Sigma_i)_{kk} clamped below at 1e-12.
Vector update_beta(int k, const SpacoParams& params, const PosteriorMoments& post,
                   const CovariateMatrix& Z, double lambda2_k);

// Proximal sphere updates for one factor column.  Both iterate
//   col <- radius * (col + rho * drift) / |col + rho * drift|
// on a fixed quadratic built at the current posterior, with the largest step
// size admissible for monotone descent, until the quadratic stops improving
// (relative 1e-8) or max_prox_iters.
Vector update_V(int k, const SpacoParams& params, const PosteriorMoments& post,
                const LongitudinalTensor& X, int max_prox_iters = 100);
Vector update_Phi(int k, const SpacoParams& params, const PosteriorMoments& post,
                  const LongitudinalTensor& X, double lambda1_k,
                  int max_prox_iters = 100);

// Gradient fields of the proximal steps (before the step size), exposed so
// they can be checked against finite differences of the EM surrogate:
//   drift_V   = a - A_k^V V_k      = d E[L]/d V_k
//   drift_Phi = a - A_k^Phi Phi_k - lambda1_k Omega Phi_k.
Vector prox_drift_V(int k, const SpacoParams& params, const PosteriorMoments& post,
                    const LongitudinalTensor& X);
Vector prox_drift_Phi(int k, const SpacoParams& params, const PosteriorMoments& post,
                      const LongitudinalTensor& X, double lambda1_k);

// Closed-form variance updates (floored at 1e-10).
Vector update_s2(const SpacoParams& params, const PosteriorMoments& post,
                 const CovariateMatrix& Z);
Vector update_sigma2(const SpacoParams& params, const PosteriorMoments& post,
                     const LongitudinalTensor& X);

// Leave-one-time-out cross-validation for the smoothness penalty of factor k:
// every candidate is scored by sum_t of the held-out quadratic deviance
// A_tt phi_t^2 - 2 a_t phi_t after re-solving the sphere-constrained quadratic
// without time t.  Ties go to the smallest candidate.
double tune_lambda1(int k, const SpacoParams& params, const PosteriorMoments& post,
                    const LongitudinalTensor& X, const std::vector<double>& grid,
                    int max_prox_iters = 200);

// K-fold cross-validation for the lasso penalty of the beta_k subproblem over
// a 50-point log-spaced path from lambda_max down to lambda_max * 1e-3.
double tune_lambda2(int k, const SpacoParams& params, const PosteriorMoments& post,
                    const CovariateMatrix& Z, int n_folds, std::uint64_t seed);

// Default candidate grid for lambda1: 10 log-spaced values on [1e-3 T, 1e3 T]
// scaled by eig_max(A_k^Phi)/eig_max(Omega).
std::vector<double> default_lambda1_grid(int k, const SpacoParams& params,
                                         const PosteriorMoments& post,
                                         const LongitudinalTensor& X);

// The full solver loop: beta block, per-factor proximal V/Phi blocks with a
// posterior refresh after each, then the closed-form variance updates.
// Aborts (throws) if the tracked objective ever increases beyond 1e-8
// relative, which would indicate a step-size bug.
SpacoFit fit(const LongitudinalTensor& X, const CovariateMatrix& Z,
             const FitConfig& config, const SpacoParams& init);

}  // namespace spaco
