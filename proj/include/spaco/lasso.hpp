#pragma once

#include <cstdint>
#include <vector>

#include "spaco/tensor.hpp"

namespace spaco {

// Cyclic coordinate descent for  min_b 1/2 |y - X b|^2 + lambda |b|_1.
// `exclude` (optional, -1 = none) pins one coefficient at zero.  Iterates
// until the largest coefficient change in a sweep is below `tol`.
Vector lasso_cd(const Matrix& X, const Vector& y, double lambda,
                const Vector& warm_start, double tol = 1e-9,
                int max_sweeps = 10000, int exclude = -1);

// Smallest penalty with an all-zero solution: max_j |X' y|_j (skipping the
// excluded coordinate).
double lasso_lambda_max(const Matrix& X, const Vector& y, int exclude = -1);

// K-fold cross-validated lasso over a log-spaced path from lambda_max down
// `path_size` points to lambda_max * path_min_ratio.  Folds are contiguous
// blocks of a seeded shuffle.  With `one_se` the largest penalty within one
// standard error of the best CV error is chosen (plain minimum otherwise);
// exact ties (within 1e-12) resolve toward the smallest lambda.
struct LassoCvResult {
    double lambda = 0.0;
    Vector beta;
    std::vector<double> path;      // descending
    std::vector<double> cv_error;  // aligned with path, summed over folds
    std::vector<double> cv_se;     // standard error of the fold means
};
LassoCvResult lasso_cv(const Matrix& X, const Vector& y, int n_folds,
                       std::uint64_t seed, int path_size = 50,
                       double path_min_ratio = 1e-3, int exclude = -1,
                       bool one_se = false);

// L1-penalized logistic regression (IRLS with a weighted-lasso inner solve).
// Returns coefficients for P(y=1|x) = 1/(1+exp(-x'b)); no intercept beyond
// what the caller appends to X.
Vector logistic_lasso(const Matrix& X, const Vector& y, double lambda,
                      int max_irls = 50, double tol = 1e-8);

// Cross-validated penalty for logistic_lasso (held-out deviance).
double logistic_lasso_cv(const Matrix& X, const Vector& y, int n_folds,
                         std::uint64_t seed, int path_size = 20,
                         double path_min_ratio = 1e-2);

}  // namespace spaco
