#include "spaco/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "spaco/rng.hpp"

namespace spaco {

namespace {

double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

std::vector<std::vector<int>> make_folds(int n, int n_folds, std::uint64_t seed) {
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = std::mt19937_64(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<int>> folds(static_cast<size_t>(n_folds));
    for (int i = 0; i < n; ++i) folds[static_cast<size_t>(i % n_folds)].push_back(idx[static_cast<size_t>(i)]);
    return folds;
}

}  // namespace

Vector lasso_cd(const Matrix& X, const Vector& y, double lambda,
                const Vector& warm_start, double tol, int max_sweeps,
                int exclude) {
    const int p = static_cast<int>(X.cols());
    Vector beta = warm_start.size() == p ? warm_start : Vector::Zero(p);
    if (exclude >= 0 && exclude < p) beta[exclude] = 0.0;
    Vector col_sq(p);
    for (int j = 0; j < p; ++j) col_sq[j] = X.col(j).squaredNorm();
    Vector resid = y - X * beta;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (int j = 0; j < p; ++j) {
            if (j == exclude || col_sq[j] <= 0.0) continue;
            const double old = beta[j];
            const double rho = X.col(j).dot(resid) + col_sq[j] * old;
            const double next = soft_threshold(rho, lambda) / col_sq[j];
            if (next != old) {
                resid -= (next - old) * X.col(j);
                beta[j] = next;
                max_change = std::max(max_change, std::abs(next - old));
            }
        }
        if (max_change < tol) break;
    }
    return beta;
}

double lasso_lambda_max(const Matrix& X, const Vector& y, int exclude) {
    double m = 0.0;
    for (int j = 0; j < X.cols(); ++j) {
        if (j == exclude) continue;
        m = std::max(m, std::abs(X.col(j).dot(y)));
    }
    return m;
}

LassoCvResult lasso_cv(const Matrix& X, const Vector& y, int n_folds,
                       std::uint64_t seed, int path_size,
                       double path_min_ratio, int exclude, bool one_se) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    if (n_folds < 2) throw std::invalid_argument("lasso_cv: need at least 2 folds");
    n_folds = std::min(n_folds, n);

    LassoCvResult out;
    const double lam_max = lasso_lambda_max(X, y, exclude);
    if (lam_max <= 0.0) {
        out.beta = Vector::Zero(p);
        return out;
    }
    out.path.resize(static_cast<size_t>(path_size));
    for (int m = 0; m < path_size; ++m) {
        const double f = path_size == 1 ? 1.0 : static_cast<double>(m) / (path_size - 1);
        out.path[static_cast<size_t>(m)] = lam_max * std::pow(path_min_ratio, f);
    }
    out.cv_error.assign(static_cast<size_t>(path_size), 0.0);
    out.cv_se.assign(static_cast<size_t>(path_size), 0.0);

    const auto folds = make_folds(n, n_folds, seed);
    Matrix fold_mean(n_folds, path_size);
    for (int fi = 0; fi < n_folds; ++fi) {
        const auto& fold = folds[static_cast<size_t>(fi)];
        std::vector<uint8_t> in_fold(static_cast<size_t>(n), 0);
        for (int i : fold) in_fold[static_cast<size_t>(i)] = 1;
        Matrix Xtr(n - static_cast<int>(fold.size()), p);
        Vector ytr(n - static_cast<int>(fold.size()));
        int r = 0;
        for (int i = 0; i < n; ++i) {
            if (in_fold[static_cast<size_t>(i)]) continue;
            Xtr.row(r) = X.row(i);
            ytr[r] = y[i];
            ++r;
        }
        Vector beta = Vector::Zero(p);
        for (int m = 0; m < path_size; ++m) {
            beta = lasso_cd(Xtr, ytr, out.path[static_cast<size_t>(m)], beta, 1e-9, 10000, exclude);
            double err = 0.0;
            for (int i : fold) {
                const double d = y[i] - X.row(i).dot(beta);
                err += d * d;
            }
            out.cv_error[static_cast<size_t>(m)] += err;
            fold_mean(fi, m) = err / static_cast<double>(fold.size());
        }
    }
    for (int m = 0; m < path_size; ++m) {
        const double mean = fold_mean.col(m).mean();
        double var = 0.0;
        for (int fi = 0; fi < n_folds; ++fi) {
            const double d = fold_mean(fi, m) - mean;
            var += d * d;
        }
        var /= std::max(1, n_folds - 1);
        out.cv_se[static_cast<size_t>(m)] = std::sqrt(var / n_folds);
    }

    // plain rule: smallest lambda within 1e-12 of the minimum (path descends)
    const double best = *std::min_element(out.cv_error.begin(), out.cv_error.end());
    int pick = 0;
    for (int m = 0; m < path_size; ++m)
        if (out.cv_error[static_cast<size_t>(m)] <= best + 1e-12) pick = m;
    if (one_se) {
        // largest lambda whose fold-mean error is within one standard error
        // of the best point's
        int best_m = 0;
        double best_mean = std::numeric_limits<double>::infinity();
        for (int m = 0; m < path_size; ++m) {
            const double mean = fold_mean.col(m).mean();
            if (mean < best_mean) {
                best_mean = mean;
                best_m = m;
            }
        }
        const double cutoff = best_mean + out.cv_se[static_cast<size_t>(best_m)];
        for (int m = 0; m < path_size; ++m) {
            if (fold_mean.col(m).mean() <= cutoff) {
                pick = m;
                break;
            }
        }
    }
    out.lambda = out.path[static_cast<size_t>(pick)];
    out.beta = lasso_cd(X, y, out.lambda, Vector::Zero(p), 1e-9, 10000, exclude);
    return out;
}

Vector logistic_lasso(const Matrix& X, const Vector& y, double lambda,
                      int max_irls, double tol) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    Vector beta = Vector::Zero(p);
    for (int it = 0; it < max_irls; ++it) {
        Vector eta = X * beta;
        Vector mu(n), w(n);
        for (int i = 0; i < n; ++i) {
            const double m = 1.0 / (1.0 + std::exp(-eta[i]));
            mu[i] = m;
            w[i] = std::max(m * (1.0 - m), 1e-6);
        }
        // working response z = eta + (y - mu)/w, solved as a weighted lasso
        Vector sw = w.array().sqrt();
        Matrix Xw = X.array().colwise() * sw.array();
        Vector zw = (eta.array() + (y - mu).array() / w.array()) * sw.array();
        Vector next = lasso_cd(Xw, zw, lambda, beta, 1e-9, 2000);
        const double change = (next - beta).lpNorm<Eigen::Infinity>();
        beta = next;
        if (change < tol) break;
    }
    return beta;
}

double logistic_lasso_cv(const Matrix& X, const Vector& y, int n_folds,
                         std::uint64_t seed, int path_size,
                         double path_min_ratio) {
    const int n = static_cast<int>(X.rows());
    n_folds = std::min(n_folds, n);
    // lambda_max for logistic: |X'(y - ybar)| scale
    const double ybar = y.mean();
    Vector centered = y.array() - ybar;
    double lam_max = 0.0;
    for (int j = 0; j < X.cols(); ++j)
        lam_max = std::max(lam_max, std::abs(X.col(j).dot(centered)));
    if (lam_max <= 0.0) return 0.0;

    std::vector<double> path(static_cast<size_t>(path_size));
    for (int m = 0; m < path_size; ++m) {
        const double f = path_size == 1 ? 1.0 : static_cast<double>(m) / (path_size - 1);
        path[static_cast<size_t>(m)] = lam_max * std::pow(path_min_ratio, f);
    }
    std::vector<double> cv(static_cast<size_t>(path_size), 0.0);
    const auto folds = make_folds(n, n_folds, seed);
    for (const auto& fold : folds) {
        std::vector<uint8_t> in_fold(static_cast<size_t>(n), 0);
        for (int i : fold) in_fold[static_cast<size_t>(i)] = 1;
        Matrix Xtr(n - static_cast<int>(fold.size()), X.cols());
        Vector ytr(n - static_cast<int>(fold.size()));
        int r = 0;
        for (int i = 0; i < n; ++i) {
            if (in_fold[static_cast<size_t>(i)]) continue;
            Xtr.row(r) = X.row(i);
            ytr[r] = y[i];
            ++r;
        }
        for (int m = 0; m < path_size; ++m) {
            const Vector beta = logistic_lasso(Xtr, ytr, path[static_cast<size_t>(m)], 25);
            double dev = 0.0;
            for (int i : fold) {
                const double eta = X.row(i).dot(beta);
                dev += std::log1p(std::exp(-std::abs(eta))) + std::max(eta, 0.0) - y[i] * eta;
            }
            cv[static_cast<size_t>(m)] += dev;
        }
    }
    const double best = *std::min_element(cv.begin(), cv.end());
    int pick = 0;
    for (int m = 0; m < path_size; ++m)
        if (cv[static_cast<size_t>(m)] <= best + 1e-12) pick = m;
    return path[static_cast<size_t>(pick)];
}

}  // namespace spaco
