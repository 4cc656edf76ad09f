#include "spaco/model.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "spaco/parallel.hpp"

namespace spaco {

namespace {

// sum_j v_j v_j' / sigma_j^2, shared across subjects and time points.
Matrix feature_gram(const SpacoParams& p) {
    const Matrix Vw = p.V.array().colwise() / p.sigma2.array();
    return p.V.transpose() * Vw;
}

}  // namespace

void SpacoParams::validate(double tol) const {
    const int K = n_factors();
    const int T = n_times();
    if (K < 1) throw std::invalid_argument("SpacoParams: need at least one factor");
    if (Phi.cols() != K || s2.size() != K || lambda1.size() != K || lambda2.size() != K)
        throw std::invalid_argument("SpacoParams: factor dimension mismatch");
    if (beta.size() > 0 && beta.cols() != K)
        throw std::invalid_argument("SpacoParams: beta column count mismatch");
    if (penalty.Omega.size() > 0 && penalty.Omega.rows() != T)
        throw std::invalid_argument("SpacoParams: Omega dimension mismatch");
    for (int k = 0; k < K; ++k) {
        if (!(s2[k] > 0)) throw std::invalid_argument("SpacoParams: s2 must be positive");
        if (std::abs(V.col(k).squaredNorm() - 1.0) > tol)
            throw std::invalid_argument("SpacoParams: |V_k|^2 != 1");
        if (std::abs(Phi.col(k).squaredNorm() - T) > tol * T)
            throw std::invalid_argument("SpacoParams: |Phi_k|^2 != T");
        if (lambda1[k] < 0 || lambda2[k] < 0)
            throw std::invalid_argument("SpacoParams: negative penalty");
    }
    for (int j = 0; j < sigma2.size(); ++j)
        if (!(sigma2[j] > 0)) throw std::invalid_argument("SpacoParams: sigma2 must be positive");
}

void SpacoParams::enforce_constraints() {
    const int K = n_factors();
    const double T = static_cast<double>(n_times());
    for (int k = 0; k < K; ++k) {
        const double nv = V.col(k).norm();
        const double np = Phi.col(k).norm();
        if (nv <= 0 || np <= 0)
            throw std::runtime_error("enforce_constraints: zero factor column");
        V.col(k) /= nv;
        Phi.col(k) *= std::sqrt(T) / np;
        // scale c3 = nv * np / sqrt(T) moves into the score distribution
        const double c3 = nv * np / std::sqrt(T);
        if (beta.size() > 0) beta.col(k) *= c3;
        s2[k] *= c3 * c3;
    }
}

PosteriorMoments posterior_moments(const SpacoParams& params,
                                   const LongitudinalTensor& X,
                                   const CovariateMatrix& Z) {
    const int I = X.subjects();
    const int K = params.n_factors();
    if (params.n_features() != X.features() || params.n_times() != X.times())
        throw std::invalid_argument("posterior_moments: params/tensor dimension mismatch");
    if (!Z.empty() && (Z.subjects() != I || params.n_covariates() != Z.count()))
        throw std::invalid_argument("posterior_moments: params/covariate dimension mismatch");

    PosteriorMoments post;
    post.mu.resize(I, K);
    post.Sigma.assign(I, Matrix());
    post.hx.resize(I, K);

    const Matrix SV = feature_gram(params);                                  // K x K
    const Matrix Vw = params.V.array().colwise() / params.sigma2.array();    // J x K
    const Vector inv_s2 = params.s2.cwiseInverse();

    parallel_for(0, I, [&](int i) {
        Matrix prec = inv_s2.asDiagonal();  // Lambda_f
        Vector h = Vector::Zero(K);
        for (int t : X.observed_times(i)) {
            const Vector phi_t = params.Phi.row(t).transpose();
            prec += SV.cwiseProduct(phi_t * phi_t.transpose());
            h += phi_t.cwiseProduct(Vw.transpose() * X.slice(i, t));
        }
        Eigen::LDLT<Matrix> ldlt(prec);
        if (ldlt.info() != Eigen::Success)
            throw std::runtime_error("posterior_moments: singular precision (corrupted params)");
        post.Sigma[static_cast<size_t>(i)] = ldlt.solve(Matrix::Identity(K, K));
        Vector rhs = h;
        if (!Z.empty())
            rhs += inv_s2.cwiseProduct(params.beta.transpose() * Z.Z.row(i).transpose());
        post.mu.row(i) = ldlt.solve(rhs).transpose();
        post.hx.row(i) = h.transpose();
    });
    return post;
}

double marginal_loglik(const SpacoParams& params, const LongitudinalTensor& X,
                       const CovariateMatrix& Z) {
    return marginal_loglik(params, X, Z, posterior_moments(params, X, Z));
}

double marginal_loglik(const SpacoParams& params, const LongitudinalTensor& X,
                       const CovariateMatrix& Z, const PosteriorMoments& post) {
    const int I = X.subjects();
    const int K = params.n_factors();
    const Vector inv_s2 = params.s2.cwiseInverse();
    const double log_det_lambda_f = -params.s2.array().log().sum();
    const double log_prec_per_time = -params.sigma2.array().log().sum();

    // fixed ordering, one partial term per subject, summed pairwise
    std::vector<double> terms(static_cast<size_t>(I), 0.0);
    parallel_for(0, I, [&](int i) {
        double quad_x = 0.0;
        const auto& times = X.observed_times(i);
        for (int t : times)
            quad_x += (X.slice(i, t).array().square() / params.sigma2.array()).sum();

        Vector b = Vector::Zero(K);
        if (!Z.empty()) b = params.beta.transpose() * Z.Z.row(i).transpose();
        const Vector lam_b = inv_s2.cwiseProduct(b);
        const Vector rhs = post.hx.row(i).transpose() + lam_b;
        // mu' Sigma^{-1} mu = rhs' Sigma rhs = rhs' mu
        const double quad_mu = rhs.dot(post.mu.row(i).transpose());
        const double quad_b = b.dot(lam_b);

        Eigen::LDLT<Matrix> ldlt(post.Sigma[static_cast<size_t>(i)]);
        const double log_det_sigma = ldlt.vectorD().array().log().sum();
        const double log_det_lambda_i = static_cast<double>(times.size()) * log_prec_per_time;

        terms[static_cast<size_t>(i)] =
            -0.5 * (quad_x + quad_b - quad_mu) + 0.5 * (log_det_lambda_i + log_det_sigma);
    });
    double loglik = std::accumulate(terms.begin(), terms.end(), 0.0);
    loglik += 0.5 * I * log_det_lambda_f;
    return loglik;
}

ObjectiveValue penalized_objective(const SpacoParams& params,
                                   const LongitudinalTensor& X,
                                   const CovariateMatrix& Z) {
    ObjectiveValue obj;
    obj.neg_half_loglik = -0.5 * marginal_loglik(params, X, Z);
    for (int k = 0; k < params.n_factors(); ++k) {
        if (params.penalty.Omega.size() > 0)
            obj.smooth_penalty += 0.25 * params.lambda1[k] *
                params.Phi.col(k).dot(params.penalty.Omega * params.Phi.col(k));
        if (params.beta.size() > 0)
            obj.lasso_penalty += 0.5 * params.lambda2[k] * params.beta.col(k).lpNorm<1>();
    }
    obj.total = obj.neg_half_loglik + obj.smooth_penalty + obj.lasso_penalty;
    return obj;
}

double expected_complete_loglik(const SpacoParams& params,
                                const LongitudinalTensor& X,
                                const CovariateMatrix& Z,
                                const PosteriorMoments& post) {
    const int I = X.subjects();
    const int K = params.n_factors();
    const Matrix SV = feature_gram(params);
    const Vector inv_s2 = params.s2.cwiseInverse();
    const double log_det_lambda_f = -params.s2.array().log().sum();
    const double log_prec_per_time = -params.sigma2.array().log().sum();

    std::vector<double> terms(static_cast<size_t>(I), 0.0);
    parallel_for(0, I, [&](int i) {
        const Vector mu_i = post.mu.row(i).transpose();
        const Matrix& Sig_i = post.Sigma[static_cast<size_t>(i)];
        double fit = 0.0;
        double trace = 0.0;
        for (int t : X.observed_times(i)) {
            const Vector phi_t = params.Phi.row(t).transpose();
            const Vector uphi = mu_i.cwiseProduct(phi_t);
            const Vector resid = X.slice(i, t) - params.V * uphi;
            fit += (resid.array().square() / params.sigma2.array()).sum();
            trace += SV.cwiseProduct(phi_t * phi_t.transpose()).cwiseProduct(Sig_i).sum();
        }
        Vector b = Vector::Zero(K);
        if (!Z.empty()) b = params.beta.transpose() * Z.Z.row(i).transpose();
        const Vector d = mu_i - b;
        const double prior = d.dot(inv_s2.cwiseProduct(d)) + inv_s2.dot(Sig_i.diagonal());
        const double log_det_lambda_i =
            static_cast<double>(X.observed_times(i).size()) * log_prec_per_time;
        terms[static_cast<size_t>(i)] = -0.5 * (fit + trace + prior) + 0.5 * log_det_lambda_i;
    });
    double value = std::accumulate(terms.begin(), terms.end(), 0.0);
    value += 0.5 * I * log_det_lambda_f;
    return value;
}

bool scaling_invariance_check(const SpacoParams& params,
                              const LongitudinalTensor& X,
                              const CovariateMatrix& Z, int k, double c1,
                              double c2, double c3, double tol) {
    if (std::abs(c1 * c2 * c3 - 1.0) > 1e-12)
        throw std::invalid_argument("scaling_invariance_check: c1*c2*c3 must equal 1");
    const double base = marginal_loglik(params, X, Z);
    SpacoParams scaled = params;
    scaled.Phi.col(k) *= c1;
    scaled.V.col(k) *= c2;
    if (scaled.beta.size() > 0) scaled.beta.col(k) *= c3;
    scaled.s2[k] *= c3 * c3;
    const double rescaled = marginal_loglik(scaled, X, Z);
    return std::abs(rescaled - base) <= tol;
}

void order_factors(SpacoParams& params) {
    const int K = params.n_factors();
    std::vector<int> order(static_cast<size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return params.s2[a] > params.s2[b]; });

    SpacoParams out = params;
    for (int k = 0; k < K; ++k) {
        const int src = order[static_cast<size_t>(k)];
        out.V.col(k) = params.V.col(src);
        out.Phi.col(k) = params.Phi.col(src);
        if (params.beta.size() > 0) out.beta.col(k) = params.beta.col(src);
        out.s2[k] = params.s2[src];
        out.lambda1[k] = params.lambda1[src];
        out.lambda2[k] = params.lambda2[src];

        Eigen::Index arg = 0;
        out.V.col(k).cwiseAbs().maxCoeff(&arg);
        if (out.V(arg, k) < 0) {
            out.V.col(k) = -out.V.col(k);
            if (out.beta.size() > 0) out.beta.col(k) = -out.beta.col(k);
        }
    }
    params = std::move(out);
}

}  // namespace spaco
