#include "spaco/init.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "spaco/rng.hpp"

namespace spaco {

namespace {

// Sign convention for reproducibility: largest-|entry| coordinate positive.
void fix_signs(Matrix& M) {
    for (int k = 0; k < M.cols(); ++k) {
        Eigen::Index arg = 0;
        M.col(k).cwiseAbs().maxCoeff(&arg);
        if (M(arg, k) < 0) M.col(k) = -M.col(k);
    }
}

// Top-K eigenvectors (descending eigenvalue) of a symmetric matrix.
Matrix top_eigenvectors(const Matrix& S, int K) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("top_eigenvectors: eigensolver failed");
    const int n = static_cast<int>(S.rows());
    Matrix out(n, K);
    for (int k = 0; k < K; ++k) out.col(k) = es.eigenvectors().col(n - 1 - k);
    fix_signs(out);
    return out;
}

// mode-n unfoldings of a K x K x K array, laid out to match khatri_rao:
//   X1 = A (C . B)',  X2 = B (C . A)',  X3 = C (B . A)'
Matrix core_unfold(const CoreArray& G, int mode) {
    const int K = G.K;
    Matrix M(K, K * K);
    for (int u = 0; u < K; ++u)
        for (int t = 0; t < K; ++t)
            for (int v = 0; v < K; ++v) {
                const double x = G.at(u, t, v);
                if (mode == 0) M(u, v * K + t) = x;
                else if (mode == 1) M(t, v * K + u) = x;
                else M(v, t * K + u) = x;
            }
    return M;
}

double core_sq_error(const CoreArray& G) {
    Matrix rec = G.A * khatri_rao(G.C, G.B).transpose();
    return (core_unfold(G, 0) - rec).squaredNorm();
}

}  // namespace

double default_bandwidth(const LongitudinalTensor& X) {
    const int T = X.times();
    // count ordered pairs (s != t) co-observed by at least one subject
    Matrix co = Matrix::Zero(T, T);
    for (int i = 0; i < X.subjects(); ++i) {
        const auto& times = X.observed_times(i);
        for (int s : times)
            for (int t : times)
                if (s != t) co(s, t) = 1.0;
    }
    const double n_pairs = co.sum();
    return static_cast<double>(T) / std::sqrt(1.0 + n_pairs);
}

Matrix feature_basis(const LongitudinalTensor& X, int K, std::uint64_t seed,
                     int* rank_deficit) {
    const int J = X.features();
    if (K > J) throw std::invalid_argument("feature_basis: K exceeds feature count");

    // Gram of the observed columns of X_J; left singular vectors are its
    // eigenvectors.
    Matrix gram = Matrix::Zero(J, J);
    for (int i = 0; i < X.subjects(); ++i)
        for (int t : X.observed_times(i)) {
            const auto x = X.slice(i, t);
            gram.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0);
        }
    gram = gram.selfadjointView<Eigen::Lower>();

    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("feature_basis: eigensolver failed");
    const double max_eig = std::max(es.eigenvalues().maxCoeff(), 0.0);
    const double tol = std::max(1e-12, 1e-10 * max_eig);

    Matrix V(J, K);
    int filled = 0;
    for (int k = 0; k < K; ++k) {
        const double eig = es.eigenvalues()[J - 1 - k];
        if (eig <= tol) break;
        V.col(k) = es.eigenvectors().col(J - 1 - k);
        ++filled;
    }
    if (rank_deficit) *rank_deficit = K - filled;
    if (filled < K) {
        // random orthonormal completion
        auto rng = make_rng(seed, 0xfb01);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int k = filled; k < K; ++k) {
            Vector v(J);
            for (int j = 0; j < J; ++j) v[j] = gauss(rng);
            for (int m = 0; m < k; ++m) v -= V.col(m).dot(v) * V.col(m);
            const double n = v.norm();
            if (n < 1e-12) { --k; continue; }
            V.col(k) = v / n;
        }
    }
    fix_signs(V);
    return V;
}

Matrix temporal_basis(const LongitudinalTensor& X, const Matrix& Vperp, double hG,
                      bool raw_hook, std::vector<std::string>* warnings) {
    const int T = X.times();
    const int K = static_cast<int>(Vperp.cols());
    if (!(hG > 0) && !raw_hook)
        throw std::invalid_argument("temporal_basis: bandwidth must be positive");

    // projections Y_{it}(k) = x_{it}' Vperp_k at observed cells
    // W_i(s,t) = sum_k Y_is(k) Y_it(k) aggregated over subjects:
    //   count(s,t) and sum(s,t)
    Matrix count = Matrix::Zero(T, T);
    Matrix sum = Matrix::Zero(T, T);
    for (int i = 0; i < X.subjects(); ++i) {
        const auto& times = X.observed_times(i);
        Matrix y(static_cast<int>(times.size()), K);
        for (size_t a = 0; a < times.size(); ++a)
            y.row(static_cast<int>(a)) = (Vperp.transpose() * X.slice(i, times[a])).transpose();
        for (size_t a = 0; a < times.size(); ++a)
            for (size_t b = 0; b < times.size(); ++b) {
                const double w = y.row(static_cast<int>(a)).dot(y.row(static_cast<int>(b)));
                count(times[a], times[b]) += 1.0;
                sum(times[a], times[b]) += w;
            }
    }

    Matrix W(T, T);
    if (raw_hook) {
        // raw averages: top eigenvectors of sum_k Y(k)'Y(k) / I
        W = sum / static_cast<double>(X.subjects());
        return top_eigenvectors(W, K);
    }

    bool any_offdiag = false;
    for (int s = 0; s < T && !any_offdiag; ++s)
        for (int t = 0; t < T; ++t)
            if (s != t && count(s, t) > 0) { any_offdiag = true; break; }

    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * hG)));

    // diagonal: 1-D local linear regression on {(t, W_i(t,t))}
    Vector diag_fit(T);
    for (int t0 = 0; t0 < T; ++t0) {
        Eigen::Matrix2d G = Eigen::Matrix2d::Zero();
        Eigen::Vector2d r = Eigen::Vector2d::Zero();
        for (int t = std::max(0, t0 - radius); t < std::min(T, t0 + radius + 1); ++t) {
            if (count(t, t) <= 0) continue;
            const double u = (t - t0) / hG;
            const double w = std::exp(-0.5 * u * u);
            const Eigen::Vector2d d(1.0, static_cast<double>(t - t0));
            G += w * count(t, t) * d * d.transpose();
            r += w * sum(t, t) * d;
        }
        G(0, 0) += 1e-12; G(1, 1) += 1e-12;
        diag_fit[t0] = G.ldlt().solve(r)[0];
    }

    if (!any_offdiag) {
        if (warnings)
            warnings->push_back("temporal_basis: no co-observed time pairs, using diagonal-only smoothing");
        W = diag_fit.asDiagonal();
        return top_eigenvectors(W, K);
    }

    // off-diagonal: local linear surface fit over co-observed (s != t) pairs;
    // evaluated on the upper triangle and mirrored so W is exactly symmetric
    W.setZero();
    for (int s0 = 0; s0 < T; ++s0) {
        for (int t0 = s0 + 1; t0 < T; ++t0) {
            Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
            Eigen::Vector3d r = Eigen::Vector3d::Zero();
            for (int s = std::max(0, s0 - radius); s < std::min(T, s0 + radius + 1); ++s) {
                for (int t = std::max(0, t0 - radius); t < std::min(T, t0 + radius + 1); ++t) {
                    if (s == t || count(s, t) <= 0) continue;
                    const double us = (s - s0) / hG;
                    const double ut = (t - t0) / hG;
                    const double w = std::exp(-0.5 * (us * us + ut * ut));
                    const Eigen::Vector3d d(1.0, static_cast<double>(s - s0),
                                            static_cast<double>(t - t0));
                    G += w * count(s, t) * d * d.transpose();
                    r += w * sum(s, t) * d;
                }
            }
            for (int m = 0; m < 3; ++m) G(m, m) += 1e-12;
            const double fit = G.ldlt().solve(r)[0];
            W(s0, t0) = fit;
            W(t0, s0) = fit;
        }
        W(s0, s0) = diag_fit[s0];
    }
    return top_eigenvectors(W, K);
}

Matrix score_regression(const LongitudinalTensor& X, const Matrix& Vperp,
                        const Matrix& Phiperp, double delta) {
    if (delta < 0) throw std::invalid_argument("score_regression: delta must be >= 0");
    const int I = X.subjects();
    const int K = static_cast<int>(Vperp.cols());
    const int KK = K * K;
    const Matrix VtV = Vperp.transpose() * Vperp;

    Matrix U(I, KK);
    for (int i = 0; i < I; ++i) {
        Matrix G = Matrix::Zero(KK, KK);
        Vector rhs = Vector::Zero(KK);
        for (int t : X.observed_times(i)) {
            const Vector phi_t = Phiperp.row(t).transpose();
            const Matrix pp = phi_t * phi_t.transpose();
            // sum_j (v_j x phi_t)(v_j x phi_t)' = (V'V) kron (phi phi')
            for (int k1 = 0; k1 < K; ++k1)
                for (int k2 = 0; k2 < K; ++k2)
                    G.block(k1 * K, k2 * K, K, K) += VtV(k1, k2) * pp;
            const Vector proj = Vperp.transpose() * X.slice(i, t);
            for (int k1 = 0; k1 < K; ++k1)
                rhs.segment(k1 * K, K) += proj[k1] * phi_t;
        }
        G += delta * Matrix::Identity(KK, KK);
        U.row(i) = G.ldlt().solve(rhs).transpose();
    }
    return U;
}

CoreParafacResult core_parafac(const Matrix& Utilde, int K, int iters,
                               std::vector<double>* sweep_errors,
                               std::vector<std::string>* warnings) {
    const int KK = K * K;
    if (Utilde.cols() != KK)
        throw std::invalid_argument("core_parafac: expected K^2 columns");

    Eigen::BDCSVD<Matrix> svd(Utilde, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Matrix Uperp = svd.matrixU().leftCols(K);
    fix_signs(Uperp);
    const Matrix Gt = Uperp.transpose() * Utilde;  // K x K^2

    CoreArray core;
    core.K = K;
    core.G.assign(static_cast<size_t>(K) * K * K, 0.0);
    // column k1*K + k2 of the Kronecker basis pairs feature-factor k1 with
    // time-factor k2
    for (int u = 0; u < K; ++u)
        for (int k1 = 0; k1 < K; ++k1)
            for (int k2 = 0; k2 < K; ++k2) core.at(u, k2, k1) = Gt(u, k1 * K + k2);

    // ALS on the core, SVD-initialized
    const Matrix X1 = core_unfold(core, 0);
    const Matrix X2 = core_unfold(core, 1);
    const Matrix X3 = core_unfold(core, 2);
    auto svd_init = [&](const Matrix& M) {
        Eigen::JacobiSVD<Matrix> s(M, Eigen::ComputeThinU);
        Matrix F = s.matrixU().leftCols(K);
        fix_signs(F);
        return F;
    };
    core.A = svd_init(X1);
    core.B = svd_init(X2);
    core.C = svd_init(X3);

    auto solve_factor = [&](const Matrix& Xn, const Matrix& P, const Matrix& Q) {
        // argmin |Xn - F (P . Q)'|_F^2  =>  F = Xn (P . Q) [(P'P).*(Q'Q)]^-1
        const Matrix KR = khatri_rao(P, Q);
        const Matrix gram = (P.transpose() * P).cwiseProduct(Q.transpose() * Q);
        Matrix reg = gram + 1e-12 * Matrix::Identity(K, K);
        return Matrix((reg.ldlt().solve((Xn * KR).transpose())).transpose());
    };

    double prev = core_sq_error(core);
    if (sweep_errors) sweep_errors->push_back(prev);
    bool converged = false;
    for (int it = 0; it < iters; ++it) {
        core.A = solve_factor(X1, core.C, core.B);
        core.B = solve_factor(X2, core.C, core.A);
        core.C = solve_factor(X3, core.B, core.A);
        const double err = core_sq_error(core);
        if (sweep_errors) sweep_errors->push_back(err);
        if (std::abs(prev - err) <= 1e-10 * std::max(1.0, prev)) {
            converged = true;
            prev = err;
            break;
        }
        prev = err;
    }
    if (!converged && warnings)
        warnings->push_back("core_parafac: ALS hit the sweep limit, returning best iterate");

    CoreParafacResult out;
    out.core = std::move(core);
    out.Uperp = std::move(Uperp);
    return out;
}

InitResult initialize(const LongitudinalTensor& X, int q, const InitConfig& config) {
    const int K = config.K;
    if (K < 1 || K > std::min({X.subjects(), X.times(), X.features()}))
        throw std::invalid_argument("initialize: K must satisfy 1 <= K <= min(I,T,J)");

    InitResult out;
    out.delta = config.ridge_delta >= 0
                    ? config.ridge_delta
                    : 1.0 / std::sqrt(static_cast<double>(X.features()) * X.times());
    out.hG = config.bandwidth_hG > 0 ? config.bandwidth_hG : default_bandwidth(X);

    int rank_deficit = 0;
    const Matrix Vperp = feature_basis(X, K, config.seed, &rank_deficit);
    if (rank_deficit > 0)
        out.warnings.push_back("feature_basis: rank deficit, padded " +
                               std::to_string(rank_deficit) + " columns randomly");
    const Matrix Phiperp =
        temporal_basis(X, Vperp, out.hG, config.raw_temporal_basis, &out.warnings);
    const Matrix Utilde = score_regression(X, Vperp, Phiperp, out.delta);
    CoreParafacResult cp = core_parafac(Utilde, K, config.core_als_iters, nullptr, &out.warnings);
    out.core = std::move(cp.core);

    out.U = cp.Uperp * out.core.A;
    Matrix Phi = Phiperp * out.core.B;
    Matrix V = Vperp * out.core.C;

    // rescale to the model constraints, scores absorb the freed scale
    const double T = static_cast<double>(X.times());
    for (int k = 0; k < K; ++k) {
        double nv = V.col(k).norm();
        double np = Phi.col(k).norm();
        if (nv < 1e-12 || np < 1e-12) {
            out.warnings.push_back("initialize: degenerate factor " + std::to_string(k) +
                                   ", reseeded randomly");
            auto rng = make_rng(config.seed, 0xdead, k);
            std::normal_distribution<double> gauss(0.0, 1.0);
            if (nv < 1e-12)
                for (int j = 0; j < V.rows(); ++j) V(j, k) = gauss(rng);
            if (np < 1e-12)
                for (int t = 0; t < Phi.rows(); ++t) Phi(t, k) = gauss(rng);
            nv = V.col(k).norm();
            np = Phi.col(k).norm();
        }
        V.col(k) /= nv;
        Phi.col(k) *= std::sqrt(T) / np;
        out.U.col(k) *= nv * np / std::sqrt(T);
    }

    SpacoParams& p = out.params;
    p.V = V;
    p.Phi = Phi;
    p.beta = Matrix::Zero(q, K);
    p.lambda1 = Vector::Zero(K);
    p.lambda2 = Vector::Zero(K);
    p.penalty = difference_penalty(X.grid());

    p.s2.resize(K);
    for (int k = 0; k < K; ++k) {
        const double m = out.U.col(k).mean();
        p.s2[k] = std::max((out.U.col(k).array() - m).square().mean(), 1e-10);
    }

    // residual noise variance per feature over observed cells
    p.sigma2.resize(X.features());
    Vector rss = Vector::Zero(X.features());
    long n_obs = 0;
    for (int i = 0; i < X.subjects(); ++i)
        for (int t : X.observed_times(i)) {
            Vector fitted = Vector::Zero(X.features());
            for (int k = 0; k < K; ++k)
                fitted += out.U(i, k) * Phi(t, k) * V.col(k);
            rss += (X.slice(i, t) - fitted).cwiseAbs2();
            ++n_obs;
        }
    for (int j = 0; j < X.features(); ++j)
        p.sigma2[j] = std::max(n_obs > 0 ? rss[j] / static_cast<double>(n_obs) : 1.0, 1e-10);

    return out;
}

}  // namespace spaco
