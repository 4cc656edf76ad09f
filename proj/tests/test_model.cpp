#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "spaco/model.hpp"

using namespace spaco;

namespace {

SpacoParams scalar_params(double v, double phi, double s2, double sigma2) {
    SpacoParams p;
    p.V = Matrix::Constant(1, 1, v);
    p.Phi = Matrix::Constant(1, 1, phi);
    p.beta = Matrix::Zero(0, 1);
    p.s2 = Vector::Constant(1, s2);
    p.sigma2 = Vector::Constant(1, sigma2);
    p.lambda1 = Vector::Zero(1);
    p.lambda2 = Vector::Zero(1);
    return p;
}

}  // namespace

TEST_CASE("posterior: subject with no observations recovers the prior") {
    std::mt19937_64 rng(3);
    LongitudinalTensor X = oracle::random_tensor(3, 4, 2, 0.8, rng);
    std::vector<uint8_t> mask(3 * 4, 1);
    for (int t = 0; t < 4; ++t) mask[1 * 4 + t] = 0;  // subject 1 fully masked
    std::vector<double> vals(3 * 4 * 2, 0.5);
    LongitudinalTensor X2(3, 4, 2, X.grid(), vals, mask);

    SpacoParams p = oracle::random_params(2, 4, 0, 1, rng, X.grid());
    const PosteriorMoments post = posterior_moments(p, X2, CovariateMatrix());
    CHECK(post.mu(1, 0) == doctest::Approx(0.0));
    CHECK(post.Sigma[1](0, 0) == doctest::Approx(p.s2[0]).epsilon(1e-12));
}

TEST_CASE("posterior: scalar conjugate Gaussian case") {
    // K=1, one observed cell x, V=Phi=1, s2=sigma2=1: Sigma = 1/2, mu = x/2
    LongitudinalTensor X(1, 1, 1, TimeGrid({1.0}));
    X.at(0, 0, 0) = 0.8;
    const SpacoParams p = scalar_params(1.0, 1.0, 1.0, 1.0);
    const PosteriorMoments post = posterior_moments(p, X, CovariateMatrix());
    CHECK(post.Sigma[0](0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(post.mu(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("posterior: matches dense Gaussian conditioning oracle") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        const int K = 1 + static_cast<int>(rep % 3);
        LongitudinalTensor X = oracle::random_tensor(4, 3, 3, 0.6, rng);
        const CovariateMatrix Z = oracle::random_covariates(4, 2, rng);
        const SpacoParams p = oracle::random_params(3, 3, 2, K, rng, X.grid());
        const PosteriorMoments post = posterior_moments(p, X, Z);
        for (int i = 0; i < 4; ++i) {
            Vector mu;
            Matrix Sigma;
            oracle::dense_posterior(p, X, Z, i, mu, Sigma);
            CHECK((post.mu.row(i).transpose() - mu).cwiseAbs().maxCoeff() < 1e-10);
            CHECK((post.Sigma[static_cast<size_t>(i)] - Sigma).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("posterior consistency: Sigma^-1 mu - Lam_f beta'z equals hx") {
    std::mt19937_64 rng(23);
    LongitudinalTensor X = oracle::random_tensor(6, 4, 3, 0.7, rng);
    const CovariateMatrix Z = oracle::random_covariates(6, 3, rng);
    const SpacoParams p = oracle::random_params(3, 4, 3, 2, rng, X.grid());
    const PosteriorMoments post = posterior_moments(p, X, Z);
    for (int i = 0; i < 6; ++i) {
        const Vector b = p.beta.transpose() * Z.Z.row(i).transpose();
        const Vector lhs = post.Sigma[static_cast<size_t>(i)].ldlt().solve(
                               post.mu.row(i).transpose()) -
                           Vector(p.s2.cwiseInverse().cwiseProduct(b));
        CHECK((lhs - post.hx.row(i).transpose()).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("marginal loglik: subject with no observations contributes zero") {
    std::vector<uint8_t> mask = {1, 0};  // subject 2 empty
    std::vector<double> vals = {1.2, 0.0};
    LongitudinalTensor X(2, 1, 1, TimeGrid({1.0}), vals, mask);
    const SpacoParams p = scalar_params(1.0, 1.0, 0.9, 1.3);

    std::vector<uint8_t> mask1 = {1};
    std::vector<double> vals1 = {1.2};
    LongitudinalTensor X1(1, 1, 1, TimeGrid({1.0}), vals1, mask1);

    const double two = marginal_loglik(p, X, CovariateMatrix());
    const double one = marginal_loglik(p, X1, CovariateMatrix());
    CHECK(two == doctest::Approx(one).epsilon(1e-12));
}

TEST_CASE("marginal loglik: scalar case matches the closed-form normal") {
    LongitudinalTensor X(1, 1, 1, TimeGrid({1.0}));
    X.at(0, 0, 0) = -0.4;
    SpacoParams p = scalar_params(0.8, 1.2, 0.7, 0.5);
    Matrix beta(1, 1);
    beta << 0.3;
    p.beta = beta;
    Matrix z(1, 1);
    z << 1.5;
    const CovariateMatrix Z(z, {ColumnKind::gaussian});

    const double mean = 0.8 * 1.2 * 0.3 * 1.5;
    const double var = 0.8 * 0.8 * 1.2 * 1.2 * 0.7 + 0.5;
    const double x = -0.4;
    const double expected = -0.5 * ((x - mean) * (x - mean) / var + std::log(var));
    CHECK(marginal_loglik(p, X, Z) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("marginal loglik: matches dense MVN oracle on random instances") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        const int K = 1 + rep % 3;
        LongitudinalTensor X = oracle::random_tensor(3, 3, 2, 0.7, rng);
        const CovariateMatrix Z = oracle::random_covariates(3, 2, rng);
        const SpacoParams p = oracle::random_params(2, 3, 2, K, rng, X.grid());
        const double lib = marginal_loglik(p, X, Z);
        const double ref = oracle::dense_loglik(p, X, Z);
        CHECK(lib == doctest::Approx(ref).epsilon(1e-8));
    }
}

TEST_CASE("marginal loglik: unobserved time rows change nothing") {
    std::mt19937_64 rng(37);
    LongitudinalTensor X = oracle::random_tensor(4, 3, 2, 1.0, rng);
    const SpacoParams p3 = oracle::random_params(2, 3, 0, 2, rng, X.grid());

    // same data with one extra, fully masked time point appended
    LongitudinalTensor X4(4, 4, 2, TimeGrid({1.0, 2.0, 3.0, 4.0}));
    for (int i = 0; i < 4; ++i) {
        X4.set_observed(i, 3, false);
        for (int t = 0; t < 3; ++t)
            for (int j = 0; j < 2; ++j) X4.at(i, t, j) = X.at(i, t, j);
    }
    X4.refresh_mask_index();
    SpacoParams p4 = p3;
    p4.Phi.conservativeResize(4, Eigen::NoChange);
    p4.Phi.row(3).setZero();
    // keep |Phi_k|^2 = T on the longer grid
    for (int k = 0; k < 2; ++k) p4.Phi.col(k) *= 2.0 / std::sqrt(3.0);
    p4.penalty = difference_penalty(X4.grid());
    // rescaling Phi by c and s2 by 1/c^2 preserves the likelihood, so undo it
    const double c = 2.0 / std::sqrt(3.0);
    for (int k = 0; k < 2; ++k) p4.s2[k] = p3.s2[k] / (c * c);

    const PosteriorMoments m3 = posterior_moments(p3, X, CovariateMatrix());
    const PosteriorMoments m4 = posterior_moments(p4, X4, CovariateMatrix());
    // posterior means agree because the masked row contributes nothing and the
    // rescaling is absorbed by s2
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 2; ++k)
            CHECK(m4.mu(i, k) * c == doctest::Approx(m3.mu(i, k)).epsilon(1e-9));
    CHECK(marginal_loglik(p4, X4, CovariateMatrix()) ==
          doctest::Approx(marginal_loglik(p3, X, CovariateMatrix())).epsilon(1e-9));
}

TEST_CASE("penalized objective: parts and trivial cases") {
    std::mt19937_64 rng(41);
    LongitudinalTensor X = oracle::random_tensor(4, 3, 2, 0.8, rng);
    SpacoParams p = oracle::random_params(2, 3, 2, 2, rng, X.grid());
    const CovariateMatrix Z = oracle::random_covariates(4, 2, rng);

    SUBCASE("lambda = 0 gives total = -loglik/2") {
        const ObjectiveValue obj = penalized_objective(p, X, Z);
        CHECK(obj.smooth_penalty == 0.0);
        CHECK(obj.lasso_penalty == 0.0);
        CHECK(obj.total == doctest::Approx(-0.5 * marginal_loglik(p, X, Z)).epsilon(1e-12));
    }
    SUBCASE("beta = 0 gives zero lasso part at lambda2 = 1") {
        p.beta.setZero();
        p.lambda2 = Vector::Ones(2);
        const ObjectiveValue obj = penalized_objective(p, X, Z);
        CHECK(obj.lasso_penalty == 0.0);
    }
    SUBCASE("constant trajectory column gives zero smoothness part") {
        p.lambda1 = Vector::Ones(2);
        p.Phi.col(0).setOnes();  // |Phi|^2 = T preserved
        const ObjectiveValue obj = penalized_objective(p, X, Z);
        const double part1 =
            0.25 * p.Phi.col(1).dot(p.penalty.Omega * p.Phi.col(1));
        CHECK(obj.smooth_penalty == doctest::Approx(part1).epsilon(1e-12));
    }
    SUBCASE("total equals the sum of its parts") {
        p.lambda1 = Vector::Constant(2, 0.7);
        p.lambda2 = Vector::Constant(2, 0.3);
        const ObjectiveValue obj = penalized_objective(p, X, Z);
        CHECK(obj.total ==
              doctest::Approx(obj.neg_half_loglik + obj.smooth_penalty + obj.lasso_penalty)
                  .epsilon(1e-10));
    }
}

TEST_CASE("scaling invariance holds for c1*c2*c3 = 1 and rejects violations") {
    std::mt19937_64 rng(43);
    LongitudinalTensor X = oracle::random_tensor(5, 4, 3, 0.7, rng);
    const CovariateMatrix Z = oracle::random_covariates(5, 2, rng);
    const SpacoParams p = oracle::random_params(3, 4, 2, 2, rng, X.grid());

    CHECK(scaling_invariance_check(p, X, Z, 0, 1.0, 1.0, 1.0));
    CHECK(scaling_invariance_check(p, X, Z, 1, 2.0, 1.0, 0.5));

    std::uniform_real_distribution<double> unif(0.3, 3.0);
    for (int rep = 0; rep < 100; ++rep) {
        const double c1 = unif(rng);
        const double c2 = unif(rng);
        const double c3 = 1.0 / (c1 * c2);
        CHECK(scaling_invariance_check(p, X, Z, rep % 2, c1, c2, c3));
    }
    CHECK_THROWS_AS(scaling_invariance_check(p, X, Z, 0, 2.0, 2.0, 2.0),
                    std::invalid_argument);
}

TEST_CASE("order_factors sorts by s2 and fixes signs consistently") {
    std::mt19937_64 rng(47);
    LongitudinalTensor X = oracle::random_tensor(4, 3, 2, 1.0, rng);
    SpacoParams p = oracle::random_params(2, 3, 2, 3, rng, X.grid());
    p.s2 << 0.5, 2.0, 1.0;
    const CovariateMatrix Z = oracle::random_covariates(4, 2, rng);
    const double before = marginal_loglik(p, X, Z);
    order_factors(p);
    CHECK(p.s2[0] == 2.0);
    CHECK(p.s2[1] == 1.0);
    CHECK(p.s2[2] == 0.5);
    for (int k = 0; k < 3; ++k) {
        Eigen::Index arg = 0;
        p.V.col(k).cwiseAbs().maxCoeff(&arg);
        CHECK(p.V(arg, k) > 0);
    }
    CHECK(marginal_loglik(p, X, Z) == doctest::Approx(before).epsilon(1e-10));
}
