#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "spaco/lasso.hpp"

using namespace spaco;

TEST_CASE("lasso_cd: zero penalty reproduces least squares") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    Matrix X(30, 4);
    Vector beta_true(4);
    beta_true << 1.0, -2.0, 0.5, 0.0;
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 4; ++j) X(i, j) = gauss(rng);
    Vector y = X * beta_true;
    for (int i = 0; i < 30; ++i) y[i] += 0.1 * gauss(rng);

    const Vector beta = lasso_cd(X, y, 0.0, Vector());
    const Vector ols = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    CHECK((beta - ols).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("lasso_cd: penalty above lambda_max fully shrinks") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    Matrix X(20, 3);
    Vector y(20);
    for (int i = 0; i < 20; ++i) {
        y[i] = gauss(rng);
        for (int j = 0; j < 3; ++j) X(i, j) = gauss(rng);
    }
    const double lmax = lasso_lambda_max(X, y);
    const Vector beta = lasso_cd(X, y, lmax * 1.0001, Vector());
    CHECK(beta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lasso_cd: orthogonal design matches soft thresholding") {
    Matrix X(4, 2);
    X << 1, 0, -1, 0, 0, 1, 0, 1;
    Vector y(4);
    y << 2.0, -1.0, 0.5, 0.7;
    const double lambda = 0.4;
    const Vector beta = lasso_cd(X, y, lambda, Vector());
    auto soft = [&](double rho, double denom) {
        const double s = std::abs(rho) > lambda ? (rho > 0 ? rho - lambda : rho + lambda) : 0.0;
        return s / denom;
    };
    CHECK(beta[0] == doctest::Approx(soft(X.col(0).dot(y), 2.0)).epsilon(1e-12));
    CHECK(beta[1] == doctest::Approx(soft(X.col(1).dot(y), 2.0)).epsilon(1e-12));
}

TEST_CASE("lasso_cd: KKT conditions hold at the solution") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    Matrix X(40, 6);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 6; ++j) X(i, j) = gauss(rng);
    Vector y(40);
    for (int i = 0; i < 40; ++i) y[i] = gauss(rng);
    const double lambda = 4.0;
    const Vector beta = lasso_cd(X, y, lambda, Vector());
    const Vector grad = X.transpose() * (y - X * beta);
    for (int j = 0; j < 6; ++j) {
        if (beta[j] == 0.0)
            CHECK(std::abs(grad[j]) <= lambda + 1e-7);
        else
            CHECK(grad[j] == doctest::Approx(lambda * (beta[j] > 0 ? 1.0 : -1.0)).epsilon(1e-7));
    }
}

TEST_CASE("lasso_cd: excluded coordinate stays at zero") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> gauss;
    Matrix X(25, 3);
    for (int i = 0; i < 25; ++i)
        for (int j = 0; j < 3; ++j) X(i, j) = gauss(rng);
    const Vector y = X.col(1) * 3.0;
    const Vector beta = lasso_cd(X, y, 0.1, Vector(), 1e-9, 10000, 1);
    CHECK(beta[1] == 0.0);
}

TEST_CASE("lasso_cv: recovers sparse signal support and shrinks pure noise") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    const int n = 80, p = 10;
    Matrix X(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) X(i, j) = gauss(rng);

    SUBCASE("signal") {
        Vector beta_true = Vector::Zero(p);
        beta_true[0] = 2.0;
        beta_true[3] = -1.5;
        Vector y = X * beta_true;
        for (int i = 0; i < n; ++i) y[i] += 0.3 * gauss(rng);
        const auto cv = lasso_cv(X, y, 5, 99);
        CHECK(std::abs(cv.beta[0]) > 0.5);
        CHECK(std::abs(cv.beta[3]) > 0.5);
        CHECK(cv.path.front() > cv.path.back());
    }
    SUBCASE("pure noise keeps most coefficients at zero") {
        Vector y(n);
        for (int i = 0; i < n; ++i) y[i] = gauss(rng);
        const auto cv = lasso_cv(X, y, 5, 99);
        int nonzero = 0;
        for (int j = 0; j < p; ++j) nonzero += cv.beta[j] != 0.0 ? 1 : 0;
        CHECK(nonzero <= 4);
    }
}

TEST_CASE("logistic_lasso: recovers a strong slope") {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif;
    const int n = 2000;
    Matrix X(n, 2);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = gauss(rng);
        X(i, 1) = 1.0;  // intercept
        const double p = 1.0 / (1.0 + std::exp(-2.0 * X(i, 0)));
        y[i] = unif(rng) < p ? 1.0 : 0.0;
    }
    const Vector beta = logistic_lasso(X, y, 0.0);
    CHECK(std::abs(beta[0] - 2.0) < 0.3);
}
