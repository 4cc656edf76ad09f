#include "spaco/skewt.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace spaco {

namespace {

// lgamma-based density avoids reconstructing the boost distribution in the
// likelihood hot loop; the CDF still goes through boost's incomplete beta.
double student_pdf_norm(double nu) {
    return std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu)) /
           std::sqrt(nu * M_PI);
}

double student_pdf_with_norm(double nu, double norm, double z) {
    return norm * std::pow(1.0 + z * z / nu, -0.5 * (nu + 1.0));
}

double student_pdf(double nu, double z) {
    return student_pdf_with_norm(nu, student_pdf_norm(nu), z);
}

double student_cdf(double nu, double z) {
    boost::math::students_t dist(nu);
    return boost::math::cdf(dist, z);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double fa, double fm, double fb, double whole, double tol,
                        int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-11) {
    if (!(b > a)) return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

// Nelder-Mead on an unconstrained parametrization.
struct SimplexResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
};

SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> start, double step, int max_iter) {
    const size_t n = start.size();
    std::vector<std::vector<double>> pts(n + 1, start);
    std::vector<double> vals(n + 1);
    for (size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
    for (size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);

    for (int it = 0; it < max_iter; ++it) {
        std::vector<size_t> order(n + 1);
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return vals[a] < vals[b]; });
        std::vector<std::vector<double>> spts(n + 1);
        std::vector<double> svals(n + 1);
        for (size_t i = 0; i <= n; ++i) { spts[i] = pts[order[i]]; svals[i] = vals[order[i]]; }
        pts = spts; vals = svals;

        if (std::abs(vals[n] - vals[0]) <= 1e-8 * (std::abs(vals[0]) + 1e-8)) break;

        std::vector<double> centroid(n, 0.0);
        for (size_t i = 0; i < n; ++i)
            for (size_t d = 0; d < n; ++d) centroid[d] += pts[i][d] / static_cast<double>(n);

        auto blend = [&](double coef) {
            std::vector<double> p(n);
            for (size_t d = 0; d < n; ++d) p[d] = centroid[d] + coef * (pts[n][d] - centroid[d]);
            return p;
        };
        const auto refl = blend(-1.0);
        const double f_refl = f(refl);
        if (f_refl < vals[0]) {
            const auto exp_p = blend(-2.0);
            const double f_exp = f(exp_p);
            if (f_exp < f_refl) { pts[n] = exp_p; vals[n] = f_exp; }
            else { pts[n] = refl; vals[n] = f_refl; }
        } else if (f_refl < vals[n - 1]) {
            pts[n] = refl; vals[n] = f_refl;
        } else {
            const auto con = blend(0.5);
            const double f_con = f(con);
            if (f_con < vals[n]) { pts[n] = con; vals[n] = f_con; }
            else {
                for (size_t i = 1; i <= n; ++i) {
                    for (size_t d = 0; d < n; ++d) pts[i][d] = pts[0][d] + 0.5 * (pts[i][d] - pts[0][d]);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    size_t best = 0;
    for (size_t i = 1; i <= n; ++i)
        if (vals[i] < vals[best]) best = i;
    return {pts[best], vals[best]};
}

SkewTParams unpack(const std::vector<double>& x) {
    SkewTParams p;
    p.xi = x[0];
    p.omega = std::exp(std::clamp(x[1], -20.0, 20.0));
    p.alpha = std::clamp(x[2], -50.0, 50.0);
    p.nu = std::clamp(std::exp(x[3]), 0.8, 200.0);
    return p;
}

}  // namespace

double skew_t_pdf(const SkewTParams& p, double x) {
    const double z = (x - p.xi) / p.omega;
    const double arg = p.alpha * z * std::sqrt((p.nu + 1.0) / (p.nu + z * z));
    return 2.0 / p.omega * student_pdf(p.nu, z) * student_cdf(p.nu + 1.0, arg);
}

double skew_t_cdf(const SkewTParams& p, double x) {
    // integrate the density over z with the substitution z = tan(theta)
    const double zq = (x - p.xi) / p.omega;
    const double hi = std::atan(zq);
    auto g = [&](double theta) {
        const double z = std::tan(theta);
        const double c = std::cos(theta);
        const double jac = 1.0 / (c * c);
        const double arg = p.alpha * z * std::sqrt((p.nu + 1.0) / (p.nu + z * z));
        return 2.0 * student_pdf(p.nu, z) * student_cdf(p.nu + 1.0, arg) * jac;
    };
    const double v = integrate(g, -M_PI / 2.0 + 1e-12, hi);
    return std::clamp(v, 0.0, 1.0);
}

SkewTFit fit_skew_t(const std::vector<double>& draws) {
    SkewTFit fit;
    const size_t n = draws.size();
    if (n < 8) return fit;

    const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(n);
    double var = 0.0, skew = 0.0;
    for (double d : draws) {
        var += (d - mean) * (d - mean);
        skew += (d - mean) * (d - mean) * (d - mean);
    }
    var /= static_cast<double>(n);
    if (!(var > 0)) return fit;
    skew /= static_cast<double>(n) * std::pow(var, 1.5);

    auto nll = [&](const std::vector<double>& x) {
        const SkewTParams p = unpack(x);
        const double norm = student_pdf_norm(p.nu);
        const double tail = std::sqrt(p.nu + 1.0);
        boost::math::students_t skew_dist(p.nu + 1.0);
        double total = 0.0;
        for (double d : draws) {
            const double z = (d - p.xi) / p.omega;
            const double arg = p.alpha * z * tail / std::sqrt(p.nu + z * z);
            const double f = 2.0 / p.omega * student_pdf_with_norm(p.nu, norm, z) *
                             boost::math::cdf(skew_dist, arg);
            if (!(f > 0) || !std::isfinite(f)) return 1e100;
            total -= std::log(f);
        }
        return std::isfinite(total) ? total : 1e100;
    };

    std::vector<double> start = {mean, 0.5 * std::log(var),
                                 std::clamp(2.0 * skew, -3.0, 3.0), std::log(8.0)};
    SimplexResult best = nelder_mead(nll, start, 0.25, 350);
    // one restart from the solution with a smaller step
    best = nelder_mead(nll, best.x, 0.05, 150);

    if (best.f >= 1e99 || !std::isfinite(best.f)) return fit;
    fit.params = unpack(best.x);
    fit.nll = best.f;
    fit.success = true;

    std::vector<double> sorted = draws;
    std::sort(sorted.begin(), sorted.end());
    // cumulative CDF along the sorted draws: one full integral, then segments
    const SkewTParams& p = fit.params;
    auto seg = [&](double a, double b) {
        const double lo = std::atan((a - p.xi) / p.omega);
        const double hi = std::atan((b - p.xi) / p.omega);
        auto g = [&](double theta) {
            const double z = std::tan(theta);
            const double c = std::cos(theta);
            const double arg = p.alpha * z * std::sqrt((p.nu + 1.0) / (p.nu + z * z));
            return 2.0 * student_pdf(p.nu, z) * student_cdf(p.nu + 1.0, arg) / (c * c);
        };
        return integrate(g, lo, hi);
    };
    double ks = 0.0;
    double g_cum = skew_t_cdf(p, sorted[0]);
    for (size_t i = 0; i < n; ++i) {
        if (i > 0) g_cum += seg(sorted[i - 1], sorted[i]);
        const double g = std::clamp(g_cum, 0.0, 1.0);
        const double lo = static_cast<double>(i) / static_cast<double>(n);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
        ks = std::max({ks, std::abs(g - lo), std::abs(g - hi)});
    }
    fit.ks_distance = ks;
    return fit;
}

}  // namespace spaco
