#include "spaco/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spaco {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string header(int w, int h) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return os.str();
}

}  // namespace

std::string svg_trajectories(const Matrix& Phi, const std::vector<double>& grid) {
    const int W = 640, H = 400, pad = 50;
    std::ostringstream os;
    os << header(W, H);
    if (Phi.rows() < 2) return os.str() + "</svg>\n";

    const double tmin = grid.front(), tmax = grid.back();
    double lo = Phi.minCoeff(), hi = Phi.maxCoeff();
    if (hi - lo < 1e-12) { hi += 1.0; lo -= 1.0; }
    auto xm = [&](double t) { return pad + (W - 2 * pad) * (t - tmin) / (tmax - tmin); };
    auto ym = [&](double v) { return H - pad - (H - 2 * pad) * (v - lo) / (hi - lo); };

    os << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\""
       << H - pad << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
       << H - pad << "\" stroke=\"black\"/>\n";
    if (lo < 0 && hi > 0)
        os << "<line x1=\"" << pad << "\" y1=\"" << ym(0) << "\" x2=\"" << W - pad
           << "\" y2=\"" << ym(0) << "\" stroke=\"#cccccc\" stroke-dasharray=\"4\"/>\n";

    for (int k = 0; k < Phi.cols(); ++k) {
        os << "<polyline fill=\"none\" stroke=\"" << kPalette[k % 8]
           << "\" stroke-width=\"2\" points=\"";
        for (int t = 0; t < Phi.rows(); ++t)
            os << xm(grid[static_cast<size_t>(t)]) << ',' << ym(Phi(t, k)) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << W - pad + 5 << "\" y=\"" << ym(Phi(Phi.rows() - 1, k))
           << "\" font-size=\"12\" fill=\"" << kPalette[k % 8] << "\">k" << (k + 1)
           << "</text>\n";
    }
    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
       << "\" font-size=\"12\" text-anchor=\"middle\">time</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string svg_loadings(const Vector& v, const std::vector<std::string>& labels,
                         const std::string& title) {
    const int rows = static_cast<int>(v.size());
    const int W = 640, row_h = 18, pad = 40;
    const int H = pad * 2 + rows * row_h;
    std::ostringstream os;
    os << header(W, H);
    os << "<text x=\"" << W / 2 << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">"
       << title << "</text>\n";
    const double amax = std::max(v.cwiseAbs().maxCoeff(), 1e-12);
    const double mid = W / 2.0;
    const double half = (W - 2 * pad) / 2.0;
    for (int r = 0; r < rows; ++r) {
        const double frac = v[r] / amax;
        const double x0 = frac >= 0 ? mid : mid + frac * half;
        const double width = std::abs(frac) * half;
        const double y = pad + r * row_h;
        os << "<rect x=\"" << x0 << "\" y=\"" << y << "\" width=\"" << std::max(width, 0.5)
           << "\" height=\"" << row_h - 4 << "\" fill=\""
           << (v[r] >= 0 ? "#1f77b4" : "#d62728") << "\"/>\n";
        if (r < static_cast<int>(labels.size()))
            os << "<text x=\"4\" y=\"" << y + row_h - 7 << "\" font-size=\"10\">" << labels[static_cast<size_t>(r)]
               << "</text>\n";
    }
    os << "<line x1=\"" << mid << "\" y1=\"" << pad - 4 << "\" x2=\"" << mid << "\" y2=\""
       << pad + rows * row_h << "\" stroke=\"black\"/>\n";
    os << "</svg>\n";
    return os.str();
}

std::string svg_manhattan(const Matrix& pvalues, const std::vector<std::string>& names,
                          const std::string& title) {
    const int q = static_cast<int>(pvalues.rows());
    const int K = static_cast<int>(pvalues.cols());
    const int W = std::max(640, q * 10 + 120), H = 360, pad = 50;
    std::ostringstream os;
    os << header(W, H);
    os << "<text x=\"" << W / 2 << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">"
       << title << "</text>\n";

    double max_nlp = 1.5;
    for (int j = 0; j < q; ++j)
        for (int k = 0; k < K; ++k) {
            const double p = pvalues(j, k);
            if (std::isfinite(p) && p > 0) max_nlp = std::max(max_nlp, -std::log10(p));
        }
    auto xm = [&](int j) {
        return pad + (W - 2.0 * pad) * (q > 1 ? static_cast<double>(j) / (q - 1) : 0.5);
    };
    auto ym = [&](double nlp) { return H - pad - (H - 2.0 * pad) * nlp / max_nlp; };

    os << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\""
       << H - pad << "\" stroke=\"black\"/>\n";
    const double thresh = -std::log10(0.05);
    os << "<line x1=\"" << pad << "\" y1=\"" << ym(thresh) << "\" x2=\"" << W - pad
       << "\" y2=\"" << ym(thresh) << "\" stroke=\"#1f77b4\" stroke-dasharray=\"4\"/>\n";

    for (int j = 0; j < q; ++j) {
        for (int k = 0; k < K; ++k) {
            const double p = pvalues(j, k);
            if (!std::isfinite(p) || p <= 0) continue;
            os << "<circle cx=\"" << xm(j) << "\" cy=\"" << ym(-std::log10(p))
               << "\" r=\"3\" fill=\"" << kPalette[k % 8] << "\" fill-opacity=\"0.8\"/>\n";
        }
        if (q <= 40 && j < static_cast<int>(names.size()))
            os << "<text x=\"" << xm(j) << "\" y=\"" << H - pad + 14
               << "\" font-size=\"9\" text-anchor=\"middle\">" << names[static_cast<size_t>(j)]
               << "</text>\n";
    }
    os << "<text x=\"14\" y=\"" << H / 2
       << "\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2
       << ")\" text-anchor=\"middle\">-log10(p)</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace spaco
