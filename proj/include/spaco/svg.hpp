#pragma once

#include <string>
#include <vector>

#include "spaco/tensor.hpp"

namespace spaco {

// Static SVG figures for the CLI; plotting never feeds back into numbers.

// Line plot of each trajectory column over the time grid.
std::string svg_trajectories(const Matrix& Phi, const std::vector<double>& grid);

// Horizontal bar chart of the entries of one loading column.
std::string svg_loadings(const Vector& v, const std::vector<std::string>& labels,
                         const std::string& title);

// -log10(p) per covariate, one panel per factor.
std::string svg_manhattan(const Matrix& pvalues, const std::vector<std::string>& names,
                          const std::string& title);

}  // namespace spaco
