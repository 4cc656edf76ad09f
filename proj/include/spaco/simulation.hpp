#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spaco/inference.hpp"
#include "spaco/model.hpp"
#include "spaco/solver.hpp"

namespace spaco {

// One benchmark scenario: K = 3 factors with trajectories
//   phi_1(t) = theta_1, phi_2(t) = theta_2 sqrt(1 - (t/T)^2),
//   phi_3(t) = theta_3 cos(4 pi t / T),  t = 1..T,
// unit noise, V_jk ~ N(0, 1/J), Z_il ~ N(0,1), beta rows 1..3 ~ c2 N(0, log q / I),
// per-subject time points kept independently with probability gamma.
struct ScenarioConfig {
    int I = 100;
    int T = 30;
    int J = 10;
    int q = 100;
    int K = 3;
    double gamma = 1.0;  // observation rate
    double c1 = 1.0;     // trajectory signal strength
    double c2 = 0.0;     // covariate signal strength
    int n_reps = 1;
    std::uint64_t seed = 0;
};

struct SimData {
    LongitudinalTensor X;
    CovariateMatrix Z;
    DenseTensor F;      // noiseless signal at every cell
    Matrix beta_true;   // q x K before score standardization
    Matrix U_true;      // I x K standardized scores
    Vector theta;       // K trajectory scales
    int resampled = 0;  // subjects redrawn to guarantee >= 1 observed point

    explicit SimData(LongitudinalTensor x) : X(std::move(x)) {}
};

SimData generate(const ScenarioConfig& config, std::uint64_t rep_seed);

// Pearson correlation / mean squared error over all I*T*J cells.
double score_reconstruction(const DenseTensor& Fhat, const DenseTensor& F);
double score_mse(const DenseTensor& Fhat, const DenseTensor& F);
// Same restricted to observed cells (the raw-data baseline has no values
// elsewhere).
double score_reconstruction_masked(const DenseTensor& Fhat, const DenseTensor& F,
                                   const LongitudinalTensor& mask_src);

struct BenchResult {
    int table_id = 0;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Matrix mean;  // rows x cols, NaN where undefined
    Matrix se;
};

struct BenchConfig {
    int scale = 5;  // repetitions per scenario
    std::uint64_t seed = 0;
    // Desk-scale dimension overrides (defaults reproduce the published grid).
    int I = 100;
    int T = 30;
    int J_small = 10;
    int J_large = 500;
    int q = 100;
    int fit_max_iters = 100;
    int test_B = 100;
    int crossfit_M = 5;
};

// Tables: 2 = reconstruction correlations (raw / no-covariate / covariate),
// 3 = cross-fitted vs plain MSE ratios, 4 = partial-test type-I error and
// power, 5 = the same for the marginal test.
BenchResult run_table(int table_id, const BenchConfig& config);

// Shared fit driver for benchmark runs: initialization followed by the EM
// solver with auto-tuned penalties.
SpacoFit fit_scenario(const LongitudinalTensor& X, const CovariateMatrix& Z,
                      int K, std::uint64_t seed, int max_outer_iters = 100);

}  // namespace spaco
