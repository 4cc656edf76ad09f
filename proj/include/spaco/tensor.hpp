#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace spaco {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Sorted, strictly increasing measurement times shared by all subjects.
struct TimeGrid {
    std::vector<double> points;

    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> pts);

    int size() const { return static_cast<int>(points.size()); }
    double operator[](int t) const { return points[static_cast<size_t>(t)]; }
};

enum class UnfoldMode { subject, time, feature };

// One unfolding: the matrix in the block layout of the corresponding mode,
// plus the per-row column indices that are actually observed.
struct Unfolding {
    Matrix matrix;
    std::vector<std::vector<int>> observed_cols;
};

// I x T x J array with an (i,t) observation mask.  A time point is either
// fully observed (all J features) or missing for a subject; entries at
// masked-out cells are carried but ignored by every operation.
class LongitudinalTensor {
  public:
    LongitudinalTensor(int I, int T, int J, TimeGrid grid);
    LongitudinalTensor(int I, int T, int J, TimeGrid grid,
                       std::vector<double> values, std::vector<uint8_t> mask);

    // Copy/move transfer the data but not the unfolding cache (the cache is
    // rebuilt on demand; the mutex is never shared).
    LongitudinalTensor(const LongitudinalTensor& o);
    LongitudinalTensor& operator=(const LongitudinalTensor& o);
    LongitudinalTensor(LongitudinalTensor&& o) noexcept;
    LongitudinalTensor& operator=(LongitudinalTensor&& o) noexcept;

    int subjects() const { return I_; }
    int times() const { return T_; }
    int features() const { return J_; }
    const TimeGrid& grid() const { return grid_; }

    double& at(int i, int t, int j) { return values_[idx(i, t, j)]; }
    double at(int i, int t, int j) const { return values_[idx(i, t, j)]; }

    bool observed(int i, int t) const { return mask_[static_cast<size_t>(i) * T_ + t] != 0; }
    void set_observed(int i, int t, bool on) { mask_[static_cast<size_t>(i) * T_ + t] = on ? 1 : 0; }

    // Contiguous view of x_{i,t,:}.
    Eigen::Map<const Vector> slice(int i, int t) const {
        return Eigen::Map<const Vector>(values_.data() + idx(i, t, 0), J_);
    }
    Eigen::Map<Vector> slice(int i, int t) {
        return Eigen::Map<Vector>(values_.data() + idx(i, t, 0), J_);
    }

    const std::vector<int>& observed_times(int i) const { return obs_times_[static_cast<size_t>(i)]; }
    const std::vector<int>& subjects_at_time(int t) const { return obs_subjects_[static_cast<size_t>(t)]; }
    long total_observed() const { return total_observed_; }

    // Call after editing the mask directly; recomputes the observed-index
    // lists and drops cached unfoldings.
    void refresh_mask_index();

    // Unfoldings use the block layouts
    //   X_I (I x TJ): column (j,t) at j*T + t
    //   X_T (T x IJ): column (j,i) at j*I + i
    //   X_J (J x IT): column (t,i) at t*I + i
    // so X_I rows pair with khatri_rao(V, Phi) rows, X_T with khatri_rao(V, U),
    // X_J with khatri_rao(Phi, U).  Materialized lazily and cached.
    const Unfolding& unfold(UnfoldMode mode) const;

    // Restriction to a subset of subjects (values, mask and grid retained).
    LongitudinalTensor subset_subjects(const std::vector<int>& keep) const;

  private:
    size_t idx(int i, int t, int j) const {
        return (static_cast<size_t>(i) * T_ + t) * J_ + j;
    }
    void validate() const;

    int I_ = 0, T_ = 0, J_ = 0;
    TimeGrid grid_;
    std::vector<double> values_;
    std::vector<uint8_t> mask_;
    std::vector<std::vector<int>> obs_times_;     // per subject
    std::vector<std::vector<int>> obs_subjects_;  // per time
    long total_observed_ = 0;

    mutable std::mutex unfold_mutex_;
    mutable std::array<std::unique_ptr<Unfolding>, 3> unfold_cache_;
};

enum class ColumnKind { gaussian, binary };

// Per-subject auxiliary covariates.  q = 0 encodes the no-covariate model.
struct CovariateMatrix {
    Matrix Z;  // I x q
    std::vector<ColumnKind> column_kind;
    std::vector<std::string> names;

    CovariateMatrix() = default;
    CovariateMatrix(Matrix z, std::vector<ColumnKind> kinds);

    int subjects() const { return static_cast<int>(Z.rows()); }
    int count() const { return static_cast<int>(Z.cols()); }
    bool empty() const { return Z.cols() == 0; }

    CovariateMatrix subset_subjects(const std::vector<int>& keep) const;
};

// Weighted first differences Gamma ((T-1) x T) and Omega = Gamma' Gamma.
// Omega annihilates constant vectors and is PSD.
struct PenaltyMatrix {
    Matrix Gamma;
    Matrix Omega;
};

// Dense I x T x J array without a mask, used for signal/reconstruction
// values that exist at every cell.
struct DenseTensor {
    int I = 0, T = 0, J = 0;
    std::vector<double> values;

    DenseTensor() = default;
    DenseTensor(int i, int t, int j)
        : I(i), T(t), J(j), values(static_cast<size_t>(i) * t * j, 0.0) {}

    double& at(int i, int t, int j) {
        return values[(static_cast<size_t>(i) * T + t) * static_cast<size_t>(J) + j];
    }
    double at(int i, int t, int j) const {
        return values[(static_cast<size_t>(i) * T + t) * static_cast<size_t>(J) + j];
    }
};

Matrix khatri_rao(const Matrix& A, const Matrix& B);

PenaltyMatrix difference_penalty(const TimeGrid& grid);

}  // namespace spaco
