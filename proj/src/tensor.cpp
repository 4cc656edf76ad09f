#include "spaco/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace spaco {

TimeGrid::TimeGrid(std::vector<double> pts) : points(std::move(pts)) {
    for (size_t t = 1; t < points.size(); ++t) {
        if (!(points[t] > points[t - 1]))
            throw std::invalid_argument("TimeGrid: points must be strictly increasing");
    }
}

LongitudinalTensor::LongitudinalTensor(int I, int T, int J, TimeGrid grid)
    : I_(I), T_(T), J_(J), grid_(std::move(grid)),
      values_(static_cast<size_t>(I) * T * J, 0.0),
      mask_(static_cast<size_t>(I) * T, 1) {
    validate();
    refresh_mask_index();
}

LongitudinalTensor::LongitudinalTensor(int I, int T, int J, TimeGrid grid,
                                       std::vector<double> values,
                                       std::vector<uint8_t> mask)
    : I_(I), T_(T), J_(J), grid_(std::move(grid)),
      values_(std::move(values)), mask_(std::move(mask)) {
    validate();
    if (values_.size() != static_cast<size_t>(I_) * T_ * J_)
        throw std::invalid_argument("LongitudinalTensor: values size mismatch");
    if (mask_.size() != static_cast<size_t>(I_) * T_)
        throw std::invalid_argument("LongitudinalTensor: mask size mismatch");
    refresh_mask_index();
}

LongitudinalTensor::LongitudinalTensor(const LongitudinalTensor& o)
    : I_(o.I_), T_(o.T_), J_(o.J_), grid_(o.grid_), values_(o.values_), mask_(o.mask_),
      obs_times_(o.obs_times_), obs_subjects_(o.obs_subjects_),
      total_observed_(o.total_observed_) {}

LongitudinalTensor& LongitudinalTensor::operator=(const LongitudinalTensor& o) {
    if (this == &o) return *this;
    I_ = o.I_; T_ = o.T_; J_ = o.J_;
    grid_ = o.grid_; values_ = o.values_; mask_ = o.mask_;
    obs_times_ = o.obs_times_; obs_subjects_ = o.obs_subjects_;
    total_observed_ = o.total_observed_;
    for (auto& cache : unfold_cache_) cache.reset();
    return *this;
}

LongitudinalTensor::LongitudinalTensor(LongitudinalTensor&& o) noexcept
    : I_(o.I_), T_(o.T_), J_(o.J_), grid_(std::move(o.grid_)),
      values_(std::move(o.values_)), mask_(std::move(o.mask_)),
      obs_times_(std::move(o.obs_times_)), obs_subjects_(std::move(o.obs_subjects_)),
      total_observed_(o.total_observed_) {}

LongitudinalTensor& LongitudinalTensor::operator=(LongitudinalTensor&& o) noexcept {
    if (this == &o) return *this;
    I_ = o.I_; T_ = o.T_; J_ = o.J_;
    grid_ = std::move(o.grid_); values_ = std::move(o.values_); mask_ = std::move(o.mask_);
    obs_times_ = std::move(o.obs_times_); obs_subjects_ = std::move(o.obs_subjects_);
    total_observed_ = o.total_observed_;
    for (auto& cache : unfold_cache_) cache.reset();
    return *this;
}

void LongitudinalTensor::validate() const {
    if (I_ <= 0 || T_ <= 0 || J_ <= 0)
        throw std::invalid_argument("LongitudinalTensor: dimensions must be positive");
    if (grid_.size() != T_)
        throw std::invalid_argument("LongitudinalTensor: grid length must equal T");
}

void LongitudinalTensor::refresh_mask_index() {
    obs_times_.assign(I_, {});
    obs_subjects_.assign(T_, {});
    total_observed_ = 0;
    for (int i = 0; i < I_; ++i) {
        for (int t = 0; t < T_; ++t) {
            if (observed(i, t)) {
                obs_times_[i].push_back(t);
                obs_subjects_[t].push_back(i);
                ++total_observed_;
            }
        }
    }
    for (auto& cache : unfold_cache_) cache.reset();
}

const Unfolding& LongitudinalTensor::unfold(UnfoldMode mode) const {
    const int m = static_cast<int>(mode);
    std::lock_guard<std::mutex> lock(unfold_mutex_);
    if (!unfold_cache_[m]) {
        auto u = std::make_unique<Unfolding>();
        switch (mode) {
            case UnfoldMode::subject: {
                u->matrix = Matrix::Zero(I_, static_cast<long>(T_) * J_);
                u->observed_cols.assign(I_, {});
                for (int i = 0; i < I_; ++i) {
                    for (int t : obs_times_[i]) {
                        for (int j = 0; j < J_; ++j) {
                            u->matrix(i, static_cast<long>(j) * T_ + t) = at(i, t, j);
                        }
                    }
                    // column order within a row: j-major, t-minor
                    for (int j = 0; j < J_; ++j)
                        for (int t : obs_times_[i])
                            u->observed_cols[i].push_back(j * T_ + t);
                }
                break;
            }
            case UnfoldMode::time: {
                u->matrix = Matrix::Zero(T_, static_cast<long>(I_) * J_);
                u->observed_cols.assign(T_, {});
                for (int t = 0; t < T_; ++t) {
                    for (int i : obs_subjects_[t]) {
                        for (int j = 0; j < J_; ++j) {
                            u->matrix(t, static_cast<long>(j) * I_ + i) = at(i, t, j);
                        }
                    }
                    for (int j = 0; j < J_; ++j)
                        for (int i : obs_subjects_[t])
                            u->observed_cols[t].push_back(j * I_ + i);
                }
                break;
            }
            case UnfoldMode::feature: {
                u->matrix = Matrix::Zero(J_, static_cast<long>(I_) * T_);
                u->observed_cols.assign(J_, {});
                std::vector<int> cols;
                for (int t = 0; t < T_; ++t)
                    for (int i : obs_subjects_[t]) cols.push_back(t * I_ + i);
                for (int j = 0; j < J_; ++j) {
                    for (int t = 0; t < T_; ++t)
                        for (int i : obs_subjects_[t])
                            u->matrix(j, static_cast<long>(t) * I_ + i) = at(i, t, j);
                    u->observed_cols[j] = cols;
                }
                break;
            }
        }
        unfold_cache_[m] = std::move(u);
    }
    return *unfold_cache_[m];
}

LongitudinalTensor LongitudinalTensor::subset_subjects(const std::vector<int>& keep) const {
    const int n = static_cast<int>(keep.size());
    if (n == 0) throw std::invalid_argument("subset_subjects: empty subject list");
    std::vector<double> vals(static_cast<size_t>(n) * T_ * J_);
    std::vector<uint8_t> mask(static_cast<size_t>(n) * T_);
    for (int r = 0; r < n; ++r) {
        const int i = keep[static_cast<size_t>(r)];
        if (i < 0 || i >= I_) throw std::invalid_argument("subset_subjects: index out of range");
        for (int t = 0; t < T_; ++t) {
            mask[static_cast<size_t>(r) * T_ + t] = observed(i, t) ? 1 : 0;
            for (int j = 0; j < J_; ++j)
                vals[(static_cast<size_t>(r) * T_ + t) * J_ + j] = at(i, t, j);
        }
    }
    return LongitudinalTensor(n, T_, J_, grid_, std::move(vals), std::move(mask));
}

CovariateMatrix::CovariateMatrix(Matrix z, std::vector<ColumnKind> kinds)
    : Z(std::move(z)), column_kind(std::move(kinds)) {
    if (column_kind.size() != static_cast<size_t>(Z.cols()))
        throw std::invalid_argument("CovariateMatrix: kind per column required");
    for (int j = 0; j < Z.cols(); ++j) {
        if (column_kind[static_cast<size_t>(j)] != ColumnKind::binary) continue;
        for (int i = 0; i < Z.rows(); ++i) {
            const double v = Z(i, j);
            if (v != 0.0 && v != 1.0)
                throw std::invalid_argument("CovariateMatrix: binary column has non 0/1 entry");
        }
    }
}

CovariateMatrix CovariateMatrix::subset_subjects(const std::vector<int>& keep) const {
    CovariateMatrix out;
    out.column_kind = column_kind;
    out.names = names;
    out.Z.resize(static_cast<long>(keep.size()), Z.cols());
    for (size_t r = 0; r < keep.size(); ++r) out.Z.row(static_cast<long>(r)) = Z.row(keep[r]);
    return out;
}

Matrix khatri_rao(const Matrix& A, const Matrix& B) {
    if (A.cols() != B.cols())
        throw std::invalid_argument("khatri_rao: column counts differ");
    Matrix C(A.rows() * B.rows(), A.cols());
    for (long k = 0; k < A.cols(); ++k)
        for (long a = 0; a < A.rows(); ++a)
            C.col(k).segment(a * B.rows(), B.rows()) = A(a, k) * B.col(k);
    return C;
}

PenaltyMatrix difference_penalty(const TimeGrid& grid) {
    const int T = grid.size();
    if (T < 2) throw std::invalid_argument("difference_penalty: need at least two time points");
    PenaltyMatrix P;
    P.Gamma = Matrix::Zero(T - 1, T);
    for (int t = 0; t + 1 < T; ++t) {
        const double dt = grid[t + 1] - grid[t];
        if (!(dt > 0)) throw std::invalid_argument("difference_penalty: grid not increasing");
        P.Gamma(t, t) = 1.0 / dt;
        P.Gamma(t, t + 1) = -1.0 / dt;
    }
    P.Omega = P.Gamma.transpose() * P.Gamma;
    return P;
}

}  // namespace spaco
