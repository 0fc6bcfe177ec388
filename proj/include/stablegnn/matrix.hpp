#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "stablegnn/errors.hpp"

#ifdef STABLEGNN_USE_CBLAS
#include <cblas.h>
#endif

namespace stablegnn {

/// Dense row-major double matrix. Small by design: exactly the operations the
/// graph pipeline needs, all 64-bit.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) fail(errc::shape_mismatch, "ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix& operator+=(const Matrix& o) {
        if (!same_shape(o)) fail(errc::shape_mismatch, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Matrix& operator-=(const Matrix& o) {
        if (!same_shape(o)) fail(errc::shape_mismatch, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    Matrix& operator*=(double a) {
        for (double& v : data_) v *= a;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// out += alpha * A * B. Hot path of every forward/backward pass; routed
/// through BLAS when available, with a blocked fallback otherwise.
inline void gemm_acc(const Matrix& a, const Matrix& b, Matrix& out, double alpha = 1.0) {
    if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols())
        fail(errc::shape_mismatch, "gemm_acc");
#ifdef STABLEGNN_USE_CBLAS
    if (a.rows() * b.cols() >= 64) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(a.rows()), int(b.cols()),
                    int(a.cols()), alpha, a.data(), int(a.cols()), b.data(), int(b.cols()), 1.0,
                    out.data(), int(out.cols()));
        return;
    }
#endif
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        double* oi = out.row(i);
        const double* ai = a.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = alpha * ai[p];
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (std::size_t j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    gemm_acc(a, b, out);
    return out;
}

/// out += alpha * A^T * B.
inline void gemm_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out, double alpha = 1.0) {
    if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
        fail(errc::shape_mismatch, "gemm_at_b_acc");
#ifdef STABLEGNN_USE_CBLAS
    if (a.cols() * b.cols() >= 64) {
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(a.cols()), int(b.cols()),
                    int(a.rows()), alpha, a.data(), int(a.cols()), b.data(), int(b.cols()), 1.0,
                    out.data(), int(out.cols()));
        return;
    }
#endif
    const std::size_t m = a.rows(), ka = a.cols(), n = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        const double* bi = b.row(i);
        for (std::size_t p = 0; p < ka; ++p) {
            const double av = alpha * ai[p];
            if (av == 0.0) continue;
            double* op = out.row(p);
            for (std::size_t j = 0; j < n; ++j) op[j] += av * bi[j];
        }
    }
}

/// out += alpha * A * B^T.
inline void gemm_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& out, double alpha = 1.0) {
    if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows())
        fail(errc::shape_mismatch, "gemm_a_bt_acc");
#ifdef STABLEGNN_USE_CBLAS
    if (a.rows() * b.rows() >= 64) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(a.rows()), int(b.rows()),
                    int(a.cols()), alpha, a.data(), int(a.cols()), b.data(), int(b.cols()), 1.0,
                    out.data(), int(out.cols()));
        return;
    }
#endif
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            oi[j] += alpha * acc;
        }
    }
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

} // namespace stablegnn
