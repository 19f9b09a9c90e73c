#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "oemb/error.hpp"

namespace oemb {

template <typename Scalar>
using Vector = std::vector<Scalar>;

/// Dense row-major matrix.
template <typename Scalar>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, Scalar fill = Scalar(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<Scalar> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        require_shape(data_.size() == rows_ * cols_, "matrix payload does not match its shape");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    Scalar& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const Scalar& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<Scalar> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const Scalar> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<Scalar>& data() noexcept { return data_; }
    const std::vector<Scalar>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = Scalar(1);
        }
        return m;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Scalar> data_;
};

template <typename Scalar>
Scalar dot(std::span<const Scalar> a, std::span<const Scalar> b) {
    Scalar acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

template <typename Scalar>
Scalar l2_norm(std::span<const Scalar> a) {
    return std::sqrt(dot(a, a));
}

/// y = A x
template <typename Scalar>
Vector<Scalar> matvec(const Matrix<Scalar>& a, std::span<const Scalar> x) {
    require_shape(a.cols() == x.size(), "matvec: input dimension mismatch");
    Vector<Scalar> y(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        y[r] = dot(a.row(r), x);
    }
    return y;
}

/// y += A x
template <typename Scalar>
void matvec_add(const Matrix<Scalar>& a, std::span<const Scalar> x, std::span<Scalar> y) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
        y[r] += dot(a.row(r), x);
    }
}

/// y += A^T x
template <typename Scalar>
void matvec_t_add(const Matrix<Scalar>& a, std::span<const Scalar> x, std::span<Scalar> y) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const Scalar xr = x[r];
        if (xr == Scalar(0)) {
            continue;
        }
        auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) {
            y[c] += xr * row[c];
        }
    }
}

/// A += u v^T
template <typename Scalar>
void outer_add(Matrix<Scalar>& a, std::span<const Scalar> u, std::span<const Scalar> v) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const Scalar ur = u[r];
        if (ur == Scalar(0)) {
            continue;
        }
        auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) {
            row[c] += ur * v[c];
        }
    }
}

template <typename Scalar>
void axpy(Scalar alpha, std::span<const Scalar> x, std::span<Scalar> y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

/// Column-wise mean of the rows of `m`.
template <typename Scalar>
Vector<Scalar> row_mean(const Matrix<Scalar>& m) {
    Vector<Scalar> out(m.cols(), Scalar(0));
    for (std::size_t r = 0; r < m.rows(); ++r) {
        axpy(Scalar(1), m.row(r), std::span<Scalar>(out));
    }
    const Scalar inv = Scalar(1) / static_cast<Scalar>(m.rows());
    for (auto& v : out) {
        v *= inv;
    }
    return out;
}

template <typename Scalar>
bool all_finite(std::span<const Scalar> xs) {
    return std::all_of(xs.begin(), xs.end(), [](Scalar x) { return std::isfinite(x); });
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace oemb
