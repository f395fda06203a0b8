#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace nametune {

using Vector = std::vector<double>;

// Dense row-major matrix. Shapes here are tiny (token counts x embedding
// widths), so plain loops are used throughout and results stay
// bit-reproducible across runs.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix zeros_like(const Matrix& other) { return Matrix(other.rows_, other.cols_); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Matrix& operator+=(const Matrix& o) {
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Matrix& scale(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }
    friend bool operator!=(const Matrix& a, const Matrix& b) { return !(a == b); }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double dot(const Vector& a, const Vector& b) {
    return dot(std::span<const double>(a), std::span<const double>(b));
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }
inline double squared_norm(const Vector& a) { return dot(a, a); }
inline double l2_norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }
inline double l2_norm(const Vector& a) { return std::sqrt(squared_norm(a)); }

inline double squared_frobenius(const Matrix& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) acc += m.data()[i] * m.data()[i];
    return acc;
}

inline double frobenius_norm(const Matrix& m) { return std::sqrt(squared_frobenius(m)); }

}  // namespace nametune
