#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kpca_attn {

/// Dense real matrix, row-major, entries always finite. Values are immutable
/// once constructed; every operation returns a fresh matrix, so instances are
/// safe to share and send between threads.
class Mat {
public:
    Mat(std::size_t rows, std::size_t cols, std::vector<double> entries)
        : rows_(rows), cols_(cols), data_(std::move(entries)) {
        if (rows_ == 0 || cols_ == 0)
            throw std::invalid_argument("Mat: dimensions must be positive, got " +
                                        shape_string(rows_, cols_));
        if (data_.size() != rows_ * cols_)
            throw std::invalid_argument("Mat: " + shape_string(rows_, cols_) + " needs " +
                                        std::to_string(rows_ * cols_) + " entries, got " +
                                        std::to_string(data_.size()));
        for (double v : data_)
            if (!std::isfinite(v))
                throw std::invalid_argument("Mat: non-finite entry rejected");
    }

    static Mat zeros(std::size_t rows, std::size_t cols) {
        return Mat(rows, cols, std::vector<double>(rows * cols, 0.0));
    }

    static Mat constant(std::size_t rows, std::size_t cols, double value) {
        return Mat(rows, cols, std::vector<double>(rows * cols, value));
    }

    static Mat identity(std::size_t n) {
        std::vector<double> e(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) e[i * n + i] = 1.0;
        return Mat(n, n, std::move(e));
    }

    /// Fill from a callable f(i, j) -> double.
    template <class Fn>
    static Mat build(std::size_t rows, std::size_t cols, Fn&& f) {
        std::vector<double> e;
        e.reserve(rows * cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) e.push_back(f(i, j));
        return Mat(rows, cols, std::move(e));
    }

    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t r = rows.size();
        std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> e;
        e.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c)
                throw std::invalid_argument("Mat::from_rows: ragged rows");
            e.insert(e.end(), row.begin(), row.end());
        }
        return Mat(r, c, std::move(e));
    }

    static Mat row_vector(std::span<const double> v) {
        return Mat(1, v.size(), std::vector<double>(v.begin(), v.end()));
    }

    static Mat col_vector(std::span<const double> v) {
        return Mat(v.size(), 1, std::vector<double>(v.begin(), v.end()));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(data_.data() + i * cols_, cols_);
    }

    std::vector<double> col(std::size_t j) const {
        std::vector<double> out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = data_[i * cols_ + j];
        return out;
    }

    std::span<const double> data() const { return data_; }

    bool same_shape(const Mat& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    std::string shape() const { return shape_string(rows_, cols_); }

    static std::string shape_string(std::size_t r, std::size_t c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

inline double dot(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("dot: length mismatch: " + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: dimension mismatch: " + a.shape() + " * " +
                                    b.shape());
    std::vector<double> out(a.rows() * b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j)
                out[i * b.cols() + j] += aik * b(k, j);
        }
    return Mat(a.rows(), b.cols(), std::move(out));
}

inline Mat transpose(const Mat& a) {
    return Mat::build(a.cols(), a.rows(), [&](std::size_t i, std::size_t j) { return a(j, i); });
}

inline Mat operator+(const Mat& a, const Mat& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("Mat +: shape mismatch: " + a.shape() + " vs " + b.shape());
    return Mat::build(a.rows(), a.cols(),
                      [&](std::size_t i, std::size_t j) { return a(i, j) + b(i, j); });
}

inline Mat operator-(const Mat& a, const Mat& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("Mat -: shape mismatch: " + a.shape() + " vs " + b.shape());
    return Mat::build(a.rows(), a.cols(),
                      [&](std::size_t i, std::size_t j) { return a(i, j) - b(i, j); });
}

inline Mat operator*(double c, const Mat& a) {
    return Mat::build(a.rows(), a.cols(), [&](std::size_t i, std::size_t j) { return c * a(i, j); });
}

/// Row-wise softmax with max-subtraction, so arbitrarily large logits stay finite.
inline Mat row_softmax(const Mat& a) {
    std::vector<double> out(a.rows() * a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        double m = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
            double e = std::exp(r[j] - m);
            out[i * a.cols() + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < a.cols(); ++j) out[i * a.cols() + j] /= sum;
    }
    return Mat(a.rows(), a.cols(), std::move(out));
}

inline double frobenius_norm(const Mat& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

inline double entrywise_l1(const Mat& a) {
    double s = 0.0;
    for (double v : a.data()) s += std::abs(v);
    return s;
}

inline double max_abs(const Mat& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: shape mismatch: " + a.shape() + " vs " +
                                    b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace kpca_attn
