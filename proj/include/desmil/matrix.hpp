#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace desmil {

/// Dense row-major matrix of doubles. The single numeric carrier of the
/// project: parameters, activations, kernels and gradients all live here.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
    static Matrix full(std::size_t rows, std::size_t cols, double value);
    static Matrix identity(std::size_t n);
    static Matrix row_vector(std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const;

    void fill(double value);
    Matrix& operator+=(const Matrix& other);
    Matrix& operator*=(double s);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

bool bitwise_equal(const Matrix& a, const Matrix& b);

// Value-level kernels. The tape ops in tape.hpp wrap these and add the
// adjoint bookkeeping; evaluation-time code calls them directly.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix tanh_elementwise(const Matrix& a);
Matrix softmax_rows(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
double sum_all(const Matrix& a);
double dot_rows(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j);

} // namespace desmil
