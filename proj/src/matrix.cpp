#include "desmil/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace desmil {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    std::ostringstream msg;
    msg << op << ": incompatible shapes " << a.rows() << "x" << a.cols()
        << " and " << b.rows() << "x" << b.cols();
    throw std::invalid_argument(msg.str());
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: data length does not match rows*cols");
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw std::invalid_argument("Matrix: ragged initializer");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::full(std::size_t rows, std::size_t cols, double value) {
    Matrix m(rows, cols);
    m.fill(value);
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::row_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Matrix(1, n, std::move(values));
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) shape_error("Matrix::operator+=", *this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    if (a.size() == 0) return true;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(n, m);
    // ikj order: the inner loop streams over contiguous rows of b and out.
    for (std::size_t i = 0; i < n; ++i) {
        double* out_row = out.data() + i * m;
        const double* a_row = a.data() + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a_row[kk];
            if (aik == 0.0) continue;
            const double* b_row = b.data() + kk * m;
            for (std::size_t j = 0; j < m; ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("add", a, b);
    Matrix out = a;
    out += b;
    return out;
}

Matrix tanh_elementwise(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::tanh(a.data()[i]);
    return out;
}

Matrix softmax_rows(const Matrix& a) {
    if (a.empty()) throw std::invalid_argument("softmax_rows: empty input");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto in_row = a.row(i);
        auto out_row = out.row(i);
        const double mx = *std::max_element(in_row.begin(), in_row.end());
        double denom = 0.0;
        for (std::size_t j = 0; j < in_row.size(); ++j) {
            out_row[j] = std::exp(in_row[j] - mx);
            denom += out_row[j];
        }
        for (double& v : out_row) v /= denom;
    }
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("hadamard", a, b);
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    out *= s;
    return out;
}

double sum_all(const Matrix& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return s;
}

double dot_rows(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    if (a.cols() != b.cols()) shape_error("dot_rows", a, b);
    const double* pa = a.data() + i * a.cols();
    const double* pb = b.data() + j * b.cols();
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) s += pa[k] * pb[k];
    return s;
}

} // namespace desmil
