#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace oul {

/// Dense real matrix, row-major, 64-bit floats. The single numeric carrier
/// for weights, adapters, projectors and feature batches. Entries are
/// validated to be finite on data construction and after every kernel
/// operation that produces a new matrix.
class Matrix {
public:
    Matrix() noexcept = default;
    Matrix(std::size_t rows, std::size_t cols); // zero-filled
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);
inline Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }

double max_abs(const Matrix& m);
double trace(const Matrix& m);

/// Columns [first, first+count) as a new matrix.
Matrix take_columns(const Matrix& m, std::size_t first, std::size_t count);
/// [a | b] column concatenation; a may be empty (0 columns).
Matrix hcat(const Matrix& a, const Matrix& b);

/// Throws numeric_error naming `what` if any entry is NaN or infinite.
void ensure_finite(const Matrix& m, const char* what);

} // namespace oul
