#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace comfed {

// Dense row-major matrix of doubles. Batch-first: rows index samples.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix row_vector(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    void fill(double value);
    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// a * b^T   (rows(a) x rows(b)); shares the inner dimension cols(a) == cols(b)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a * b
Matrix matmul_nn(const Matrix& a, const Matrix& b);
// a^T * b   (cols(a) x cols(b))
Matrix matmul_tn(const Matrix& a, const Matrix& b);

std::vector<double> matvec(const Matrix& a, std::span<const double> x);
// a^T x
std::vector<double> matvec_t(const Matrix& a, std::span<const double> x);

// Adds row vector `bias` (1 x cols) to every row.
void add_row_broadcast(Matrix& m, const Matrix& bias);
// Column sums as a 1 x cols matrix.
Matrix column_sums(const Matrix& m);

// y += alpha * x, same shapes.
void axpy(double alpha, const Matrix& x, Matrix& y);

// Horizontal concatenation of blocks with equal row counts.
Matrix hconcat(std::span<const Matrix> blocks);
// Column range [begin, begin + width) of m.
Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t width);
// Rows of m selected by index, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

double max_abs(const Matrix& m) noexcept;

}  // namespace comfed
