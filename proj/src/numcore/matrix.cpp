#include "comfed/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "comfed/error.hpp"
#include "comfed/kernels.hpp"

namespace comfed {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + shape_string());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
    }
    const auto& k = kernels::active();
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = k.dot(ai, b.row(j).data(), a.cols());
    }
    return c;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul_nn: " + a.shape_string() + " * " + b.shape_string());
    }
    const auto& k = kernels::active();
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double aip = a(i, p);
            if (aip != 0.0) k.axpy(aip, b.row(p).data(), ci, b.cols());
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
    }
    const auto& k = kernels::active();
    Matrix c(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* br = b.row(r).data();
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double arp = a(r, p);
            if (arp != 0.0) k.axpy(arp, br, c.row(p).data(), b.cols());
        }
    }
    return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw ShapeError("matvec: " + a.shape_string() + " * vector of length " +
                         std::to_string(x.size()));
    }
    const auto& k = kernels::active();
    std::vector<double> y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = k.dot(a.row(i).data(), x.data(), x.size());
    return y;
}

std::vector<double> matvec_t(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw ShapeError("matvec_t: " + a.shape_string() + "^T * vector of length " +
                         std::to_string(x.size()));
    }
    const auto& k = kernels::active();
    std::vector<double> y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        if (x[i] != 0.0) k.axpy(x[i], a.row(i).data(), y.data(), a.cols());
    }
    return y;
}

void add_row_broadcast(Matrix& m, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != m.cols()) {
        throw ShapeError("bias " + bias.shape_string() + " does not broadcast over " +
                         m.shape_string());
    }
    const auto& k = kernels::active();
    for (std::size_t r = 0; r < m.rows(); ++r) k.axpy(1.0, bias.row(0).data(), m.row(r).data(), m.cols());
}

Matrix column_sums(const Matrix& m) {
    Matrix s(1, m.cols());
    const auto& k = kernels::active();
    for (std::size_t r = 0; r < m.rows(); ++r) k.axpy(1.0, m.row(r).data(), s.row(0).data(), m.cols());
    return s;
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw ShapeError("axpy: " + x.shape_string() + " vs " + y.shape_string());
    }
    kernels::active().axpy(alpha, x.values().data(), y.values().data(), x.size());
}

Matrix hconcat(std::span<const Matrix> blocks) {
    if (blocks.empty()) return {};
    const std::size_t rows = blocks.front().rows();
    std::size_t cols = 0;
    for (const auto& b : blocks) {
        if (b.rows() != rows) throw ShapeError("hconcat: row counts differ");
        cols += b.cols();
    }
    Matrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        auto dst = out.row(r).begin();
        for (const auto& b : blocks) dst = std::copy(b.row(r).begin(), b.row(r).end(), dst);
    }
    return out;
}

Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t width) {
    if (begin + width > m.cols()) throw ShapeError("column_slice out of range");
    Matrix out(m.rows(), width);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto src = m.row(r).subspan(begin, width);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= m.rows()) throw ShapeError("gather_rows: index out of range");
        const auto src = m.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

double max_abs(const Matrix& m) noexcept {
    double best = 0.0;
    for (double v : m.values()) best = std::max(best, std::abs(v));
    return best;
}

}  // namespace comfed
