#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "parallel.hpp"

namespace subspectra {

/// Row-major dense matrix of doubles with at least one row and one column
/// and finite entries.
class DenseMatrix
{
public:
    DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0)
    {
        check_shape();
    }

    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values))
    {
        check_shape();
        detail::require(values_.size() == rows_ * cols_,
                        "DenseMatrix: expected " + std::to_string(rows_ * cols_) + " values, got " +
                            std::to_string(values_.size()));
        for (double v : values_)
            detail::require(std::isfinite(v), "DenseMatrix: non-finite entry");
    }

    /// Builds from a list of equally long rows.
    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows)
    {
        detail::require(rows.size() > 0, "DenseMatrix: no rows");
        const std::size_t cols = rows.begin()->size();
        std::vector<double> v;
        v.reserve(rows.size() * cols);
        for (const auto & r : rows) {
            detail::require(r.size() == cols, "DenseMatrix: ragged rows");
            v.insert(v.end(), r.begin(), r.end());
        }
        return DenseMatrix(rows.size(), cols, std::move(v));
    }

    static DenseMatrix identity(std::size_t n)
    {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    static DenseMatrix diagonal(std::span<const double> d)
    {
        DenseMatrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i)
            m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * cols_ + j]; }
    double & operator()(std::size_t i, std::size_t j) noexcept { return values_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const noexcept { return {values_.data() + i * cols_, cols_}; }
    std::span<double> row(std::size_t i) noexcept { return {values_.data() + i * cols_, cols_}; }

    std::vector<double> col(std::size_t j) const
    {
        std::vector<double> c(rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            c[i] = (*this)(i, j);
        return c;
    }

    void set_col(std::size_t j, std::span<const double> c)
    {
        for (std::size_t i = 0; i < rows_; ++i)
            (*this)(i, j) = c[i];
    }

    const std::vector<double> & values() const noexcept { return values_; }
    std::span<double> data() noexcept { return values_; }

    double squared_frobenius() const noexcept
    {
        double s = 0.0;
        for (double v : values_)
            s += v * v;
        return s;
    }

    double frobenius_norm() const noexcept { return std::sqrt(squared_frobenius()); }

    double max_abs() const noexcept
    {
        double m = 0.0;
        for (double v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

    DenseMatrix transpose() const
    {
        DenseMatrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                t(j, i) = (*this)(i, j);
        return t;
    }

    DenseMatrix scaled(double c) const
    {
        DenseMatrix s = *this;
        for (double & v : s.values_)
            v *= c;
        return s;
    }

    /// Leading `k` columns.
    DenseMatrix leading_cols(std::size_t k) const
    {
        detail::require(k >= 1 && k <= cols_, "DenseMatrix::leading_cols: k out of range");
        DenseMatrix out(rows_, k);
        for (std::size_t i = 0; i < rows_; ++i)
            std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(i * cols_), k, out.row(i).begin());
        return out;
    }

    friend bool operator==(const DenseMatrix &, const DenseMatrix &) = default;

private:
    void check_shape() const
    {
        detail::require(rows_ >= 1 && cols_ >= 1, "DenseMatrix: rows and cols must be >= 1");
    }

    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> values_;
};

inline DenseMatrix operator-(const DenseMatrix & a, const DenseMatrix & b)
{
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "matrix difference: shape mismatch");
    DenseMatrix d = a;
    auto out = d.data();
    const auto & bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] -= bv[i];
    return d;
}

namespace detail {

/// Rows per block in reductions over the row dimension. Fixed so that the
/// summation order does not depend on the worker count.
inline constexpr std::size_t row_block = 1024;

inline std::size_t block_count(std::size_t rows) { return (rows + row_block - 1) / row_block; }

} // namespace detail

/// C = A·B
inline DenseMatrix matmul(const DenseMatrix & a, const DenseMatrix & b)
{
    detail::require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    DenseMatrix c(a.rows(), b.cols());
    const std::size_t n = a.cols();
    parallel_blocks(detail::block_count(a.rows()), [&](std::size_t blk) {
        const std::size_t lo = blk * detail::row_block;
        const std::size_t hi = std::min(a.rows(), lo + detail::row_block);
        for (std::size_t i = lo; i < hi; ++i) {
            auto ci = c.row(i);
            const auto ai = a.row(i);
            for (std::size_t k = 0; k < n; ++k) {
                const double aik = ai[k];
                const auto bk = b.row(k);
                for (std::size_t j = 0; j < ci.size(); ++j)
                    ci[j] += aik * bk[j];
            }
        }
    });
    return c;
}

/// C = Aᵀ·B, reduction over the shared row dimension in fixed row blocks.
inline DenseMatrix matmul_tn(const DenseMatrix & a, const DenseMatrix & b)
{
    detail::require(a.rows() == b.rows(), "matmul_tn: row dimension mismatch");
    const std::size_t n = a.cols(), p = b.cols();
    const std::size_t blocks = detail::block_count(a.rows());
    std::vector<std::vector<double>> partial(blocks);
    parallel_blocks(blocks, [&](std::size_t blk) {
        auto & acc = partial[blk];
        acc.assign(n * p, 0.0);
        const std::size_t lo = blk * detail::row_block;
        const std::size_t hi = std::min(a.rows(), lo + detail::row_block);
        for (std::size_t r = lo; r < hi; ++r) {
            const auto ar = a.row(r);
            const auto br = b.row(r);
            for (std::size_t i = 0; i < n; ++i) {
                const double ari = ar[i];
                double * out = acc.data() + i * p;
                for (std::size_t j = 0; j < p; ++j)
                    out[j] += ari * br[j];
            }
        }
    });
    DenseMatrix c(n, p);
    auto out = c.data();
    for (const auto & acc : partial)
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += acc[i];
    return c;
}

/// C = A·Bᵀ
inline DenseMatrix matmul_nt(const DenseMatrix & a, const DenseMatrix & b)
{
    detail::require(a.cols() == b.cols(), "matmul_nt: column dimension mismatch");
    DenseMatrix c(a.rows(), b.rows());
    parallel_blocks(detail::block_count(a.rows()), [&](std::size_t blk) {
        const std::size_t lo = blk * detail::row_block;
        const std::size_t hi = std::min(a.rows(), lo + detail::row_block);
        for (std::size_t i = lo; i < hi; ++i) {
            const auto ai = a.row(i);
            for (std::size_t j = 0; j < b.rows(); ++j) {
                const auto bj = b.row(j);
                double s = 0.0;
                for (std::size_t k = 0; k < ai.size(); ++k)
                    s += ai[k] * bj[k];
                c(i, j) = s;
            }
        }
    });
    return c;
}

/// AᵀA, accumulating only the upper triangle.
inline DenseMatrix gram_cols(const DenseMatrix & a)
{
    const std::size_t n = a.cols();
    const std::size_t blocks = detail::block_count(a.rows());
    std::vector<std::vector<double>> partial(blocks);
    parallel_blocks(blocks, [&](std::size_t blk) {
        auto & acc = partial[blk];
        acc.assign(n * n, 0.0);
        const std::size_t lo = blk * detail::row_block;
        const std::size_t hi = std::min(a.rows(), lo + detail::row_block);
        for (std::size_t r = lo; r < hi; ++r) {
            const double * ar = a.row(r).data();
            for (std::size_t i = 0; i < n; ++i) {
                const double ari = ar[i];
                double * out = acc.data() + i * n;
                for (std::size_t j = i; j < n; ++j)
                    out[j] += ari * ar[j];
            }
        }
    });
    DenseMatrix g(n, n);
    for (const auto & acc : partial)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j)
                g(i, j) += acc[i * n + j];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            g(i, j) = g(j, i);
    return g;
}

/// AAᵀ
inline DenseMatrix gram_rows(const DenseMatrix & a)
{
    const std::size_t m = a.rows();
    DenseMatrix g(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto ai = a.row(i);
        for (std::size_t j = i; j < m; ++j) {
            const auto aj = a.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < ai.size(); ++k)
                s += ai[k] * aj[k];
            g(i, j) = s;
            g(j, i) = s;
        }
    }
    return g;
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

} // namespace subspectra
