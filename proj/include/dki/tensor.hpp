#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace dki {

/// Dense row-major matrix. Vectors are stored as 1 x n.
template <typename T>
class Matrix {
   public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T value = T{})
        : m_rows(rows), m_cols(cols), m_data(rows * cols, value)
    {
    }

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    std::size_t size() const noexcept { return m_data.size(); }
    bool empty() const noexcept { return m_data.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return m_data[r * m_cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return m_data[r * m_cols + c]; }

    std::span<T> row(std::size_t r) { return {m_data.data() + r * m_cols, m_cols}; }
    std::span<const T> row(std::size_t r) const { return {m_data.data() + r * m_cols, m_cols}; }

    std::span<T> flat() noexcept { return m_data; }
    std::span<const T> flat() const noexcept { return m_data; }

    void fill(T v) { std::fill(m_data.begin(), m_data.end(), v); }

    bool operator==(const Matrix&) const = default;

   private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<T> m_data;
};

// All kernels accumulate in double.

/// out(n x m) += a(n x k) * b(k x m)
template <typename TA, typename TB>
void matmul_add(const Matrix<TA>& a, const Matrix<TB>& b, Matrix<double>& out)
{
    assert(a.cols() == b.rows() && out.rows() == a.rows() && out.cols() == b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.row(i).data();
        const TA* ar = a.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = static_cast<double>(ar[p]);
            if (av == 0.0) {
                continue;
            }
            const TB* br = b.row(p).data();
            for (std::size_t j = 0; j < m; ++j) {
                o[j] += av * static_cast<double>(br[j]);
            }
        }
    }
}

/// out(n x m) += a(n x k) * b(m x k)^T
template <typename TA, typename TB>
void matmul_bt_add(const Matrix<TA>& a, const Matrix<TB>& b, Matrix<double>& out)
{
    assert(a.cols() == b.cols() && out.rows() == a.rows() && out.cols() == b.rows());
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const TA* ar = a.row(i).data();
        double* o = out.row(i).data();
        for (std::size_t j = 0; j < m; ++j) {
            const TB* br = b.row(j).data();
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                s += static_cast<double>(ar[p]) * static_cast<double>(br[p]);
            }
            o[j] += s;
        }
    }
}

/// out(k x m) += a(n x k)^T * b(n x m)
template <typename TA, typename TB>
void matmul_at_add(const Matrix<TA>& a, const Matrix<TB>& b, Matrix<double>& out)
{
    assert(a.rows() == b.rows() && out.rows() == a.cols() && out.cols() == b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const TA* ar = a.row(i).data();
        const TB* br = b.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = static_cast<double>(ar[p]);
            if (av == 0.0) {
                continue;
            }
            double* o = out.row(p).data();
            for (std::size_t j = 0; j < m; ++j) {
                o[j] += av * static_cast<double>(br[j]);
            }
        }
    }
}

/// Adds a 1 x m bias to every row.
template <typename TB>
void add_row_bias(Matrix<double>& x, const Matrix<TB>& bias)
{
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) {
            r[j] += static_cast<double>(bias(0, j));
        }
    }
}

/// bias_grad(1 x m) += column sums of g.
inline void add_column_sums(const Matrix<double>& g, Matrix<double>& bias_grad)
{
    for (std::size_t i = 0; i < g.rows(); ++i) {
        auto r = g.row(i);
        for (std::size_t j = 0; j < g.cols(); ++j) {
            bias_grad(0, j) += r[j];
        }
    }
}

} // namespace dki
