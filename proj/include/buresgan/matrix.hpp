// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <buresgan/errors.hpp>

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#ifdef __unix__
#include <dlfcn.h>
#endif

namespace buresgan {

// Dense row-major matrix of doubles.  Every constructor rejects NaN and
// infinity so that downstream numerics never have to re-validate inputs.
class Matrix
{
public:
    Matrix() = default;

    Matrix(int rows, int cols, double fill = 0.0)
      : rows_ { rows }, cols_ { cols }
    {
        if (rows < 0 || cols < 0) {
            throw DimensionError("matrix dimensions must be non-negative");
        }
        if (!std::isfinite(fill)) {
            throw InvalidValueError("matrix fill value must be finite");
        }
        data_.assign(static_cast<size_t>(rows) * cols, fill);
    }

    Matrix(int rows, int cols, std::vector<double> values)
      : rows_ { rows }, cols_ { cols }, data_ { std::move(values) }
    {
        if (rows < 0 || cols < 0) {
            throw DimensionError("matrix dimensions must be non-negative");
        }
        if (data_.size() != static_cast<size_t>(rows) * cols) {
            throw DimensionError("matrix data size does not match dimensions");
        }
        for (const double v : data_) {
            if (!std::isfinite(v)) {
                throw InvalidValueError(
                  "matrix entries must be finite on construction");
            }
        }
    }

    static Matrix identity(int n)
    {
        Matrix result(n, n);
        for (int i = 0; i < n; ++i) {
            result(i, i) = 1.0;
        }
        return result;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double& operator()(int i, int j)
    {
        return data_[static_cast<size_t>(i) * cols_ + j];
    }
    double operator()(int i, int j) const
    {
        return data_[static_cast<size_t>(i) * cols_ + j];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    const std::vector<double>& values() const { return data_; }

    bool all_finite() const
    {
        for (const double v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

private:
    int rows_ {};
    int cols_ {};
    std::vector<double> data_;
};

namespace detail {

using DgemmFn = void (*)(int order,
                         int transa,
                         int transb,
                         int m,
                         int n,
                         int k,
                         double alpha,
                         const double* a,
                         int lda,
                         const double* b,
                         int ldb,
                         double beta,
                         double* c,
                         int ldc);

// Resolve cblas_dgemm from a shared OpenBLAS if one is installed.  The
// library picks its compute kernel from OPENBLAS_CORETYPE at load time,
// and the generic runtime dispatch misidentifies some virtualized CPUs,
// so the variable is pinned before the first load on AVX-512 hardware.
// Returns nullptr when no usable BLAS is found; callers fall back to the
// built-in kernel, which produces the same results, only slower.
inline DgemmFn load_blas_dgemm()
{
#ifdef __unix__
#if defined(__x86_64__)
    if (std::getenv("OPENBLAS_CORETYPE") == nullptr) {
        if (__builtin_cpu_supports("avx512f")) {
            ::setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
        } else if (__builtin_cpu_supports("avx2")) {
            ::setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
        }
    }
#endif
    ::setenv("OPENBLAS_NUM_THREADS", "1", 0);
    for (const char* name : { "libopenblas.so.0", "libopenblas.so" }) {
        if (void* handle = ::dlopen(name, RTLD_NOW | RTLD_LOCAL)) {
            if (void* sym = ::dlsym(handle, "cblas_dgemm")) {
                return reinterpret_cast<DgemmFn>(sym);
            }
            ::dlclose(handle);
        }
    }
#endif
    return nullptr;
}

inline DgemmFn blas_dgemm()
{
    static DgemmFn fn = load_blas_dgemm();
    return fn;
}

// C += A(^T) * B(^T) without BLAS.  Plain ikj loops; the compiler
// vectorizes the inner accumulation well enough for test-sized problems.
inline void matmul_fallback(const Matrix& a,
                            const Matrix& b,
                            Matrix& c,
                            bool trans_a,
                            bool trans_b)
{
    const int m = c.rows();
    const int n = c.cols();
    const int k = trans_a ? a.rows() : a.cols();
    for (int i = 0; i < m; ++i) {
        double* crow = c.data() + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double aval = trans_a ? a(p, i) : a(i, p);
            if (aval == 0.0) {
                continue;
            }
            if (!trans_b) {
                const double* brow = b.data() + static_cast<size_t>(p) * n;
                for (int j = 0; j < n; ++j) {
                    crow[j] += aval * brow[j];
                }
            } else {
                for (int j = 0; j < n; ++j) {
                    crow[j] += aval * b(j, p);
                }
            }
        }
    }
}

} // namespace detail

// result = A(^T) * B(^T).  Dimensions are checked before dispatch.
inline Matrix matmul(const Matrix& a,
                     const Matrix& b,
                     bool trans_a = false,
                     bool trans_b = false)
{
    const int m = trans_a ? a.cols() : a.rows();
    const int ka = trans_a ? a.rows() : a.cols();
    const int kb = trans_b ? b.cols() : b.rows();
    const int n = trans_b ? b.rows() : b.cols();
    if (ka != kb) {
        throw DimensionError("matmul: inner dimensions disagree ("
                             + std::to_string(ka) + " vs "
                             + std::to_string(kb) + ")");
    }
    Matrix c(m, n);
    if (m == 0 || n == 0 || ka == 0) {
        return c;
    }
    if (auto* dgemm = detail::blas_dgemm()) {
        constexpr int row_major = 101;
        constexpr int no_trans = 111;
        constexpr int trans = 112;
        dgemm(row_major,
              trans_a ? trans : no_trans,
              trans_b ? trans : no_trans,
              m,
              n,
              ka,
              1.0,
              a.data(),
              a.cols(),
              b.data(),
              b.cols(),
              0.0,
              c.data(),
              n);
    } else {
        detail::matmul_fallback(a, b, c, trans_a, trans_b);
    }
    return c;
}

inline Matrix transpose(const Matrix& a)
{
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

inline Matrix add(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("add: shapes disagree");
    }
    Matrix c = a;
    for (size_t i = 0; i < c.size(); ++i) {
        c.data()[i] += b.data()[i];
    }
    return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("sub: shapes disagree");
    }
    Matrix c = a;
    for (size_t i = 0; i < c.size(); ++i) {
        c.data()[i] -= b.data()[i];
    }
    return c;
}

inline Matrix scale(const Matrix& a, double s)
{
    Matrix c = a;
    for (size_t i = 0; i < c.size(); ++i) {
        c.data()[i] *= s;
    }
    return c;
}

inline double trace(const Matrix& a)
{
    if (a.rows() != a.cols()) {
        throw DimensionError("trace: matrix must be square");
    }
    double t = 0.0;
    for (int i = 0; i < a.rows(); ++i) {
        t += a(i, i);
    }
    return t;
}

inline double frobenius_norm(const Matrix& a)
{
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        s += a.data()[i] * a.data()[i];
    }
    return std::sqrt(s);
}

inline double max_abs(const Matrix& a)
{
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i]));
    }
    return m;
}

} // namespace buresgan
