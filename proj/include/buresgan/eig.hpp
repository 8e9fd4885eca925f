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
#include <buresgan/matrix.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace buresgan {

// Eigenvalues in descending order; column i of V pairs with eigenvalues[i].
struct SpectralDecomposition {
    Matrix V;
    std::vector<double> eigenvalues;
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a)
{
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) {
            if (i != j) {
                s += a(i, j) * a(i, j);
            }
        }
    }
    return std::sqrt(s);
}

} // namespace detail

// Symmetric eigendecomposition by cyclic Jacobi sweeps.  This is the slow,
// trustworthy reference used to validate the iterative square root; it is
// never called on the training path.  The input is symmetrized as
// (S + S^T)/2 after checking that the asymmetry is within rounding noise.
// Convergence is reached when the off-diagonal Frobenius mass drops below
// 1e-12 * ||S||_F; more than 100 sweeps raises a convergence error.
// Column signs follow the usual convention that the component of largest
// magnitude is positive, which makes decompositions comparable across
// runs.
inline SpectralDecomposition sym_eig(const Matrix& s)
{
    if (s.rows() != s.cols()) {
        throw DimensionError("sym_eig: matrix must be square");
    }
    const int n = s.rows();
    const double norm = frobenius_norm(s);
    {
        const Matrix asym = sub(s, transpose(s));
        if (frobenius_norm(asym) > 1e-9 * std::max(norm, 1e-300)) {
            throw InvalidValueError(
              "sym_eig: input is not symmetric to within 1e-9 relative");
        }
    }

    Matrix a = scale(add(s, transpose(s)), 0.5);
    Matrix v = Matrix::identity(n);
    const double tol = 1e-12 * norm;

    int sweep = 0;
    for (; sweep < 100; ++sweep) {
        if (detail::off_diagonal_norm(a) <= tol) {
            break;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t =
                  (theta >= 0.0 ? 1.0 : -1.0)
                  / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a(i, p);
                    const double aiq = a(i, q);
                    a(i, p) = c * aip - sn * aiq;
                    a(i, q) = sn * aip + c * aiq;
                }
                for (int j = 0; j < n; ++j) {
                    const double apj = a(p, j);
                    const double aqj = a(q, j);
                    a(p, j) = c * apj - sn * aqj;
                    a(q, j) = sn * apj + c * aqj;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = v(i, p);
                    const double viq = v(i, q);
                    v(i, p) = c * vip - sn * viq;
                    v(i, q) = sn * vip + c * viq;
                }
            }
        }
    }
    if (sweep == 100 && detail::off_diagonal_norm(a) > tol) {
        throw ConvergenceError(
          "sym_eig: no convergence within 100 Jacobi sweeps");
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&a](int i, int j) {
        return a(i, i) > a(j, j);
    });

    SpectralDecomposition dec;
    dec.eigenvalues.resize(n);
    dec.V = Matrix(n, n);
    for (int j = 0; j < n; ++j) {
        const int src = order[j];
        dec.eigenvalues[j] = a(src, src);
        int imax = 0;
        double vmax = 0.0;
        for (int i = 0; i < n; ++i) {
            if (std::abs(v(i, src)) > vmax) {
                vmax = std::abs(v(i, src));
                imax = i;
            }
        }
        const double sign = v(imax, src) < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) {
            dec.V(i, j) = sign * v(i, src);
        }
    }
    return dec;
}

// Principal square root through the eigendecomposition.  Eigenvalues in
// the small negative band [-1e-6 * ||S||_F, 0) are treated as rounding
// noise and clamped; anything more negative means the input was not PSD.
inline Matrix sqrtm_eig_oracle(const Matrix& s)
{
    const SpectralDecomposition dec = sym_eig(s);
    const int n = s.rows();
    const double norm = frobenius_norm(s);
    std::vector<double> roots(n);
    for (int i = 0; i < n; ++i) {
        double ev = dec.eigenvalues[i];
        if (ev < -1e-6 * norm) {
            throw NotPsdError("sqrtm_eig_oracle: eigenvalue "
                              + std::to_string(ev)
                              + " is negative beyond tolerance");
        }
        roots[i] = std::sqrt(std::max(ev, 0.0));
    }
    Matrix scaled = dec.V;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            scaled(i, j) *= roots[j];
        }
    }
    return matmul(scaled, dec.V, false, true);
}

// Sum of singular values, computed as tr((M^T M)^{1/2}) via the oracle.
inline double nuclear_norm_oracle(const Matrix& m)
{
    return trace(sqrtm_eig_oracle(matmul(m, m, true, false)));
}

// tr((A B)^{1/2}) for PSD A and B, evaluated through the similarity
// transform A^{1/2} B A^{1/2}, which is symmetric PSD and therefore safe
// for the eigendecomposition-based root.  The product A B itself is not
// symmetric, but shares its nonzero spectrum with the transform.
inline double trace_sqrt_product_oracle(const Matrix& a, const Matrix& b)
{
    const Matrix ra = sqrtm_eig_oracle(a);
    Matrix inner = matmul(matmul(ra, b), ra);
    inner = scale(add(inner, transpose(inner)), 0.5);
    return trace(sqrtm_eig_oracle(inner));
}

} // namespace buresgan
