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

#include <string>

namespace buresgan {

// Matrix square root by the coupled Newton-Schulz iteration:
//
//   Y_0 = M / ||M||_F,  Z_0 = I
//   T   = (3 I - Z Y) / 2
//   Y  <- Y T,  Z <- T Z
//
// and the result is sqrt(||M||_F) * Y_k.  Only multiplications and
// additions, no inversions, which is what makes the same recurrence
// usable inside the differentiable objective.  The pre-scaling puts the
// spectrum of Y_0 inside the iteration's basin of attraction whenever M
// has real non-negative eigenvalues.
inline Matrix sqrtm_newton_schulz(const Matrix& m, int iterations = 15)
{
    if (m.rows() != m.cols()) {
        throw DimensionError("sqrtm_newton_schulz: matrix must be square");
    }
    if (iterations < 0) {
        throw InvalidValueError(
          "sqrtm_newton_schulz: iteration count must be non-negative");
    }
    const double s = frobenius_norm(m);
    if (s == 0.0) {
        return Matrix(m.rows(), m.cols());
    }

    const int n = m.rows();
    const Matrix eye3 = scale(Matrix::identity(n), 3.0);
    Matrix y = scale(m, 1.0 / s);
    Matrix z = Matrix::identity(n);
    for (int k = 1; k <= iterations; ++k) {
        const Matrix t = scale(sub(eye3, matmul(z, y)), 0.5);
        y = matmul(y, t);
        z = matmul(t, z);
        if (!y.all_finite() || !z.all_finite()) {
            throw ConvergenceError(
              "sqrtm_newton_schulz: diverged at iteration "
              + std::to_string(k));
        }
    }
    return scale(y, std::sqrt(s));
}

} // namespace buresgan
