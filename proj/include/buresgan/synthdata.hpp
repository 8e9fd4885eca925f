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
#include <buresgan/rng.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace buresgan {

// An equal-weight mixture of isotropic Gaussians in the plane.
struct MixtureSpec {
    Matrix centers; // one row per component
    double stddev;
    std::string name;

    int components() const { return centers.rows(); }
};

// Eight components on a circle of radius 2.5, component i at angle
// 2 pi i / 8 for i = 1..8, with standard deviation 0.01.
inline MixtureSpec ring_spec()
{
    Matrix centers(8, 2);
    for (int i = 1; i <= 8; ++i) {
        const double angle = 2.0 * std::numbers::pi * i / 8.0;
        centers(i - 1, 0) = 2.5 * std::cos(angle);
        centers(i - 1, 1) = 2.5 * std::sin(angle);
    }
    return { std::move(centers), 0.01, "ring" };
}

// Twenty-five components on the lattice {-4,-2,0,2,4}^2 with standard
// deviation 0.05.
inline MixtureSpec grid_spec()
{
    Matrix centers(25, 2);
    int row = 0;
    for (int ix = 0; ix < 5; ++ix) {
        for (int iy = 0; iy < 5; ++iy) {
            centers(row, 0) = -4.0 + 2.0 * ix;
            centers(row, 1) = -4.0 + 2.0 * iy;
            ++row;
        }
    }
    return { std::move(centers), 0.05, "grid" };
}

inline MixtureSpec mixture_by_name(const std::string& name)
{
    if (name == "ring") {
        return ring_spec();
    }
    if (name == "grid") {
        return grid_spec();
    }
    throw InvalidValueError("unknown mixture name: " + name);
}

// Draw n points.  Per point: one component index, then one normal
// deviate per coordinate.  The draw order is part of the reproducibility
// contract, so it never changes.
inline Matrix sample_mixture(const MixtureSpec& spec, Rng& rng, int n)
{
    if (n < 0) {
        throw InvalidValueError("sample_mixture: negative sample count");
    }
    const int dim = spec.centers.cols();
    Matrix out(n, dim);
    for (int i = 0; i < n; ++i) {
        const auto k =
          static_cast<int>(rng.uniform_int(spec.centers.rows()));
        for (int j = 0; j < dim; ++j) {
            out(i, j) = spec.centers(k, j) + spec.stddev * rng.normal();
        }
    }
    return out;
}

inline const Matrix& mode_centers(const MixtureSpec& spec)
{
    return spec.centers;
}

} // namespace buresgan
