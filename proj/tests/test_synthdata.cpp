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

#include <buresgan/synthdata.hpp>

#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

using namespace buresgan;

TEST_CASE("ring centers sit on the circle of radius 2.5", "[synthdata]")
{
    const MixtureSpec ring = ring_spec();
    REQUIRE(ring.components() == 8);
    CHECK(ring.stddev == 0.01);
    CHECK(ring.name == "ring");
    for (int i = 0; i < 8; ++i) {
        const double r = std::hypot(ring.centers(i, 0), ring.centers(i, 1));
        CHECK(r == Catch::Approx(2.5).margin(1e-12));
    }
    // component i = 2 is at angle pi/2
    CHECK(ring.centers(1, 0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(ring.centers(1, 1) == Catch::Approx(2.5).margin(1e-12));
    // component i = 8 completes the circle at angle 2 pi
    CHECK(ring.centers(7, 0) == Catch::Approx(2.5).margin(1e-12));
    CHECK(ring.centers(7, 1) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("grid centers cover the 5x5 lattice", "[synthdata]")
{
    const MixtureSpec grid = grid_spec();
    REQUIRE(grid.components() == 25);
    CHECK(grid.stddev == 0.05);
    CHECK(grid.name == "grid");
    std::set<std::pair<double, double>> seen;
    for (int i = 0; i < 25; ++i) {
        const double x = grid.centers(i, 0);
        const double y = grid.centers(i, 1);
        CHECK(std::abs(x) <= 4.0);
        CHECK(std::abs(y) <= 4.0);
        CHECK(std::fmod(x, 2.0) == 0.0);
        CHECK(std::fmod(y, 2.0) == 0.0);
        seen.emplace(x, y);
    }
    CHECK(seen.size() == 25); // all distinct
}

TEST_CASE("mixtures resolve by name", "[synthdata]")
{
    CHECK(mixture_by_name("ring").components() == 8);
    CHECK(mixture_by_name("grid").components() == 25);
    CHECK_THROWS_AS(mixture_by_name("spiral"), InvalidValueError);
}

TEST_CASE("sampling is deterministic for a fixed stream", "[synthdata]")
{
    const MixtureSpec ring = ring_spec();
    Rng a(12345);
    Rng b(12345);
    const Matrix s1 = sample_mixture(ring, a, 100);
    const Matrix s2 = sample_mixture(ring, b, 100);
    for (size_t i = 0; i < s1.size(); ++i) {
        REQUIRE(s1.data()[i] == s2.data()[i]);
    }
}

TEST_CASE("sample statistics match the mixture law", "[synthdata]")
{
    const MixtureSpec ring = ring_spec();
    Rng rng(777);
    const int n = 100000;
    const Matrix s = sample_mixture(ring, rng, n);

    // component frequencies: binomial with p = 1/8
    std::vector<int> counts(8, 0);
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < 8; ++c) {
            const double dx = s(i, 0) - ring.centers(c, 0);
            const double dy = s(i, 1) - ring.centers(c, 1);
            if (dx * dx + dy * dy < best_d) {
                best_d = dx * dx + dy * dy;
                best = c;
            }
        }
        ++counts[best];
    }
    const double p = 1.0 / 8.0;
    const double sigma = std::sqrt(n * p * (1.0 - p));
    for (int c = 0; c < 8; ++c) {
        CHECK(std::abs(counts[c] - n * p) <= 5.0 * sigma);
    }

    // the mixture is centered at the origin; per-coordinate variance is
    // the spread of the centers plus the component noise
    double mean_x = 0.0;
    double mean_y = 0.0;
    for (int i = 0; i < n; ++i) {
        mean_x += s(i, 0);
        mean_y += s(i, 1);
    }
    mean_x /= n;
    mean_y /= n;
    const double var = 2.5 * 2.5 / 2.0 + 0.01 * 0.01;
    CHECK(std::abs(mean_x) <= 5.0 * std::sqrt(var / n));
    CHECK(std::abs(mean_y) <= 5.0 * std::sqrt(var / n));

    double var_x = 0.0;
    for (int i = 0; i < n; ++i) {
        var_x += (s(i, 0) - mean_x) * (s(i, 0) - mean_x);
    }
    var_x /= n - 1;
    // fourth-moment bound on the variance estimate, 5 sigma
    CHECK(std::abs(var_x - var) <= 5.0 * var * std::sqrt(2.0 / n) * 2.0);
}

TEST_CASE("sampling validates the count and handles zero", "[synthdata]")
{
    const MixtureSpec grid = grid_spec();
    Rng rng(1);
    CHECK_THROWS_AS(sample_mixture(grid, rng, -1), InvalidValueError);
    const Matrix empty = sample_mixture(grid, rng, 0);
    CHECK(empty.rows() == 0);
    CHECK(empty.cols() == 2);
}

TEST_CASE("samples hug their component centers", "[synthdata]")
{
    // with stddev 0.01 on a radius-2.5 ring, essentially every sample is
    // within 5 sigma of the nearest center
    const MixtureSpec ring = ring_spec();
    Rng rng(31337);
    const Matrix s = sample_mixture(ring, rng, 10000);
    for (int i = 0; i < s.rows(); ++i) {
        double best = 1e300;
        for (int c = 0; c < 8; ++c) {
            const double dx = s(i, 0) - ring.centers(c, 0);
            const double dy = s(i, 1) - ring.centers(c, 1);
            best = std::min(best, std::hypot(dx, dy));
        }
        REQUIRE(best <= 5.0 * ring.stddev);
    }
}
