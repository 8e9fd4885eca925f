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

#include <buresgan/eig.hpp>
#include <buresgan/matrix.hpp>
#include <buresgan/newton_schulz.hpp>
#include <buresgan/rng.hpp>

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

using namespace buresgan;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols)
{
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            m(i, j) = rng.normal();
        }
    }
    return m;
}

// Random PSD matrix with eigenvalues spread log-uniformly up to the given
// condition number.
Matrix random_psd(Rng& rng, int n, double condition)
{
    Matrix g = random_matrix(rng, n, n);
    // orthogonalize by Gram-Schmidt
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < j; ++k) {
            double dot = 0.0;
            for (int i = 0; i < n; ++i) {
                dot += g(i, j) * g(i, k);
            }
            for (int i = 0; i < n; ++i) {
                g(i, j) -= dot * g(i, k);
            }
        }
        double norm = 0.0;
        for (int i = 0; i < n; ++i) {
            norm += g(i, j) * g(i, j);
        }
        norm = std::sqrt(norm);
        for (int i = 0; i < n; ++i) {
            g(i, j) /= norm;
        }
    }
    std::vector<double> ev(n);
    for (int i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
        ev[i] = std::exp(t * std::log(condition));
    }
    Matrix scaled = g;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            scaled(i, j) *= ev[j];
        }
    }
    Matrix s = matmul(scaled, g, false, true);
    return scale(add(s, transpose(s)), 0.5);
}

} // namespace

TEST_CASE("matrix construction validates entries", "[matrix]")
{
    CHECK_THROWS_AS(Matrix(2, 2, std::numeric_limits<double>::quiet_NaN()),
                    InvalidValueError);
    CHECK_THROWS_AS(
      Matrix(1, 2, { 1.0, std::numeric_limits<double>::infinity() }),
      InvalidValueError);
    CHECK_THROWS_AS(Matrix(2, 2, { 1.0, 2.0, 3.0 }), DimensionError);
    CHECK_THROWS_AS(Matrix(-1, 2), DimensionError);

    const Matrix m(2, 3, { 1, 2, 3, 4, 5, 6 });
    CHECK(m(0, 0) == 1.0);
    CHECK(m(1, 2) == 6.0);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
}

TEST_CASE("matmul matches hand-computed products", "[matrix]")
{
    const Matrix a(2, 3, { 1, 2, 3, 4, 5, 6 });
    const Matrix b(3, 2, { 7, 8, 9, 10, 11, 12 });
    const Matrix c = matmul(a, b);
    CHECK(c(0, 0) == 58.0);
    CHECK(c(0, 1) == 64.0);
    CHECK(c(1, 0) == 139.0);
    CHECK(c(1, 1) == 154.0);

    // A^T * A and A * A^T through the transpose flags
    const Matrix ata = matmul(a, a, true, false);
    CHECK(ata.rows() == 3);
    CHECK(ata(0, 0) == 17.0);
    CHECK(ata(2, 2) == 45.0);
    const Matrix aat = matmul(a, a, false, true);
    CHECK(aat.rows() == 2);
    CHECK(aat(0, 0) == 14.0);
    CHECK(aat(1, 1) == 77.0);

    CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("matmul backends agree", "[matrix]")
{
    Rng rng(2024);
    for (const auto [m, k, n] :
         { std::tuple { 3, 5, 4 }, { 17, 9, 13 }, { 64, 64, 64 } }) {
        const Matrix a = random_matrix(rng, m, k);
        const Matrix b = random_matrix(rng, k, n);
        const Matrix fast = matmul(a, b);
        Matrix slow(m, n);
        detail::matmul_fallback(a, b, slow, false, false);
        CHECK(frobenius_norm(sub(fast, slow))
              <= 1e-13 * (1.0 + frobenius_norm(fast)));

        const Matrix fast_t = matmul(a, a, true, false);
        Matrix slow_t(k, k);
        detail::matmul_fallback(a, a, slow_t, true, false);
        CHECK(frobenius_norm(sub(fast_t, slow_t))
              <= 1e-13 * (1.0 + frobenius_norm(fast_t)));
    }
}

TEST_CASE("generator is deterministic and splittable", "[rng]")
{
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }

    // split streams do not collide with the parent or each other
    Rng parent(7);
    Rng s1 = parent.split(0);
    Rng s2 = parent.split(1);
    CHECK(s1.next_u64() != s2.next_u64());
    CHECK(parent.split(0).next_u64() == parent.split(0).next_u64());

    // splitting is insensitive to how much the parent was consumed
    Rng p2(7);
    p2.next_u64();
    p2.next_u64();
    CHECK(p2.split(3).next_u64() == parent.split(3).next_u64());
}

TEST_CASE("generator state round-trips through serialization", "[rng]")
{
    Rng rng(99);
    rng.normal(); // leaves a cached spare deviate behind
    const Rng::State snap = rng.state();
    Rng restored = Rng::from_state(snap);
    for (int i = 0; i < 50; ++i) {
        REQUIRE(rng.normal() == restored.normal());
        REQUIRE(rng.uniform() == restored.uniform());
    }
}

TEST_CASE("generator output has the right gross statistics", "[rng]")
{
    Rng rng(1);
    const int n = 200000;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    // 5 sigma bounds on the sample mean and variance of N(0,1)
    CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / n));

    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const uint64_t k = rng.uniform_int(25);
        REQUIRE(k < 25);
    }
}

TEST_CASE("sym_eig solves a 2x2 with known spectrum", "[eig]")
{
    const Matrix s(2, 2, { 2, 1, 1, 2 });
    const SpectralDecomposition dec = sym_eig(s);
    REQUIRE(dec.eigenvalues.size() == 2);
    CHECK(dec.eigenvalues[0] == Catch::Approx(3.0).margin(1e-12));
    CHECK(dec.eigenvalues[1] == Catch::Approx(1.0).margin(1e-12));
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(dec.V(0, 0) == Catch::Approx(r).margin(1e-12));
    CHECK(dec.V(1, 0) == Catch::Approx(r).margin(1e-12));
    // sign convention: first of the tied largest components is positive
    CHECK(dec.V(0, 1) == Catch::Approx(r).margin(1e-12));
    CHECK(dec.V(1, 1) == Catch::Approx(-r).margin(1e-12));
}

TEST_CASE("sym_eig handles diagonal and degenerate inputs", "[eig]")
{
    const Matrix d(3, 3, { -1, 0, 0, 0, 5, 0, 0, 0, 2 });
    const SpectralDecomposition dec = sym_eig(d);
    CHECK(dec.eigenvalues == std::vector<double> { 5.0, 2.0, -1.0 });
    CHECK(dec.V(1, 0) == 1.0);
    CHECK(dec.V(2, 1) == 1.0);
    CHECK(dec.V(0, 2) == 1.0);

    const SpectralDecomposition zero = sym_eig(Matrix(4, 4));
    CHECK(zero.eigenvalues == std::vector<double>(4, 0.0));

    const SpectralDecomposition one = sym_eig(Matrix(1, 1, { -3.5 }));
    CHECK(one.eigenvalues[0] == -3.5);
    CHECK(one.V(0, 0) == 1.0);
}

TEST_CASE("sym_eig rejects bad inputs", "[eig]")
{
    CHECK_THROWS_AS(sym_eig(Matrix(2, 3)), DimensionError);
    const Matrix asym(2, 2, { 1, 2, 3, 4 });
    CHECK_THROWS_AS(sym_eig(asym), InvalidValueError);
}

TEST_CASE("sym_eig meets its orthogonality and reconstruction bounds",
          "[eig]")
{
    Rng rng(314);
    for (const int n : { 2, 5, 12, 30 }) {
        Matrix g = random_matrix(rng, n, n);
        const Matrix s = scale(add(g, transpose(g)), 0.5);
        const SpectralDecomposition dec = sym_eig(s);

        for (int i = 1; i < n; ++i) {
            REQUIRE(dec.eigenvalues[i - 1] >= dec.eigenvalues[i]);
        }

        const Matrix vtv = matmul(dec.V, dec.V, true, false);
        CHECK(frobenius_norm(sub(vtv, Matrix::identity(n))) <= 1e-10 * n);

        Matrix vl = dec.V;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                vl(i, j) *= dec.eigenvalues[j];
            }
        }
        const Matrix recon = matmul(vl, dec.V, false, true);
        CHECK(frobenius_norm(sub(recon, s)) <= 1e-8 * frobenius_norm(s));
    }
}

TEST_CASE("sqrtm_eig_oracle takes exact roots of diagonal matrices",
          "[eig]")
{
    const Matrix s(2, 2, { 4, 0, 0, 9 });
    const Matrix r = sqrtm_eig_oracle(s);
    CHECK(r(0, 0) == Catch::Approx(2.0).margin(1e-14));
    CHECK(r(1, 1) == Catch::Approx(3.0).margin(1e-14));
    CHECK(std::abs(r(0, 1)) < 1e-14);
}

TEST_CASE("sqrtm_eig_oracle clamps rounding noise but rejects negatives",
          "[eig]")
{
    const Matrix noisy(2, 2, { 1.0, 0.0, 0.0, -1e-9 });
    const Matrix r = sqrtm_eig_oracle(noisy);
    CHECK(r(1, 1) == 0.0);
    CHECK(r(0, 0) == Catch::Approx(1.0).margin(1e-14));

    const Matrix negative(2, 2, { 1.0, 0.0, 0.0, -0.5 });
    CHECK_THROWS_AS(sqrtm_eig_oracle(negative), NotPsdError);
}

TEST_CASE("sqrtm_eig_oracle squares back to the input", "[eig]")
{
    Rng rng(2718);
    for (const int n : { 3, 8, 16 }) {
        const Matrix s = random_psd(rng, n, 100.0);
        const Matrix r = sqrtm_eig_oracle(s);
        CHECK(frobenius_norm(sub(matmul(r, r), s))
              <= 1e-9 * (1.0 + frobenius_norm(s)));
    }
}

TEST_CASE("nuclear norm oracle sums singular values", "[eig]")
{
    // diag(3, -4) has singular values {3, 4}
    const Matrix m(2, 2, { 3, 0, 0, -4 });
    CHECK(nuclear_norm_oracle(m) == Catch::Approx(7.0).margin(1e-9));

    const Matrix rect(3, 2, { 3, 0, 0, -4, 0, 0 });
    CHECK(nuclear_norm_oracle(rect) == Catch::Approx(7.0).margin(1e-9));
}

TEST_CASE("newton-schulz matches the eigendecomposition root", "[sqrtm]")
{
    Rng rng(1618);
    for (const int n : { 2, 8, 24, 64 }) {
        for (const double condition : { 1.0, 50.0, 1e4 }) {
            const Matrix s = random_psd(rng, n, condition);
            const Matrix ns = sqrtm_newton_schulz(s, 15);
            const Matrix ref = sqrtm_eig_oracle(s);
            const double rel =
              frobenius_norm(sub(ns, ref)) / frobenius_norm(ref);
            CHECK(rel <= 1e-6);
        }
    }
}

TEST_CASE("newton-schulz short-circuits the zero matrix", "[sqrtm]")
{
    const Matrix r = sqrtm_newton_schulz(Matrix(5, 5), 15);
    CHECK(frobenius_norm(r) == 0.0);
}

TEST_CASE("newton-schulz reports divergence with the iteration index",
          "[sqrtm]")
{
    // an indefinite input pushes the iteration out of its basin
    const Matrix bad(2, 2, { 1.0, 0.0, 0.0, -1.0 });
    CHECK_THROWS_MATCHES(
      sqrtm_newton_schulz(bad, 15),
      ConvergenceError,
      Catch::Matchers::MessageMatches(
        Catch::Matchers::ContainsSubstring("iteration")));
}

TEST_CASE("newton-schulz rejects non-square input", "[sqrtm]")
{
    CHECK_THROWS_AS(sqrtm_newton_schulz(Matrix(2, 3), 15), DimensionError);
}
