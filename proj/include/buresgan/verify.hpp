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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <buresgan/autodiff.hpp>
#include <buresgan/bures.hpp>
#include <buresgan/eig.hpp>
#include <buresgan/newton_schulz.hpp>
#include <buresgan/train.hpp>

namespace buresgan {

// Outcome of one randomized identity check.  max_error is the worst
// normalized error over all sampled cases; the property holds when it
// stays at or below the tolerance.
struct PropertyResult {
    std::string name;
    double max_error { 0.0 };
    double tolerance { 0.0 };
    int cases { 0 };
    bool pass { false };

    static PropertyResult of(std::string name,
                             double max_error,
                             double tolerance,
                             int cases)
    {
        PropertyResult r;
        r.name = std::move(name);
        r.max_error = max_error;
        r.tolerance = tolerance;
        r.cases = cases;
        r.pass = max_error <= tolerance;
        return r;
    }
};

namespace detail {

inline Matrix random_matrix(Rng& rng, int rows, int cols)
{
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            m(i, j) = rng.uniform(-1.0, 1.0);
        }
    }
    return m;
}

inline Matrix random_orthogonal(Rng& rng, int n)
{
    Matrix q(n, n);
    for (int j = 0; j < n; ++j) {
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) {
            v[i] = rng.normal();
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (int k = 0; k < j; ++k) {
                double dot = 0.0;
                for (int i = 0; i < n; ++i) {
                    dot += v[i] * q(i, k);
                }
                for (int i = 0; i < n; ++i) {
                    v[i] -= dot * q(i, k);
                }
            }
        }
        double norm = 0.0;
        for (int i = 0; i < n; ++i) {
            norm += v[i] * v[i];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-8) {
            return random_orthogonal(rng, n);
        }
        for (int i = 0; i < n; ++i) {
            q(i, j) = v[i] / norm;
        }
    }
    return q;
}

// Random symmetric PSD matrix with eigenvalues spread log-uniformly over
// [1/condition, 1], so the conditioning is controlled exactly.
inline Matrix random_psd(Rng& rng, int n, double condition)
{
    const Matrix q = random_orthogonal(rng, n);
    Matrix scaled(n, n, 0.0);
    for (int j = 0; j < n; ++j) {
        const double t = n == 1 ? 0.0 : static_cast<double>(j) / (n - 1);
        const double ev = std::pow(condition, -t) * std::exp(
          rng.uniform(-0.05, 0.05) * std::log(std::max(condition, 2.0)));
        const double lambda = std::clamp(ev, 1.0 / condition, 1.0);
        for (int i = 0; i < n; ++i) {
            scaled(i, j) = q(i, j) * lambda;
        }
    }
    return matmul(scaled, q, false, true);
}

inline double trace_inner(const Matrix& u, const Matrix& m)
{
    double t = 0.0;
    for (int i = 0; i < u.rows(); ++i) {
        for (int j = 0; j < u.cols(); ++j) {
            t += u(i, j) * m(i, j);
        }
    }
    return t;
}

// Orthogonal polar factor of a full-rank square matrix, computed through
// the eigendecomposition of the Gram matrix so it is independent of the
// iterative square root under test.
inline Matrix polar_factor(const Matrix& m)
{
    const Matrix gram = matmul(m, m, true, false);
    const SpectralDecomposition e = sym_eig(gram);
    const int n = gram.rows();
    const double lead = std::max(e.eigenvalues.front(), 0.0);
    Matrix scaled(n, n, 0.0);
    for (int j = 0; j < n; ++j) {
        const double ev = e.eigenvalues[j];
        const double inv = ev > 1e-12 * std::max(lead, 1.0)
                             ? 1.0 / std::sqrt(ev)
                             : 0.0;
        for (int i = 0; i < n; ++i) {
            scaled(i, j) = e.V(i, j) * inv;
        }
    }
    const Matrix inv_sqrt = matmul(scaled, e.V, false, true);
    return matmul(m, inv_sqrt);
}

} // namespace detail

// Agreement of the covariance-side and kernel-side evaluations of the
// squared distance on raw feature batches, with no diagonal jitter.
// Batches are drawn with b >= 2 d + 2 so both covariance factors have
// full rank: a fixed-depth iterative root cannot finish lifting
// near-zero eigenvalues, and the two routes only agree once the root
// has actually converged on both sides.
inline PropertyResult check_primal_dual(std::uint64_t seed,
                                        int pairs,
                                        int max_batch,
                                        int max_dim,
                                        int sqrt_iterations,
                                        double tolerance = 1e-6)
{
    Rng rng = Rng(seed).split(1);
    const int dim_cap = std::min(max_dim, (max_batch - 2) / 2);
    double worst = 0.0;
    for (int c = 0; c < pairs; ++c) {
        const int d = 1 + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(dim_cap)));
        const int lo = 2 * d + 2;
        const int b = lo + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(max_batch - lo + 1)));
        const FeatureBatch fd =
          embed_batch(detail::random_matrix(rng, b, d));
        const FeatureBatch fg =
          embed_batch(detail::random_matrix(rng, b, d));
        const double primal = bures_primal(
          covariance(fd, 0.0), covariance(fg, 0.0), sqrt_iterations);
        const double dual = bures_dual(fd, fg, sqrt_iterations);
        worst = std::max(worst,
                         std::abs(primal - dual) / (1.0 + std::abs(primal)));
    }
    return PropertyResult::of("primal_dual_agreement", worst, tolerance,
                              pairs);
}

// Trace of the square root of a product is invariant under pulling the
// factor of B = Y^T Y around the product; both sides go through the
// eigendecomposition oracle only.
inline PropertyResult check_product_root_trace(std::uint64_t seed,
                                               int pairs,
                                               int max_dim,
                                               double tolerance = 1e-8)
{
    Rng rng = Rng(seed).split(2);
    double worst = 0.0;
    for (int c = 0; c < pairs; ++c) {
        const int n = 1 + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(max_dim)));
        const Matrix a = detail::random_psd(rng, n, 100.0);
        const Matrix y = detail::random_matrix(rng, n, n);
        const Matrix b = matmul(y, y, true, false);

        const double lhs = trace_sqrt_product_oracle(a, b);
        const Matrix sandwich =
          matmul(matmul(y, a), y, false, true);
        const double rhs = trace(sqrtm_eig_oracle(sandwich));

        const double scale = 1.0 + trace(a) * trace(b);
        worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    return PropertyResult::of("product_root_trace", worst, tolerance, pairs);
}

// The orthogonal polar factor attains the nuclear norm as the value of
// trace(U^T M) and no sampled orthogonal matrix gets above it.
inline PropertyResult check_polar_optimality(std::uint64_t seed,
                                             int matrices,
                                             int max_dim,
                                             double tolerance = 1e-8)
{
    Rng rng = Rng(seed).split(3);
    double worst = 0.0;
    for (int c = 0; c < matrices; ++c) {
        const int n = 2 + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(max_dim - 1)));
        const Matrix m = detail::random_matrix(rng, n, n);
        const double nuclear = nuclear_norm_oracle(m);
        const double attained =
          detail::trace_inner(detail::polar_factor(m), m);
        worst = std::max(worst, std::abs(attained - nuclear));
    }
    return PropertyResult::of("polar_achieves_nuclear_norm", worst,
                              tolerance, matrices);
}

inline PropertyResult check_orthogonal_bound(std::uint64_t seed,
                                             int matrices,
                                             int max_dim,
                                             int orthogonals_per_matrix,
                                             double tolerance = 1e-10)
{
    Rng rng = Rng(seed).split(4);
    double worst = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < matrices; ++c) {
        const int n = 2 + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(max_dim - 1)));
        const Matrix m = detail::random_matrix(rng, n, n);
        const double nuclear = nuclear_norm_oracle(m);
        for (int u = 0; u < orthogonals_per_matrix; ++u) {
            const Matrix q = detail::random_orthogonal(rng, n);
            worst = std::max(
              worst, detail::trace_inner(q, m) - nuclear);
        }
    }
    return PropertyResult::of("orthogonal_never_exceeds_nuclear_norm",
                              worst, tolerance,
                              matrices * orthogonals_per_matrix);
}

// The unrolled iterative square root against the eigendecomposition
// square root on conditioned PSD matrices, in relative Frobenius error.
inline PropertyResult check_sqrt_fidelity(std::uint64_t seed,
                                          int matrices,
                                          int max_dim,
                                          double max_condition,
                                          int sqrt_iterations,
                                          double tolerance = 1e-6)
{
    Rng rng = Rng(seed).split(5);
    double worst = 0.0;
    for (int c = 0; c < matrices; ++c) {
        const int n = 2 + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(max_dim - 1)));
        const double condition =
          std::exp(rng.uniform(0.0, std::log(max_condition)));
        const Matrix s = detail::random_psd(rng, n, condition);
        const Matrix iterative = sqrtm_newton_schulz(s, sqrt_iterations);
        const Matrix reference = sqrtm_eig_oracle(s);
        const double rel = frobenius_norm(sub(iterative, reference))
                           / std::max(frobenius_norm(reference), 1e-300);
        worst = std::max(worst, rel);
    }
    return PropertyResult::of("sqrt_fidelity", worst, tolerance, matrices);
}

// Eigendecomposition sanity: reconstruction and orthonormality.
inline PropertyResult check_eig_reconstruction(std::uint64_t seed,
                                               int matrices,
                                               int max_dim,
                                               double tolerance = 1e-9)
{
    Rng rng = Rng(seed).split(6);
    double worst = 0.0;
    for (int c = 0; c < matrices; ++c) {
        const int n = 1 + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(max_dim)));
        Matrix s = detail::random_matrix(rng, n, n);
        s = scale(add(s, transpose(s)), 0.5);
        const SpectralDecomposition e = sym_eig(s);

        Matrix scaled = e.V;
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                scaled(i, j) *= e.eigenvalues[j];
            }
        }
        const Matrix rebuilt = matmul(scaled, e.V, false, true);
        const double rec = frobenius_norm(sub(rebuilt, s))
                           / std::max(frobenius_norm(s), 1e-300);
        const Matrix gram =
          matmul(e.V, e.V, true, false);
        const double ortho = max_abs(sub(gram, Matrix::identity(n)));
        worst = std::max({ worst, rec, ortho });
    }
    return PropertyResult::of("eig_reconstruction", worst, tolerance,
                              matrices);
}

// For diagonal covariances the squared distance collapses to the scalar
// formula sum(a + b - 2 sqrt(a b)), which checks the full pipeline
// against arithmetic that shares no code with it.
inline PropertyResult check_commuting_closed_form(std::uint64_t seed,
                                                  int pairs,
                                                  int max_dim,
                                                  int sqrt_iterations,
                                                  double tolerance = 1e-6)
{
    Rng rng = Rng(seed).split(7);
    double worst = 0.0;
    for (int c = 0; c < pairs; ++c) {
        const int n = 1 + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(max_dim)));
        Matrix a(n, n, 0.0);
        Matrix b(n, n, 0.0);
        double expected = 0.0;
        for (int i = 0; i < n; ++i) {
            const double ai = rng.uniform(0.01, 2.0);
            const double bi = rng.uniform(0.01, 2.0);
            a(i, i) = ai;
            b(i, i) = bi;
            expected += ai + bi - 2.0 * std::sqrt(ai * bi);
        }
        const double got = bures_primal(CovarianceMatrix(a),
                                        CovarianceMatrix(b),
                                        sqrt_iterations);
        worst = std::max(worst,
                         std::abs(got - expected) / (1.0 + expected));
    }
    return PropertyResult::of("commuting_closed_form", worst, tolerance,
                              pairs);
}

// Analytic gradients of the generator loss against central differences.
inline PropertyResult check_generator_loss_gradient(std::uint64_t seed,
                                                    int points,
                                                    double tolerance = 1e-4)
{
    Rng rng = Rng(seed).split(8);
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        const Matrix s = detail::random_matrix(rng, 7, 1);
        const GradCheckReport r = grad_check(
          [](Tape& tape, Tape::NodeId x) {
              return generator_loss_node(tape, x);
          },
          s);
        worst = std::max(worst, r.max_rel_error);
    }
    return PropertyResult::of("generator_loss_gradient", worst, tolerance,
                              points);
}

inline PropertyResult
check_discriminator_loss_gradient(std::uint64_t seed,
                                  int points,
                                  double tolerance = 1e-4)
{
    Rng rng = Rng(seed).split(9);
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        const Matrix s_real = detail::random_matrix(rng, 6, 1);
        const Matrix s_fake = detail::random_matrix(rng, 6, 1);
        const GradCheckReport vary_real = grad_check(
          [&](Tape& tape, Tape::NodeId x) {
              return discriminator_loss_node(tape, x,
                                             tape.constant(s_fake));
          },
          s_real);
        const GradCheckReport vary_fake = grad_check(
          [&](Tape& tape, Tape::NodeId x) {
              return discriminator_loss_node(tape, tape.constant(s_real),
                                             x);
          },
          s_fake);
        worst = std::max(
          { worst, vary_real.max_rel_error, vary_fake.max_rel_error });
    }
    return PropertyResult::of("discriminator_loss_gradient", worst,
                              tolerance, points);
}

// Gradient of the full distance pipeline (embedding, covariance,
// iterative root) with respect to the raw generated features.
inline PropertyResult check_distance_gradient(std::uint64_t seed,
                                              int points,
                                              int sqrt_iterations,
                                              double tolerance = 1e-4)
{
    Rng rng = Rng(seed).split(10);
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        const Matrix raw_d = detail::random_matrix(rng, 6, 5);
        const Matrix raw_g = detail::random_matrix(rng, 6, 5);
        const GradCheckReport r = grad_check(
          [&](Tape& tape, Tape::NodeId x) {
              const Tape::NodeId pd =
                embed_node(tape, tape.constant(raw_d));
              const Tape::NodeId pg = embed_node(tape, x);
              const Tape::NodeId cd = covariance_node(
                tape, pd, default_covariance_epsilon);
              const Tape::NodeId cg = covariance_node(
                tape, pg, default_covariance_epsilon);
              return bures_primal_node(tape, cd, cg, sqrt_iterations);
          },
          raw_g);
        worst = std::max(worst, r.max_rel_error);
    }
    return PropertyResult::of("distance_gradient", worst, tolerance,
                              points);
}

// Hand-computed loss values at analytically convenient scores.
inline PropertyResult check_loss_closed_forms(std::uint64_t seed,
                                              double tolerance = 1e-12)
{
    (void)seed;
    const double ln2 = std::log(2.0);
    double worst = 0.0;

    const Matrix zeros(3, 1, 0.0);
    worst = std::max(worst, std::abs(generator_loss(zeros) - ln2));
    worst = std::max(worst,
                     std::abs(discriminator_loss(zeros, zeros) - 2.0 * ln2));

    const Matrix ln3(2, 1, std::log(3.0));
    worst = std::max(worst,
                     std::abs(generator_loss(ln3) - std::log(4.0 / 3.0)));
    worst = std::max(
      worst, std::abs(discriminator_loss(ln3, ln3)
                      - (std::log(4.0 / 3.0) + std::log(4.0))));
    return PropertyResult::of("loss_closed_forms", worst, tolerance, 4);
}

// The whole randomized suite at sizes meant for interactive use.  The
// iterative-root depth is a parameter so a deliberately crippled root
// (one iteration) demonstrably breaks the cross-checks.
inline std::vector<PropertyResult>
run_property_suite(std::uint64_t seed,
                   int sqrt_iterations = default_sqrt_iterations)
{
    std::vector<PropertyResult> results;
    results.push_back(
      check_primal_dual(seed, 200, 16, 16, sqrt_iterations));
    results.push_back(check_product_root_trace(seed, 200, 12));
    results.push_back(check_polar_optimality(seed, 50, 8));
    results.push_back(check_orthogonal_bound(seed, 50, 8, 20));
    results.push_back(
      check_sqrt_fidelity(seed, 100, 32, 1e4, sqrt_iterations));
    results.push_back(check_eig_reconstruction(seed, 100, 12));
    results.push_back(
      check_commuting_closed_form(seed, 100, 12, sqrt_iterations));
    results.push_back(check_generator_loss_gradient(seed, 5));
    results.push_back(check_discriminator_loss_gradient(seed, 5));
    results.push_back(
      check_distance_gradient(seed, 5, sqrt_iterations));
    results.push_back(check_loss_closed_forms(seed));
    return results;
}

} // namespace buresgan
