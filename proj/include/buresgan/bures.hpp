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

#include <buresgan/autodiff.hpp>
#include <buresgan/errors.hpp>
#include <buresgan/matrix.hpp>

#include <cmath>
#include <string>
#include <utility>

namespace buresgan {

constexpr double default_covariance_epsilon = 1e-14;
constexpr int default_sqrt_iterations = 15;

// A batch of embedded features: rows are centered then scaled to unit
// Euclidean norm, except rows that were exactly zero after centering,
// which stay zero.
class FeatureBatch
{
public:
    explicit FeatureBatch(Matrix phi) : phi_ { std::move(phi) }
    {
        for (int i = 0; i < phi_.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < phi_.cols(); ++j) {
                s += phi_(i, j) * phi_(i, j);
            }
            const double norm = std::sqrt(s);
            if (norm != 0.0 && (norm < 1.0 - 1e-6 || norm > 1.0 + 1e-6)) {
                throw InvalidValueError(
                  "FeatureBatch: row " + std::to_string(i) + " has norm "
                  + std::to_string(norm)
                  + ", expected unit or exactly zero");
            }
        }
    }

    const Matrix& phi() const { return phi_; }
    int batch_size() const { return phi_.rows(); }
    int feature_dim() const { return phi_.cols(); }

private:
    Matrix phi_;
};

class CovarianceMatrix
{
public:
    explicit CovarianceMatrix(Matrix c) : c_ { std::move(c) }
    {
        if (c_.rows() != c_.cols()) {
            throw DimensionError("CovarianceMatrix: must be square");
        }
    }

    const Matrix& matrix() const { return c_; }
    int dim() const { return c_.rows(); }

private:
    Matrix c_;
};

struct KernelTriple {
    Matrix k_d;  // inner products within the first batch
    Matrix k_g;  // inner products within the second batch
    Matrix k_dg; // cross inner products, first against second
};

// ---- tape-level building blocks -------------------------------------
//
// The scalar entry points below evaluate these same graphs on a throwaway
// tape, so values on the training path and values reported by the plain
// API come from one implementation.

inline Tape::NodeId embed_node(Tape& tape, Tape::NodeId raw)
{
    if (tape.value(raw).rows() < 2) {
        throw BatchTooSmallError(
          "embed_batch: need at least 2 rows to center, got "
          + std::to_string(tape.value(raw).rows()));
    }
    return tape.row_l2_normalize(tape.batch_center(raw));
}

inline Tape::NodeId covariance_node(Tape& tape,
                                    Tape::NodeId phi,
                                    double epsilon = default_covariance_epsilon)
{
    const Tape::NodeId gram =
      tape.matmul(tape.transpose(phi), phi);
    return epsilon == 0.0 ? gram : tape.diag_add(gram, epsilon);
}

inline Tape::NodeId bures_primal_node(Tape& tape,
                                      Tape::NodeId cd,
                                      Tape::NodeId cg,
                                      int sqrt_iterations = default_sqrt_iterations)
{
    const Tape::NodeId traces = tape.add(tape.trace(cd), tape.trace(cg));
    const Tape::NodeId cross = tape.trace(
      sqrtm_ns_node(tape, tape.matmul(cg, cd), sqrt_iterations));
    return tape.sub(traces, tape.scale(cross, 2.0));
}

inline Tape::NodeId bures_dual_node(Tape& tape,
                                    Tape::NodeId phi_d,
                                    Tape::NodeId phi_g,
                                    int sqrt_iterations = default_sqrt_iterations)
{
    const Tape::NodeId k_d = tape.matmul(phi_d, tape.transpose(phi_d));
    const Tape::NodeId k_g = tape.matmul(phi_g, tape.transpose(phi_g));
    const Tape::NodeId k_dg = tape.matmul(phi_d, tape.transpose(phi_g));
    const Tape::NodeId traces = tape.add(tape.trace(k_d), tape.trace(k_g));
    const Tape::NodeId cross = tape.trace(sqrtm_ns_node(
      tape, tape.matmul(k_dg, tape.transpose(k_dg)), sqrt_iterations));
    return tape.sub(traces, tape.scale(cross, 2.0));
}

inline Tape::NodeId frobenius_sq_node(Tape& tape,
                                      Tape::NodeId cd,
                                      Tape::NodeId cg)
{
    const Tape::NodeId diff = tape.sub(cd, cg);
    const Matrix& v = tape.value(diff);
    return tape.scale(tape.mean(tape.mul(diff, diff)),
                      static_cast<double>(v.rows()) * v.cols());
}

// ---- plain entry points ----------------------------------------------

inline FeatureBatch embed_batch(const Matrix& raw)
{
    Tape tape;
    return FeatureBatch(tape.value(embed_node(tape, tape.constant(raw))));
}

inline CovarianceMatrix covariance(const FeatureBatch& batch,
                                   double epsilon = default_covariance_epsilon)
{
    Tape tape;
    return CovarianceMatrix(tape.value(
      covariance_node(tape, tape.constant(batch.phi()), epsilon)));
}

inline KernelTriple kernels(const FeatureBatch& d, const FeatureBatch& g)
{
    if (d.feature_dim() != g.feature_dim()) {
        throw DimensionError("kernels: feature dimensions disagree");
    }
    return { matmul(d.phi(), d.phi(), false, true),
             matmul(g.phi(), g.phi(), false, true),
             matmul(d.phi(), g.phi(), false, true) };
}

// Squared distance from the covariance pair.  Small negative values are
// legitimate rounding artifacts of the iterative root and are returned
// unchanged; anything below -1e-6 means the inputs were not valid
// covariances.
inline double bures_primal(const CovarianceMatrix& cd,
                           const CovarianceMatrix& cg,
                           int sqrt_iterations = default_sqrt_iterations)
{
    if (cd.dim() != cg.dim()) {
        throw DimensionError("bures_primal: dimensions disagree");
    }
    Tape tape;
    const double value =
      tape.value(bures_primal_node(tape, tape.constant(cd.matrix()),
                                   tape.constant(cg.matrix()),
                                   sqrt_iterations))(0, 0);
    if (value < -1e-6) {
        throw InvalidValueError("bures_primal: value " + std::to_string(value)
                                + " is negative beyond rounding tolerance");
    }
    return value;
}

// Same distance from the batch side: kernel matrices replace covariance
// matrices, which wins when the batch is smaller than the feature space.
inline double bures_dual(const FeatureBatch& d,
                         const FeatureBatch& g,
                         int sqrt_iterations = default_sqrt_iterations)
{
    if (d.feature_dim() != g.feature_dim()) {
        throw DimensionError("bures_dual: feature dimensions disagree");
    }
    Tape tape;
    const double value = tape.value(
      bures_dual_node(tape, tape.constant(d.phi()), tape.constant(g.phi()),
                      sqrt_iterations))(0, 0);
    if (value < -1e-6) {
        throw InvalidValueError("bures_dual: value " + std::to_string(value)
                                + " is negative beyond rounding tolerance");
    }
    return value;
}

enum class BuresBranch { primal, dual };

struct BuresAutoResult {
    double value;
    BuresBranch branch;
};

// Picks the cheaper formulation by comparing batch size against feature
// dimension; ties go to the dual, whose kernel matrices are then no
// larger than the covariance matrices.
inline BuresAutoResult bures_auto(const FeatureBatch& d,
                                  const FeatureBatch& g,
                                  double epsilon = default_covariance_epsilon,
                                  int sqrt_iterations = default_sqrt_iterations)
{
    const int b = std::max(d.batch_size(), g.batch_size());
    if (b > d.feature_dim()) {
        return { bures_primal(covariance(d, epsilon), covariance(g, epsilon),
                              sqrt_iterations),
                 BuresBranch::primal };
    }
    return { bures_dual(d, g, sqrt_iterations), BuresBranch::dual };
}

inline double frobenius_sq(const CovarianceMatrix& cd,
                           const CovarianceMatrix& cg)
{
    if (cd.dim() != cg.dim()) {
        throw DimensionError("frobenius_sq: dimensions disagree");
    }
    Tape tape;
    return tape.value(frobenius_sq_node(tape, tape.constant(cd.matrix()),
                                        tape.constant(cg.matrix())))(0, 0);
}

} // namespace buresgan
