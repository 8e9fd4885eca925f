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

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace buresgan {

// Reverse-mode tape over dense matrices.  Nodes are recorded in program
// order, so node ids are already a topological order and the backward
// pass is a single reverse scan.  The tape is rebuilt every iteration
// (define-by-run); clear() keeps the node storage to limit churn.
class Tape
{
public:
    using NodeId = int;

    enum class Op {
        input,
        matmul,
        transpose,
        add,
        sub,
        mul,
        scale,
        tanh_op,
        softplus,
        row_sum,
        mean,
        trace_op,
        batch_center,
        row_l2_normalize,
        diag_add,
        sqrt_elem,
        scalar_mul,
        scalar_div,
    };

    struct Node {
        Matrix value;
        Op op { Op::input };
        NodeId parent_a { -1 };
        NodeId parent_b { -1 };
        bool requires_grad { false };
        double aux { 0.0 };
        // per-row norms for row_l2_normalize, empty otherwise
        std::vector<double> cache;
    };

    NodeId input(Matrix value, bool requires_grad = true)
    {
        return push(std::move(value), Op::input, -1, -1, requires_grad);
    }

    NodeId constant(Matrix value)
    {
        return push(std::move(value), Op::input, -1, -1, false);
    }

    NodeId matmul(NodeId a, NodeId b)
    {
        return push(buresgan::matmul(val(a), val(b)), Op::matmul, a, b,
                    grad(a) || grad(b));
    }

    NodeId transpose(NodeId a)
    {
        return push(buresgan::transpose(val(a)), Op::transpose, a, -1,
                    grad(a));
    }

    NodeId add(NodeId a, NodeId b)
    {
        return push(buresgan::add(val(a), val(b)), Op::add, a, b,
                    grad(a) || grad(b));
    }

    NodeId sub(NodeId a, NodeId b)
    {
        return push(buresgan::sub(val(a), val(b)), Op::sub, a, b,
                    grad(a) || grad(b));
    }

    // elementwise (Hadamard) product
    NodeId mul(NodeId a, NodeId b)
    {
        const Matrix& x = val(a);
        const Matrix& y = val(b);
        if (x.rows() != y.rows() || x.cols() != y.cols()) {
            throw DimensionError("tape mul: shapes disagree");
        }
        Matrix out = x;
        for (size_t i = 0; i < out.size(); ++i) {
            out.data()[i] *= y.data()[i];
        }
        return push(std::move(out), Op::mul, a, b, grad(a) || grad(b));
    }

    NodeId scale(NodeId a, double c)
    {
        NodeId id =
          push(buresgan::scale(val(a), c), Op::scale, a, -1, grad(a));
        nodes_[id].aux = c;
        return id;
    }

    NodeId tanh(NodeId a)
    {
        Matrix out = val(a);
        for (size_t i = 0; i < out.size(); ++i) {
            out.data()[i] = std::tanh(out.data()[i]);
        }
        return push(std::move(out), Op::tanh_op, a, -1, grad(a));
    }

    NodeId softplus(NodeId a)
    {
        Matrix out = val(a);
        for (size_t i = 0; i < out.size(); ++i) {
            const double x = out.data()[i];
            out.data()[i] = x > 0.0 ? x + std::log1p(std::exp(-x))
                                    : std::log1p(std::exp(x));
        }
        return push(std::move(out), Op::softplus, a, -1, grad(a));
    }

    // m x n -> m x 1
    NodeId row_sum(NodeId a)
    {
        const Matrix& x = val(a);
        Matrix out(x.rows(), 1);
        for (int i = 0; i < x.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < x.cols(); ++j) {
                s += x(i, j);
            }
            out(i, 0) = s;
        }
        return push(std::move(out), Op::row_sum, a, -1, grad(a));
    }

    // mean over all entries -> 1 x 1
    NodeId mean(NodeId a)
    {
        const Matrix& x = val(a);
        if (x.size() == 0) {
            throw DimensionError("tape mean: empty matrix");
        }
        double s = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            s += x.data()[i];
        }
        Matrix out(1, 1);
        out(0, 0) = s / static_cast<double>(x.size());
        return push(std::move(out), Op::mean, a, -1, grad(a));
    }

    NodeId trace(NodeId a)
    {
        const Matrix& x = val(a);
        if (x.rows() != x.cols()) {
            throw DimensionError("tape trace: matrix must be square");
        }
        Matrix out(1, 1);
        out(0, 0) = buresgan::trace(x);
        return push(std::move(out), Op::trace_op, a, -1, grad(a));
    }

    // subtract the per-column mean from every row
    NodeId batch_center(NodeId a)
    {
        const Matrix& x = val(a);
        if (x.rows() == 0) {
            throw DimensionError("tape batch_center: empty batch");
        }
        return push(center(x), Op::batch_center, a, -1, grad(a));
    }

    // scale every row to unit Euclidean norm; the denominator gets a
    // 1e-12 floor so all-zero rows stay zero instead of producing NaN
    NodeId row_l2_normalize(NodeId a)
    {
        const Matrix& x = val(a);
        Matrix out = x;
        std::vector<double> norms(x.rows());
        for (int i = 0; i < x.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < x.cols(); ++j) {
                s += x(i, j) * x(i, j);
            }
            const double n = std::sqrt(s);
            norms[i] = n;
            const double d = n + row_normalize_epsilon;
            for (int j = 0; j < x.cols(); ++j) {
                out(i, j) /= d;
            }
        }
        NodeId id =
          push(std::move(out), Op::row_l2_normalize, a, -1, grad(a));
        nodes_[id].cache = std::move(norms);
        return id;
    }

    NodeId diag_add(NodeId a, double epsilon)
    {
        const Matrix& x = val(a);
        if (x.rows() != x.cols()) {
            throw DimensionError("tape diag_add: matrix must be square");
        }
        Matrix out = x;
        for (int i = 0; i < x.rows(); ++i) {
            out(i, i) += epsilon;
        }
        NodeId id = push(std::move(out), Op::diag_add, a, -1, grad(a));
        nodes_[id].aux = epsilon;
        return id;
    }

    // elementwise square root; entries must be non-negative
    NodeId sqrt_elem(NodeId a)
    {
        Matrix out = val(a);
        for (size_t i = 0; i < out.size(); ++i) {
            if (out.data()[i] < 0.0) {
                throw InvalidValueError(
                  "tape sqrt_elem: negative entry "
                  + std::to_string(out.data()[i]));
            }
            out.data()[i] = std::sqrt(out.data()[i]);
        }
        return push(std::move(out), Op::sqrt_elem, a, -1, grad(a));
    }

    // matrix times a 1x1 node
    NodeId scalar_mul(NodeId a, NodeId s)
    {
        const Matrix& sv = val(s);
        if (sv.rows() != 1 || sv.cols() != 1) {
            throw DimensionError("tape scalar_mul: scalar operand not 1x1");
        }
        return push(buresgan::scale(val(a), sv(0, 0)), Op::scalar_mul, a, s,
                    grad(a) || grad(s));
    }

    // matrix divided by a 1x1 node
    NodeId scalar_div(NodeId a, NodeId s)
    {
        const Matrix& sv = val(s);
        if (sv.rows() != 1 || sv.cols() != 1) {
            throw DimensionError("tape scalar_div: scalar operand not 1x1");
        }
        return push(buresgan::scale(val(a), 1.0 / sv(0, 0)), Op::scalar_div,
                    a, s, grad(a) || grad(s));
    }

    const Matrix& value(NodeId id) const { return nodes_[id].value; }

    size_t size() const { return nodes_.size(); }

    void clear()
    {
        nodes_.clear();
        gradients_.clear();
    }

    // Seed d(root)/d(root) = 1 and sweep the tape in reverse.  The root
    // must be scalar.  Accumulators are reset on entry, so calling this
    // twice gives the same gradients twice rather than doubled ones, and
    // nodes the root does not depend on read back as zero.
    void backward(NodeId root)
    {
        const Matrix& rv = nodes_[root].value;
        if (rv.rows() != 1 || rv.cols() != 1) {
            throw InvalidValueError(
              "backward: root must be a 1x1 scalar node");
        }
        gradients_.assign(nodes_.size(), Matrix());
        gradients_[root] = Matrix(1, 1, 1.0);
        for (NodeId id = root; id >= 0; --id) {
            if (gradients_[id].size() == 0 || !nodes_[id].requires_grad) {
                continue;
            }
            propagate(id);
        }
    }

    // Gradient of the last backward() root with respect to this node.
    Matrix gradient(NodeId id) const
    {
        if (static_cast<size_t>(id) < gradients_.size()
            && gradients_[id].size() != 0) {
            return gradients_[id];
        }
        return Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
    }

    static constexpr double row_normalize_epsilon = 1e-12;

private:
    std::vector<Node> nodes_;
    std::vector<Matrix> gradients_;

    const Matrix& val(NodeId id) const { return nodes_[id].value; }
    bool grad(NodeId id) const { return nodes_[id].requires_grad; }

    NodeId push(Matrix value, Op op, NodeId a, NodeId b, bool requires_grad)
    {
        Node node;
        node.value = std::move(value);
        node.op = op;
        node.parent_a = a;
        node.parent_b = b;
        node.requires_grad = requires_grad;
        nodes_.push_back(std::move(node));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    static Matrix center(const Matrix& x)
    {
        Matrix out = x;
        for (int j = 0; j < x.cols(); ++j) {
            double m = 0.0;
            for (int i = 0; i < x.rows(); ++i) {
                m += x(i, j);
            }
            m /= x.rows();
            for (int i = 0; i < x.rows(); ++i) {
                out(i, j) -= m;
            }
        }
        return out;
    }

    void accumulate(NodeId id, Matrix g)
    {
        if (id < 0 || !nodes_[id].requires_grad) {
            return;
        }
        Matrix& slot = gradients_[id];
        if (slot.size() == 0) {
            slot = std::move(g);
        } else {
            for (size_t i = 0; i < slot.size(); ++i) {
                slot.data()[i] += g.data()[i];
            }
        }
    }

    void propagate(NodeId id)
    {
        const Node& node = nodes_[id];
        const Matrix& g = gradients_[id];
        const NodeId a = node.parent_a;
        const NodeId b = node.parent_b;
        switch (node.op) {
            case Op::input:
                break;
            case Op::matmul:
                accumulate(a, buresgan::matmul(g, val(b), false, true));
                accumulate(b, buresgan::matmul(val(a), g, true, false));
                break;
            case Op::transpose:
                accumulate(a, buresgan::transpose(g));
                break;
            case Op::add:
                accumulate(a, g);
                accumulate(b, g);
                break;
            case Op::sub:
                accumulate(a, g);
                accumulate(b, buresgan::scale(g, -1.0));
                break;
            case Op::mul: {
                Matrix ga = g;
                const Matrix& bv = val(b);
                for (size_t i = 0; i < ga.size(); ++i) {
                    ga.data()[i] *= bv.data()[i];
                }
                accumulate(a, std::move(ga));
                Matrix gb = g;
                const Matrix& av = val(a);
                for (size_t i = 0; i < gb.size(); ++i) {
                    gb.data()[i] *= av.data()[i];
                }
                accumulate(b, std::move(gb));
                break;
            }
            case Op::scale:
                accumulate(a, buresgan::scale(g, node.aux));
                break;
            case Op::tanh_op: {
                Matrix ga = g;
                const Matrix& y = node.value;
                for (size_t i = 0; i < ga.size(); ++i) {
                    ga.data()[i] *= 1.0 - y.data()[i] * y.data()[i];
                }
                accumulate(a, std::move(ga));
                break;
            }
            case Op::softplus: {
                Matrix ga = g;
                const Matrix& x = val(a);
                for (size_t i = 0; i < ga.size(); ++i) {
                    const double xi = x.data()[i];
                    const double sig = xi > 0.0
                                         ? 1.0 / (1.0 + std::exp(-xi))
                                         : std::exp(xi)
                                             / (1.0 + std::exp(xi));
                    ga.data()[i] *= sig;
                }
                accumulate(a, std::move(ga));
                break;
            }
            case Op::row_sum: {
                const Matrix& x = val(a);
                Matrix ga(x.rows(), x.cols());
                for (int i = 0; i < x.rows(); ++i) {
                    for (int j = 0; j < x.cols(); ++j) {
                        ga(i, j) = g(i, 0);
                    }
                }
                accumulate(a, std::move(ga));
                break;
            }
            case Op::mean: {
                const Matrix& x = val(a);
                Matrix ga(x.rows(), x.cols());
                const double share = g(0, 0) / static_cast<double>(x.size());
                for (size_t i = 0; i < ga.size(); ++i) {
                    ga.data()[i] = share;
                }
                accumulate(a, std::move(ga));
                break;
            }
            case Op::trace_op: {
                const int n = val(a).rows();
                accumulate(a, buresgan::scale(Matrix::identity(n), g(0, 0)));
                break;
            }
            case Op::batch_center:
                // the centering projector is symmetric, so the adjoint is
                // the same centering applied to the incoming gradient
                accumulate(a, center(g));
                break;
            case Op::row_l2_normalize: {
                const Matrix& x = val(a);
                Matrix ga(x.rows(), x.cols());
                for (int i = 0; i < x.rows(); ++i) {
                    const double n = node.cache[i];
                    const double d = n + row_normalize_epsilon;
                    if (n == 0.0) {
                        for (int j = 0; j < x.cols(); ++j) {
                            ga(i, j) = g(i, j) / d;
                        }
                        continue;
                    }
                    double dot = 0.0;
                    for (int j = 0; j < x.cols(); ++j) {
                        dot += x(i, j) * g(i, j);
                    }
                    const double coeff = dot / (n * d * d);
                    for (int j = 0; j < x.cols(); ++j) {
                        ga(i, j) = g(i, j) / d - x(i, j) * coeff;
                    }
                }
                accumulate(a, std::move(ga));
                break;
            }
            case Op::diag_add:
                accumulate(a, g);
                break;
            case Op::sqrt_elem: {
                Matrix ga = g;
                const Matrix& y = node.value;
                for (size_t i = 0; i < ga.size(); ++i) {
                    ga.data()[i] =
                      y.data()[i] > 0.0
                        ? ga.data()[i] * 0.5 / y.data()[i]
                        : 0.0;
                }
                accumulate(a, std::move(ga));
                break;
            }
            case Op::scalar_mul: {
                const double s = val(b)(0, 0);
                accumulate(a, buresgan::scale(g, s));
                Matrix gb(1, 1);
                const Matrix& av = val(a);
                for (size_t i = 0; i < av.size(); ++i) {
                    gb(0, 0) += g.data()[i] * av.data()[i];
                }
                accumulate(b, std::move(gb));
                break;
            }
            case Op::scalar_div: {
                const double s = val(b)(0, 0);
                accumulate(a, buresgan::scale(g, 1.0 / s));
                Matrix gb(1, 1);
                const Matrix& av = val(a);
                for (size_t i = 0; i < av.size(); ++i) {
                    gb(0, 0) += g.data()[i] * av.data()[i];
                }
                gb(0, 0) = -gb(0, 0) / (s * s);
                accumulate(b, std::move(gb));
                break;
            }
        }
    }
};

// Matrix square root on the tape: the same coupled iteration as the plain
// version, expressed in primitives so gradients flow through the unrolled
// recurrence.  The Frobenius pre-scaling is itself differentiated, since
// it depends on the input.
inline Tape::NodeId sqrtm_ns_node(Tape& tape, Tape::NodeId m, int iterations)
{
    const Matrix& mv = tape.value(m);
    if (mv.rows() != mv.cols()) {
        throw DimensionError("sqrtm_ns_node: matrix must be square");
    }
    if (frobenius_norm(mv) == 0.0) {
        return tape.scale(m, 0.0);
    }
    const int n = mv.rows();
    const double count = static_cast<double>(n) * n;

    const Tape::NodeId s2 =
      tape.scale(tape.mean(tape.mul(m, m)), count); // squared Frobenius norm
    const Tape::NodeId s = tape.sqrt_elem(s2);
    Tape::NodeId y = tape.scalar_div(m, s);
    Tape::NodeId z = tape.constant(Matrix::identity(n));
    const Tape::NodeId eye3 =
      tape.constant(buresgan::scale(Matrix::identity(n), 3.0));
    for (int k = 0; k < iterations; ++k) {
        const Tape::NodeId t =
          tape.scale(tape.sub(eye3, tape.matmul(z, y)), 0.5);
        y = tape.matmul(y, t);
        z = tape.matmul(t, z);
    }
    return tape.scalar_mul(y, tape.sqrt_elem(s));
}

struct GradCheckReport {
    double max_rel_error { 0.0 };
    Matrix analytic;
    Matrix numeric;
};

// Central-difference check of d(scalar)/d(input).  The builder receives a
// fresh tape and the input node and must return the scalar root.  Errors
// are relative to max(|analytic|, |numeric|, 1e-8) per entry.
inline GradCheckReport grad_check(
  const std::function<Tape::NodeId(Tape&, Tape::NodeId)>& build,
  const Matrix& x0,
  double step = 1e-5)
{
    if (step < 1e-7 || step > 1e-3) {
        throw InvalidValueError(
          "grad_check: step must lie in [1e-7, 1e-3]");
    }

    const auto eval = [&build](const Matrix& x) {
        Tape tape;
        const Tape::NodeId root = build(tape, tape.input(x));
        const Matrix& v = tape.value(root);
        if (v.rows() != 1 || v.cols() != 1) {
            throw InvalidValueError("grad_check: function is not scalar");
        }
        if (!std::isfinite(v(0, 0))) {
            throw EvaluationError(
              "grad_check: function value is not finite");
        }
        return v(0, 0);
    };

    GradCheckReport report;
    {
        Tape tape;
        const Tape::NodeId x = tape.input(x0);
        const Tape::NodeId root = build(tape, x);
        if (!std::isfinite(tape.value(root)(0, 0))) {
            throw EvaluationError(
              "grad_check: function value is not finite");
        }
        tape.backward(root);
        report.analytic = tape.gradient(x);
    }

    report.numeric = Matrix(x0.rows(), x0.cols());
    for (int i = 0; i < x0.rows(); ++i) {
        for (int j = 0; j < x0.cols(); ++j) {
            Matrix xp = x0;
            Matrix xm = x0;
            xp(i, j) += step;
            xm(i, j) -= step;
            report.numeric(i, j) = (eval(xp) - eval(xm)) / (2.0 * step);
        }
    }

    for (int i = 0; i < x0.rows(); ++i) {
        for (int j = 0; j < x0.cols(); ++j) {
            const double a = report.analytic(i, j);
            const double n = report.numeric(i, j);
            const double rel = std::abs(a - n)
                               / std::max({ std::abs(a), std::abs(n), 1e-8 });
            report.max_rel_error = std::max(report.max_rel_error, rel);
        }
    }
    return report;
}

} // namespace buresgan
