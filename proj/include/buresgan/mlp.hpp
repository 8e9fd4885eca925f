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
#include <buresgan/rng.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace buresgan {

enum class Activation { tanh, identity };

// Fully connected network in batch convention: inputs are rows, weights
// are (in x out), biases are (1 x out).
struct Mlp {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
    std::vector<Activation> activations;

    int layer_count() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return weights.front().rows(); }
    int output_dim() const { return weights.back().cols(); }
};

// Glorot-uniform weights, zero biases.  Entries are drawn row-major,
// layer by layer; the draw order is part of the reproducibility contract.
inline Mlp make_mlp(const std::vector<int>& dims,
                    const std::vector<Activation>& activations,
                    Rng& rng)
{
    if (dims.size() < 2 || activations.size() != dims.size() - 1) {
        throw DimensionError(
          "make_mlp: need one activation per layer and at least one layer");
    }
    Mlp mlp;
    mlp.activations = activations;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Matrix w(fan_in, fan_out);
        for (int i = 0; i < fan_in; ++i) {
            for (int j = 0; j < fan_out; ++j) {
                w(i, j) = rng.uniform(-limit, limit);
            }
        }
        mlp.weights.push_back(std::move(w));
        mlp.biases.emplace_back(1, fan_out);
    }
    return mlp;
}

inline Mlp make_generator(int latent_dim, Rng& rng)
{
    return make_mlp({ latent_dim, 128, 128, 2 },
                    { Activation::tanh, Activation::tanh,
                      Activation::identity },
                    rng);
}

inline Mlp make_discriminator(Rng& rng)
{
    return make_mlp({ 2, 128, 128, 1 },
                    { Activation::tanh, Activation::tanh,
                      Activation::identity },
                    rng);
}

// Parameter nodes of one network on one tape.
struct TapedMlp {
    std::vector<Tape::NodeId> weights;
    std::vector<Tape::NodeId> biases;
    const Mlp* model { nullptr };
};

inline TapedMlp record_mlp(Tape& tape, const Mlp& mlp, bool trainable)
{
    TapedMlp taped;
    taped.model = &mlp;
    for (int l = 0; l < mlp.layer_count(); ++l) {
        taped.weights.push_back(tape.input(mlp.weights[l], trainable));
        taped.biases.push_back(tape.input(mlp.biases[l], trainable));
    }
    return taped;
}

struct MlpOutputs {
    Tape::NodeId output;
    // post-activation of the next-to-last layer; this is the feature map
    // the covariance penalty is built on
    Tape::NodeId penultimate;
};

inline MlpOutputs apply_mlp(Tape& tape,
                            const TapedMlp& taped,
                            Tape::NodeId x)
{
    const Mlp& mlp = *taped.model;
    if (mlp.layer_count() < 2) {
        throw DimensionError(
          "apply_mlp: need at least two layers for a feature map");
    }
    const int batch = tape.value(x).rows();
    const Tape::NodeId ones = tape.constant(Matrix(batch, 1, 1.0));
    MlpOutputs out { x, x };
    for (int l = 0; l < mlp.layer_count(); ++l) {
        // bias broadcast as a rank-one product keeps everything within
        // the tape's primitive set
        Tape::NodeId h = tape.add(tape.matmul(out.output, taped.weights[l]),
                                  tape.matmul(ones, taped.biases[l]));
        if (mlp.activations[l] == Activation::tanh) {
            h = tape.tanh(h);
        }
        out.output = h;
        if (l == mlp.layer_count() - 2) {
            out.penultimate = h;
        }
    }
    return out;
}

// Forward pass without gradient bookkeeping, for sampling and evaluation.
inline Matrix mlp_forward(const Mlp& mlp, const Matrix& x)
{
    Tape tape;
    const TapedMlp taped = record_mlp(tape, mlp, false);
    return tape.value(apply_mlp(tape, taped, tape.constant(x)).output);
}

} // namespace buresgan
