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
#include <buresgan/bures.hpp>
#include <buresgan/errors.hpp>
#include <buresgan/matrix.hpp>
#include <buresgan/mlp.hpp>
#include <buresgan/rng.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace buresgan {

// ---- losses ----------------------------------------------------------
//
// Scores are raw logits.  Both losses are kept in softplus form, which is
// the numerically stable way to write the non-saturating objective:
//
//   V_D = mean softplus(-s_real) + mean softplus(s_fake)
//   V_G = mean softplus(-s_fake)

inline Tape::NodeId generator_loss_node(Tape& tape, Tape::NodeId s_fake)
{
    return tape.mean(tape.softplus(tape.scale(s_fake, -1.0)));
}

inline Tape::NodeId discriminator_loss_node(Tape& tape,
                                            Tape::NodeId s_real,
                                            Tape::NodeId s_fake)
{
    return tape.add(tape.mean(tape.softplus(tape.scale(s_real, -1.0))),
                    tape.mean(tape.softplus(s_fake)));
}

inline double generator_loss(const Matrix& s_fake)
{
    Tape tape;
    return tape.value(generator_loss_node(tape, tape.constant(s_fake)))(0, 0);
}

inline double discriminator_loss(const Matrix& s_real, const Matrix& s_fake)
{
    Tape tape;
    return tape.value(discriminator_loss_node(tape, tape.constant(s_real),
                                              tape.constant(s_fake)))(0, 0);
}

// ---- optimizer ---------------------------------------------------------

struct AdamParams {
    double learning_rate { 1e-3 };
    double beta1 { 0.5 };
    double beta2 { 0.999 };
    double epsilon { 1e-8 };
};

struct AdamState {
    Matrix m;
    Matrix v;
    int64_t t { 0 };
};

inline void adam_step(Matrix& param,
                      AdamState& state,
                      const Matrix& grad,
                      const AdamParams& hp)
{
    if (state.t == 0) {
        state.m = Matrix(param.rows(), param.cols());
        state.v = Matrix(param.rows(), param.cols());
    }
    if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
        throw DimensionError("adam_step: gradient shape mismatch");
    }
    state.t += 1;
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < param.size(); ++i) {
        const double g = grad.data()[i];
        double& m = state.m.data()[i];
        double& v = state.v.data()[i];
        m = hp.beta1 * m + (1.0 - hp.beta1) * g;
        v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        param.data()[i] -=
          hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
    }
}

// ---- model and training steps ------------------------------------------

enum class Algorithm { gan, buresgan, alt_buresgan, frobenius2gan };

inline std::string to_string(Algorithm a)
{
    switch (a) {
        case Algorithm::buresgan:
            return "buresgan";
        case Algorithm::alt_buresgan:
            return "alt-buresgan";
        case Algorithm::gan:
            return "gan";
        case Algorithm::frobenius2gan:
            return "frobenius2gan";
    }
    return "unknown";
}

inline Algorithm algorithm_from_string(const std::string& s)
{
    if (s == "buresgan") {
        return Algorithm::buresgan;
    }
    if (s == "alt-buresgan") {
        return Algorithm::alt_buresgan;
    }
    if (s == "gan") {
        return Algorithm::gan;
    }
    if (s == "frobenius2gan") {
        return Algorithm::frobenius2gan;
    }
    throw InvalidValueError(
      "unknown algorithm: " + s
      + " (expected gan, buresgan, alt-buresgan or frobenius2gan)");
}

struct GanModel {
    Mlp generator;
    Mlp discriminator;
    // one slot per parameter matrix: layer 0 weight, layer 0 bias, ...
    std::vector<AdamState> generator_opt;
    std::vector<AdamState> discriminator_opt;
};

// Generator first, then discriminator; biases start at zero and consume
// no draws.
inline GanModel make_gan(int latent_dim, Rng& init_rng)
{
    GanModel model;
    model.generator = make_generator(latent_dim, init_rng);
    model.discriminator = make_discriminator(init_rng);
    model.generator_opt.resize(2 * model.generator.layer_count());
    model.discriminator_opt.resize(2 * model.discriminator.layer_count());
    return model;
}

struct StepSettings {
    int batch_size { 256 };
    int latent_dim { 256 };
    double lambda { 1.0 };
    int sqrt_iterations { default_sqrt_iterations };
    double covariance_epsilon { default_covariance_epsilon };
    AdamParams adam;
};

// One row of the loss log.
struct StepLog {
    double v_g { 0.0 };
    double penalty { 0.0 };
    double v_d { 0.0 };
};

inline Matrix sample_latent(Rng& rng, int batch, int latent_dim)
{
    Matrix z(batch, latent_dim);
    for (int i = 0; i < batch; ++i) {
        for (int j = 0; j < latent_dim; ++j) {
            z(i, j) = rng.normal();
        }
    }
    return z;
}

namespace detail {

enum class Penalty { none, bures, frobenius };

inline void apply_gradients(Mlp& mlp,
                            std::vector<AdamState>& opt,
                            const Tape& tape,
                            const TapedMlp& taped,
                            const AdamParams& hp)
{
    for (int l = 0; l < mlp.layer_count(); ++l) {
        adam_step(mlp.weights[l], opt[2 * l],
                  tape.gradient(taped.weights[l]), hp);
        adam_step(mlp.biases[l], opt[2 * l + 1],
                  tape.gradient(taped.biases[l]), hp);
    }
}

inline void check_finite_loss(double value, const char* which)
{
    if (!std::isfinite(value)) {
        throw ConvergenceError(std::string("training diverged: ") + which
                               + " is not finite");
    }
}

// Generator update on V_G plus an optional covariance penalty.  Returns
// {V_G, penalty value}.
inline std::pair<double, double> generator_update(GanModel& model,
                                                  const Matrix& real,
                                                  const Matrix& z,
                                                  Penalty penalty,
                                                  bool include_v_g,
                                                  double lambda,
                                                  const StepSettings& s)
{
    Tape tape;
    const TapedMlp gen = record_mlp(tape, model.generator, true);
    const TapedMlp disc = record_mlp(tape, model.discriminator, false);

    const MlpOutputs fake = apply_mlp(tape, gen, tape.constant(z));
    const MlpOutputs fake_scored = apply_mlp(tape, disc, fake.output);

    Tape::NodeId root = -1;
    double v_g_value = 0.0;
    double penalty_value = 0.0;

    if (include_v_g) {
        root = generator_loss_node(tape, fake_scored.output);
        v_g_value = tape.value(root)(0, 0);
    }
    if (penalty != Penalty::none) {
        const MlpOutputs real_scored =
          apply_mlp(tape, disc, tape.constant(real));
        const Tape::NodeId phi_d =
          embed_node(tape, real_scored.penultimate);
        const Tape::NodeId phi_g =
          embed_node(tape, fake_scored.penultimate);
        const Tape::NodeId cd =
          covariance_node(tape, phi_d, s.covariance_epsilon);
        const Tape::NodeId cg =
          covariance_node(tape, phi_g, s.covariance_epsilon);
        const Tape::NodeId pen =
          penalty == Penalty::bures
            ? bures_primal_node(tape, cd, cg, s.sqrt_iterations)
            : frobenius_sq_node(tape, cd, cg);
        penalty_value = tape.value(pen)(0, 0);
        root = root < 0 ? pen : tape.add(root, tape.scale(pen, lambda));
    }

    const double total = tape.value(root)(0, 0);
    check_finite_loss(total, "generator objective");
    tape.backward(root);
    apply_gradients(model.generator, model.generator_opt, tape, gen,
                    s.adam);
    return { v_g_value, penalty_value };
}

// Discriminator update on V_D.  The fake batch is generated outside any
// gradient bookkeeping, since only discriminator parameters move here.
inline double discriminator_update(GanModel& model,
                                   const Matrix& real,
                                   const Matrix& z,
                                   const StepSettings& s)
{
    const Matrix fake = mlp_forward(model.generator, z);
    Tape tape;
    const TapedMlp disc = record_mlp(tape, model.discriminator, true);
    const Tape::NodeId s_real =
      apply_mlp(tape, disc, tape.constant(real)).output;
    const Tape::NodeId s_fake =
      apply_mlp(tape, disc, tape.constant(fake)).output;
    const Tape::NodeId root = discriminator_loss_node(tape, s_real, s_fake);
    const double v_d = tape.value(root)(0, 0);
    check_finite_loss(v_d, "discriminator objective");
    tape.backward(root);
    apply_gradients(model.discriminator, model.discriminator_opt, tape,
                    disc, s.adam);
    return v_d;
}

} // namespace detail

// One optimization round for the chosen algorithm, consuming the given
// real batch.  Latent batches are drawn from the latent stream in a fixed
// order per algorithm:
//
//   buresgan / frobenius2gan / gan: z for the generator update, then a
//     fresh z for the discriminator update
//   alt-buresgan: one z per update (penalty, V_G, discriminator), three
//     in total, with the real batch shared across the whole round
inline StepLog train_step(GanModel& model,
                          Algorithm algorithm,
                          const Matrix& real,
                          Rng& latent_stream,
                          const StepSettings& settings)
{
    if (real.rows() != settings.batch_size) {
        throw DimensionError("train_step: real batch size "
                             + std::to_string(real.rows())
                             + " does not match configured "
                             + std::to_string(settings.batch_size));
    }
    StepLog log;
    const auto draw = [&latent_stream, &settings] {
        return sample_latent(latent_stream, settings.batch_size,
                             settings.latent_dim);
    };
    switch (algorithm) {
        case Algorithm::buresgan: {
            const auto [v_g, penalty] = detail::generator_update(
              model, real, draw(), detail::Penalty::bures, true,
              settings.lambda, settings);
            log.v_g = v_g;
            log.penalty = penalty;
            log.v_d = detail::discriminator_update(model, real, draw(),
                                                   settings);
            break;
        }
        case Algorithm::frobenius2gan: {
            const auto [v_g, penalty] = detail::generator_update(
              model, real, draw(), detail::Penalty::frobenius, true,
              settings.lambda, settings);
            log.v_g = v_g;
            log.penalty = penalty;
            log.v_d = detail::discriminator_update(model, real, draw(),
                                                   settings);
            break;
        }
        case Algorithm::gan: {
            const auto [v_g, penalty] = detail::generator_update(
              model, real, draw(), detail::Penalty::none, true, 0.0,
              settings);
            log.v_g = v_g;
            log.penalty = penalty;
            log.v_d = detail::discriminator_update(model, real, draw(),
                                                   settings);
            break;
        }
        case Algorithm::alt_buresgan: {
            // parameter-free variant: the distance and the adversarial
            // term drive separate generator updates
            const auto [unused, penalty] = detail::generator_update(
              model, real, draw(), detail::Penalty::bures, false, 0.0,
              settings);
            (void)unused;
            log.penalty = penalty;
            const auto [v_g, no_penalty] = detail::generator_update(
              model, real, draw(), detail::Penalty::none, true, 0.0,
              settings);
            (void)no_penalty;
            log.v_g = v_g;
            log.v_d = detail::discriminator_update(model, real, draw(),
                                                   settings);
            break;
        }
    }
    return log;
}

} // namespace buresgan
