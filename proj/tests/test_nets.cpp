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

#include <buresgan/mlp.hpp>
#include <buresgan/synthdata.hpp>
#include <buresgan/train.hpp>

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace buresgan;

namespace {

// small generator/discriminator pair for tests that do not need the
// production widths
GanModel tiny_gan(Rng& rng)
{
    GanModel model;
    model.generator = make_mlp(
      { 4, 6, 6, 2 },
      { Activation::tanh, Activation::tanh, Activation::identity }, rng);
    model.discriminator = make_mlp(
      { 2, 6, 6, 1 },
      { Activation::tanh, Activation::tanh, Activation::identity }, rng);
    model.generator_opt.resize(2 * model.generator.layer_count());
    model.discriminator_opt.resize(2 * model.discriminator.layer_count());
    return model;
}

StepSettings tiny_settings()
{
    StepSettings s;
    s.batch_size = 8;
    s.latent_dim = 4;
    return s;
}

bool mlps_equal(const Mlp& a, const Mlp& b)
{
    for (int l = 0; l < a.layer_count(); ++l) {
        for (size_t i = 0; i < a.weights[l].size(); ++i) {
            if (a.weights[l].data()[i] != b.weights[l].data()[i]) {
                return false;
            }
        }
        for (size_t i = 0; i < a.biases[l].size(); ++i) {
            if (a.biases[l].data()[i] != b.biases[l].data()[i]) {
                return false;
            }
        }
    }
    return true;
}

} // namespace

TEST_CASE("network factories produce the documented shapes", "[mlp]")
{
    Rng rng(1);
    const Mlp g = make_generator(256, rng);
    REQUIRE(g.layer_count() == 3);
    CHECK(g.input_dim() == 256);
    CHECK(g.output_dim() == 2);
    CHECK(g.weights[0].cols() == 128);
    CHECK(g.weights[1].cols() == 128);
    CHECK(g.activations[2] == Activation::identity);

    const Mlp d = make_discriminator(rng);
    CHECK(d.input_dim() == 2);
    CHECK(d.output_dim() == 1);
    CHECK(d.weights[1].cols() == 128);

    // zero biases, weights within the Glorot-uniform bound
    for (const Mlp* net : { &g, &d }) {
        for (int l = 0; l < net->layer_count(); ++l) {
            CHECK(frobenius_norm(net->biases[l]) == 0.0);
            const double limit = std::sqrt(
              6.0 / (net->weights[l].rows() + net->weights[l].cols()));
            CHECK(max_abs(net->weights[l]) <= limit);
            CHECK(max_abs(net->weights[l]) > 0.0);
        }
    }

    // identical streams give identical networks
    Rng r1(9);
    Rng r2(9);
    CHECK(mlps_equal(make_generator(16, r1), make_generator(16, r2)));
}

TEST_CASE("forward pass matches a hand-computed network", "[mlp]")
{
    Mlp net;
    net.weights.push_back(Matrix(2, 2, { 1.0, -1.0, 0.5, 0.25 }));
    net.biases.push_back(Matrix(1, 2, { 0.1, -0.2 }));
    net.weights.push_back(Matrix(2, 1, { 2.0, -1.0 }));
    net.biases.push_back(Matrix(1, 1, { 0.3 }));
    net.activations = { Activation::tanh, Activation::identity };

    const Matrix x(1, 2, { 1.0, 2.0 });
    const Matrix y = mlp_forward(net, x);

    const double h0 = std::tanh(1.0 * 1.0 + 2.0 * 0.5 + 0.1);
    const double h1 = std::tanh(1.0 * -1.0 + 2.0 * 0.25 - 0.2);
    const double expected = 2.0 * h0 - 1.0 * h1 + 0.3;
    REQUIRE(y.rows() == 1);
    CHECK(y(0, 0) == Catch::Approx(expected).margin(1e-15));
}

TEST_CASE("losses at all-zero logits hit their closed forms", "[loss]")
{
    const Matrix zeros(4, 1);
    CHECK(generator_loss(zeros)
          == Catch::Approx(std::log(2.0)).margin(1e-15));
    CHECK(discriminator_loss(zeros, zeros)
          == Catch::Approx(2.0 * std::log(2.0)).margin(1e-15));
}

TEST_CASE("softplus losses match a probability-space computation",
          "[loss]")
{
    Rng rng(77);
    Matrix s_real(16, 1);
    Matrix s_fake(16, 1);
    for (int i = 0; i < 16; ++i) {
        s_real(i, 0) = rng.uniform(-10.0, 10.0);
        s_fake(i, 0) = rng.uniform(-10.0, 10.0);
    }

    // independent evaluation in probability space at extended precision:
    // V_D = -mean log sigma(s_real) - mean log(1 - sigma(s_fake))
    long double v_d = 0.0L;
    long double v_g = 0.0L;
    for (int i = 0; i < 16; ++i) {
        const long double sr = s_real(i, 0);
        const long double sf = s_fake(i, 0);
        const long double sig_r = 1.0L / (1.0L + std::exp(-sr));
        const long double sig_f = 1.0L / (1.0L + std::exp(-sf));
        v_d += -std::log(sig_r) - std::log(1.0L - sig_f);
        v_g += -std::log(sig_f);
    }
    v_d /= 16.0L;
    v_g /= 16.0L;

    CHECK(discriminator_loss(s_real, s_fake)
          == Catch::Approx(static_cast<double>(v_d)).margin(1e-10));
    CHECK(generator_loss(s_fake)
          == Catch::Approx(static_cast<double>(v_g)).margin(1e-10));
}

TEST_CASE("one adam step follows the update rule", "[adam]")
{
    Matrix p(1, 1, { 1.0 });
    AdamState state;
    AdamParams hp;
    const Matrix g(1, 1, { 0.5 });
    adam_step(p, state, g, hp);

    const double m = (1.0 - hp.beta1) * 0.5;
    const double v = (1.0 - hp.beta2) * 0.25;
    const double m_hat = m / (1.0 - hp.beta1);
    const double v_hat = v / (1.0 - hp.beta2);
    const double expected =
      1.0 - hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
    CHECK(p(0, 0) == Catch::Approx(expected).margin(1e-15));
    CHECK(state.t == 1);

    CHECK_THROWS_AS(adam_step(p, state, Matrix(2, 2), hp), DimensionError);
}

TEST_CASE("algorithm names round-trip", "[train]")
{
    for (const Algorithm a :
         { Algorithm::buresgan, Algorithm::alt_buresgan, Algorithm::gan,
           Algorithm::frobenius2gan }) {
        CHECK(algorithm_from_string(to_string(a)) == a);
    }
    CHECK_THROWS_AS(algorithm_from_string("wgan"), InvalidValueError);
}

TEST_CASE("one step from init keeps the discriminator loss in (0, 4)",
          "[train]")
{
    const MixtureSpec ring = ring_spec();
    for (const Algorithm a :
         { Algorithm::buresgan, Algorithm::alt_buresgan, Algorithm::gan,
           Algorithm::frobenius2gan }) {
        Rng init(42);
        GanModel model = tiny_gan(init);
        Rng data(43);
        Rng latent(44);
        const StepSettings s = tiny_settings();
        const Matrix real = sample_mixture(ring, data, s.batch_size);
        const StepLog log = train_step(model, a, real, latent, s);
        INFO(to_string(a));
        CHECK(log.v_d > 0.0);
        CHECK(log.v_d < 4.0);
        CHECK(std::isfinite(log.v_g));
        if (a == Algorithm::gan) {
            CHECK(log.penalty == 0.0);
        } else {
            CHECK(std::isfinite(log.penalty));
            CHECK(log.penalty >= -1e-6);
        }
    }
}

TEST_CASE("training is bit-for-bit deterministic", "[train]")
{
    const MixtureSpec grid = grid_spec();
    const StepSettings s = tiny_settings();

    const auto run = [&] {
        Rng init(7);
        GanModel model = tiny_gan(init);
        Rng data(8);
        Rng latent(9);
        std::vector<StepLog> logs;
        for (int i = 0; i < 5; ++i) {
            const Matrix real = sample_mixture(grid, data, s.batch_size);
            logs.push_back(
              train_step(model, Algorithm::buresgan, real, latent, s));
        }
        return std::pair { std::move(model), std::move(logs) };
    };

    const auto [m1, l1] = run();
    const auto [m2, l2] = run();
    CHECK(mlps_equal(m1.generator, m2.generator));
    CHECK(mlps_equal(m1.discriminator, m2.discriminator));
    for (size_t i = 0; i < l1.size(); ++i) {
        REQUIRE(l1[i].v_g == l2[i].v_g);
        REQUIRE(l1[i].penalty == l2[i].penalty);
        REQUIRE(l1[i].v_d == l2[i].v_d);
    }
}

TEST_CASE("zero penalty weight reproduces the vanilla trajectory",
          "[train]")
{
    const MixtureSpec ring = ring_spec();
    StepSettings s = tiny_settings();

    const auto run = [&](Algorithm algo, double lambda) {
        StepSettings local = s;
        local.lambda = lambda;
        Rng init(21);
        GanModel model = tiny_gan(init);
        Rng data(22);
        Rng latent(23);
        for (int i = 0; i < 10; ++i) {
            const Matrix real = sample_mixture(ring, data, s.batch_size);
            train_step(model, algo, real, latent, local);
        }
        return model;
    };

    const GanModel with_zero = run(Algorithm::buresgan, 0.0);
    const GanModel vanilla = run(Algorithm::gan, 1.0);
    CHECK(mlps_equal(with_zero.generator, vanilla.generator));
    CHECK(mlps_equal(with_zero.discriminator, vanilla.discriminator));
}

TEST_CASE("generator gradients match finite differences mid-training",
          "[train][slow]")
{
    const MixtureSpec ring = ring_spec();
    const StepSettings s = tiny_settings();

    Rng init(31);
    GanModel model = tiny_gan(init);
    Rng data(32);
    Rng latent(33);

    // the update direction is checked at a fresh model and again after
    // 99 steps, against the same objective the step minimizes
    const auto check_here = [&] {
        Rng data_probe = data;
        Rng latent_probe = latent;
        const Matrix real = sample_mixture(ring, data_probe, s.batch_size);
        const Matrix z =
          sample_latent(latent_probe, s.batch_size, s.latent_dim);

        const auto objective = [&](Tape& t, Tape::NodeId w0) {
            TapedMlp gen;
            gen.model = &model.generator;
            for (int l = 0; l < model.generator.layer_count(); ++l) {
                gen.weights.push_back(
                  l == 0 ? w0 : t.constant(model.generator.weights[l]));
                gen.biases.push_back(t.constant(model.generator.biases[l]));
            }
            const TapedMlp disc = record_mlp(t, model.discriminator, false);
            const MlpOutputs fake = apply_mlp(t, gen, t.constant(z));
            const MlpOutputs fake_scored = apply_mlp(t, disc, fake.output);
            const MlpOutputs real_scored =
              apply_mlp(t, disc, t.constant(real));
            const auto cd = covariance_node(
              t, embed_node(t, real_scored.penultimate),
              s.covariance_epsilon);
            const auto cg = covariance_node(
              t, embed_node(t, fake_scored.penultimate),
              s.covariance_epsilon);
            const auto v_g = generator_loss_node(t, fake_scored.output);
            return t.add(
              v_g, t.scale(bures_primal_node(t, cd, cg, s.sqrt_iterations),
                           s.lambda));
        };
        const GradCheckReport report =
          grad_check(objective, model.generator.weights[0], 1e-5);
        CHECK(report.max_rel_error <= 1e-4);
    };

    check_here(); // iteration 1
    for (int i = 0; i < 99; ++i) {
        const Matrix real = sample_mixture(ring, data, s.batch_size);
        train_step(model, Algorithm::buresgan, real, latent, s);
    }
    check_here(); // iteration 100
}

TEST_CASE("train_step rejects a mismatched real batch", "[train]")
{
    Rng init(51);
    GanModel model = tiny_gan(init);
    Rng latent(52);
    const StepSettings s = tiny_settings();
    CHECK_THROWS_AS(
      train_step(model, Algorithm::gan, Matrix(5, 2), latent, s),
      DimensionError);
}
