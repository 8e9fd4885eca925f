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

#include <cstdint>
#include <functional>
#include <sstream>
#include <string>

#include <buresgan/checkpoint.hpp>
#include <buresgan/config.hpp>
#include <buresgan/evalmetrics.hpp>
#include <buresgan/mlp.hpp>
#include <buresgan/synthdata.hpp>
#include <buresgan/train.hpp>

namespace buresgan {

// Every random draw of a run is funneled through streams derived from
// (seed, run_index), so runs of a sweep are independent and any prefix
// of a run can be replayed exactly.  Stream slots, in split order:
// model init, training data, latent noise, evaluation noise, and one
// root that is re-split per iteration for snapshot noise.
namespace streams {
    constexpr std::uint64_t init = 0;
    constexpr std::uint64_t data = 1;
    constexpr std::uint64_t latent = 2;
    constexpr std::uint64_t eval = 3;
    constexpr std::uint64_t snapshot = 4;
} // namespace streams

inline Rng run_stream(const TrainConfig& cfg,
                      std::uint32_t run_index,
                      std::uint64_t slot)
{
    return Rng(cfg.seed).split(run_index).split(slot);
}

inline TrainState init_train_state(const TrainConfig& cfg,
                                   std::uint32_t run_index = 0)
{
    validate(cfg);
    TrainState state;
    state.config = cfg;
    state.run_index = run_index;
    state.iteration = 0;
    Rng init = run_stream(cfg, run_index, streams::init);
    state.model = make_gan(cfg.latent_dim, init);
    state.data_stream = run_stream(cfg, run_index, streams::data).state();
    state.latent_stream = run_stream(cfg, run_index, streams::latent).state();
    state.eval_stream = run_stream(cfg, run_index, streams::eval).state();
    return state;
}

// Called after every completed optimization round with the new iteration
// count (1-based) and that round's losses.
using StepHook = std::function<void(std::uint64_t, const StepLog&)>;

// Called at the snapshot cadence with the iteration count and a batch of
// eval_samples generator outputs.
using SnapshotHook = std::function<void(std::uint64_t, const Matrix&)>;

// Draws generator samples without touching the training streams.  The
// noise comes from a dedicated generator seeded only by (seed, run_index,
// iteration), so a resumed run snapshots the same batches as an
// uninterrupted one.
inline Matrix snapshot_samples(const TrainState& state, std::uint64_t iteration)
{
    Rng rng = run_stream(state.config, state.run_index, streams::snapshot)
                .split(iteration);
    const Matrix z =
      sample_latent(rng, state.config.eval_samples, state.config.latent_dim);
    return mlp_forward(state.model.generator, z);
}

// Advances the state to config.iterations completed rounds.  The stream
// states and the iteration counter are committed after each round, so on
// a divergence error the state still describes the last finished round
// and can be checkpointed.  Resuming a loaded checkpoint re-enters this
// loop and replays the remaining rounds bit for bit.
inline void run_training(TrainState& state,
                         const StepHook& on_step = {},
                         const SnapshotHook& on_snapshot = {})
{
    const TrainConfig& cfg = state.config;
    validate(cfg);
    const MixtureSpec spec = mixture_by_name(cfg.dataset);
    const Algorithm algorithm = algorithm_from_string(cfg.algorithm);
    const StepSettings settings = step_settings(cfg);
    Rng data = Rng::from_state(state.data_stream);
    Rng latent = Rng::from_state(state.latent_stream);

    while (state.iteration < static_cast<std::uint64_t>(cfg.iterations)) {
        const Matrix real = sample_mixture(spec, data, cfg.batch_size);
        const StepLog log = train_step(state.model, algorithm, real, latent,
                                       settings);
        ++state.iteration;
        state.data_stream = data.state();
        state.latent_stream = latent.state();
        if (on_step) {
            on_step(state.iteration, log);
        }
        if (on_snapshot && cfg.snapshot_every > 0
            && state.iteration % cfg.snapshot_every == 0) {
            on_snapshot(state.iteration, snapshot_samples(state, state.iteration));
        }
    }
}

// Scores the current generator on a fresh evaluation batch.  The eval
// stream is copied, not consumed: evaluating twice, or evaluating a
// checkpoint that is later resumed, always sees the same noise.
inline EvalReport evaluate_state(const TrainState& state)
{
    const TrainConfig& cfg = state.config;
    Rng eval = Rng::from_state(state.eval_stream);
    const Matrix z = sample_latent(eval, cfg.eval_samples, cfg.latent_dim);
    const Matrix samples = mlp_forward(state.model.generator, z);
    return evaluate(samples,
                    mixture_by_name(cfg.dataset),
                    cfg.algorithm,
                    cfg.seed,
                    capture_rule_from_string(cfg.capture_rule));
}

inline Matrix generate_samples(const GanModel& model, int n, Rng& rng)
{
    const int latent_dim = model.generator.weights.front().rows();
    const Matrix z = sample_latent(rng, n, latent_dim);
    return mlp_forward(model.generator, z);
}

// Two-column sample matrices are exchanged as CSV with an x,y header;
// n = 0 yields the header alone.
inline std::string samples_csv(const Matrix& samples)
{
    if (samples.cols() != 2) {
        throw DimensionError("sample CSV expects 2 columns, got "
                             + std::to_string(samples.cols()));
    }
    std::ostringstream out;
    out << "x,y\n";
    char buf[64];
    for (int i = 0; i < samples.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g", samples(i, 0),
                      samples(i, 1));
        out << buf << '\n';
    }
    return out.str();
}

} // namespace buresgan
