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

#include <buresgan/config.hpp>
#include <buresgan/errors.hpp>
#include <buresgan/rng.hpp>
#include <buresgan/train.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace buresgan {

// Everything needed to continue a run bit-for-bit: configuration, stream
// states at the iteration boundary, parameters and optimizer moments.
struct TrainState {
    TrainConfig config;
    uint32_t run_index { 0 };
    uint64_t iteration { 0 };
    Rng::State data_stream {};
    Rng::State latent_stream {};
    Rng::State eval_stream {};
    GanModel model;
};

namespace detail {

constexpr char checkpoint_magic[8] = { 'B', 'G', 'A', 'N',
                                       'C', 'K', 'P', 'T' };
constexpr uint32_t checkpoint_version = 1;

struct Writer {
    std::ofstream out;

    explicit Writer(const std::string& path)
      : out { path, std::ios::binary }
    {
        if (!out) {
            throw CheckpointError("cannot open for writing: " + path);
        }
    }

    void bytes(const void* p, size_t n)
    {
        out.write(static_cast<const char*>(p),
                  static_cast<std::streamsize>(n));
    }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s)
    {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void rng_state(const Rng::State& s)
    {
        u64(s.key);
        u64(s.counter);
        out.put(static_cast<char>(s.has_spare));
        f64(s.spare);
    }
    void matrix(const std::string& name, const Matrix& m)
    {
        str(name);
        u32(static_cast<uint32_t>(m.rows()));
        u32(static_cast<uint32_t>(m.cols()));
        bytes(m.data(), m.size() * sizeof(double));
    }
};

struct Reader {
    std::ifstream in;
    std::string context { "header" };

    explicit Reader(const std::string& path)
      : in { path, std::ios::binary }
    {
        if (!in) {
            throw CheckpointError("cannot open for reading: " + path);
        }
    }

    void bytes(void* p, size_t n)
    {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n)) {
            throw CheckpointError("truncated while reading " + context);
        }
    }
    uint32_t u32()
    {
        uint32_t v = 0;
        bytes(&v, 4);
        return v;
    }
    uint64_t u64()
    {
        uint64_t v = 0;
        bytes(&v, 8);
        return v;
    }
    double f64()
    {
        double v = 0;
        bytes(&v, 8);
        return v;
    }
    std::string str()
    {
        const uint32_t n = u32();
        if (n > (1u << 20)) {
            throw CheckpointError("implausible string length in "
                                  + context);
        }
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    Rng::State rng_state()
    {
        Rng::State s;
        s.key = u64();
        s.counter = u64();
        char flag = 0;
        bytes(&flag, 1);
        s.has_spare = static_cast<uint8_t>(flag);
        s.spare = f64();
        return s;
    }
    // reads a matrix recorded under an expected name into an existing
    // parameter whose shape is dictated by the configuration
    void matrix_into(const std::string& expected, Matrix& m)
    {
        context = expected;
        const std::string name = str();
        if (name != expected) {
            throw CheckpointError("expected field '" + expected
                                  + "', found '" + name + "'");
        }
        const uint32_t rows = u32();
        const uint32_t cols = u32();
        if (rows != static_cast<uint32_t>(m.rows())
            || cols != static_cast<uint32_t>(m.cols())) {
            throw CheckpointError(
              "field '" + expected + "' has shape " + std::to_string(rows)
              + "x" + std::to_string(cols) + ", expected "
              + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
        }
        bytes(m.data(), m.size() * sizeof(double));
    }
};

inline std::string param_name(const std::string& net, int layer, bool bias)
{
    return net + ".layer" + std::to_string(layer)
           + (bias ? ".bias" : ".weight");
}

inline void write_net(Writer& w,
                      const std::string& net,
                      const Mlp& mlp,
                      const std::vector<AdamState>& opt)
{
    for (int l = 0; l < mlp.layer_count(); ++l) {
        w.matrix(param_name(net, l, false), mlp.weights[l]);
        w.matrix(param_name(net, l, true), mlp.biases[l]);
    }
    for (int l = 0; l < mlp.layer_count(); ++l) {
        for (const int slot : { 2 * l, 2 * l + 1 }) {
            const AdamState& s = opt[slot];
            const std::string base =
              param_name(net, l, slot % 2 == 1) + ".adam";
            w.u64(static_cast<uint64_t>(s.t));
            if (s.t == 0) {
                continue; // untouched optimizer slots carry no moments
            }
            w.matrix(base + ".m", s.m);
            w.matrix(base + ".v", s.v);
        }
    }
}

inline void read_net(Reader& r,
                     const std::string& net,
                     Mlp& mlp,
                     std::vector<AdamState>& opt)
{
    for (int l = 0; l < mlp.layer_count(); ++l) {
        r.matrix_into(param_name(net, l, false), mlp.weights[l]);
        r.matrix_into(param_name(net, l, true), mlp.biases[l]);
    }
    opt.assign(2 * mlp.layer_count(), AdamState {});
    for (int l = 0; l < mlp.layer_count(); ++l) {
        for (const int slot : { 2 * l, 2 * l + 1 }) {
            AdamState& s = opt[slot];
            const bool bias = slot % 2 == 1;
            r.context = param_name(net, l, bias) + ".adam.t";
            s.t = static_cast<int64_t>(r.u64());
            if (s.t == 0) {
                continue;
            }
            const Matrix& shaped = bias ? mlp.biases[l] : mlp.weights[l];
            s.m = Matrix(shaped.rows(), shaped.cols());
            s.v = Matrix(shaped.rows(), shaped.cols());
            const std::string base = param_name(net, l, bias) + ".adam";
            r.matrix_into(base + ".m", s.m);
            r.matrix_into(base + ".v", s.v);
        }
    }
}

} // namespace detail

inline void save_checkpoint(const TrainState& state, const std::string& path)
{
    detail::Writer w(path);
    w.bytes(detail::checkpoint_magic, 8);
    w.u32(detail::checkpoint_version);
    w.str(serialize_config(state.config));
    w.u32(state.run_index);
    w.u64(state.iteration);
    w.rng_state(state.data_stream);
    w.rng_state(state.latent_stream);
    w.rng_state(state.eval_stream);
    detail::write_net(w, "generator", state.model.generator,
                      state.model.generator_opt);
    detail::write_net(w, "discriminator", state.model.discriminator,
                      state.model.discriminator_opt);
    w.out.flush();
    if (!w.out) {
        throw CheckpointError("write failed: " + path);
    }
}

inline TrainState load_checkpoint(const std::string& path)
{
    detail::Reader r(path);
    char magic[8];
    r.context = "magic";
    r.bytes(magic, 8);
    if (std::memcmp(magic, detail::checkpoint_magic, 8) != 0) {
        throw CheckpointError("bad magic, not a checkpoint: " + path);
    }
    r.context = "version";
    const uint32_t version = r.u32();
    if (version != detail::checkpoint_version) {
        throw CheckpointError("unsupported checkpoint version "
                              + std::to_string(version) + ", expected "
                              + std::to_string(detail::checkpoint_version));
    }
    TrainState state;
    r.context = "config";
    state.config = parse_config(r.str());
    r.context = "run_index";
    state.run_index = r.u32();
    r.context = "iteration";
    state.iteration = r.u64();
    r.context = "data_stream";
    state.data_stream = r.rng_state();
    r.context = "latent_stream";
    state.latent_stream = r.rng_state();
    r.context = "eval_stream";
    state.eval_stream = r.rng_state();

    // shapes come from the configuration; a zeroed stream keeps the
    // factory draws inert before the stored values overwrite them
    Rng dummy(0);
    state.model = make_gan(state.config.latent_dim, dummy);
    detail::read_net(r, "generator", state.model.generator,
                     state.model.generator_opt);
    detail::read_net(r, "discriminator", state.model.discriminator,
                     state.model.discriminator_opt);
    return state;
}

} // namespace buresgan
