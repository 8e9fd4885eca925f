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

#include <cmath>
#include <cstdint>
#include <numbers>

namespace buresgan {

namespace detail {

inline uint64_t mix64(uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace detail

// Counter-based generator with cheap splitting.  Every value is a hash of
// (key, counter), so streams never share state and the whole generator is
// four words of serializable state.  std::normal_distribution is avoided
// on purpose: its output is implementation-defined, and checkpoints must
// replay bit-identically across toolchains.
class Rng
{
public:
    explicit Rng(uint64_t key) : key_ { key } {}

    // Child stream whose key depends on both the parent key and the
    // stream label, independent of how much the parent has been used.
    Rng split(uint64_t stream) const
    {
        return Rng(detail::mix64(key_ + 0x9E3779B97F4A7C15ULL * (stream + 1)));
    }

    uint64_t next_u64()
    {
        counter_ += 0x9E3779B97F4A7C15ULL;
        return detail::mix64(key_ ^ counter_);
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer on [0, n) via the fixed-point multiply reduction.
    uint64_t uniform_int(uint64_t n)
    {
        return static_cast<uint64_t>(
          (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller.  The second deviate of each pair is
    // cached, and that cache is part of the serialized state.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1], keeps the log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    struct State {
        uint64_t key;
        uint64_t counter;
        uint8_t has_spare;
        double spare;
    };

    State state() const
    {
        return { key_, counter_, has_spare_ ? uint8_t { 1 } : uint8_t { 0 },
                 spare_ };
    }

    static Rng from_state(const State& s)
    {
        Rng r(s.key);
        r.counter_ = s.counter;
        r.has_spare_ = s.has_spare != 0;
        r.spare_ = s.spare;
        return r;
    }

private:
    uint64_t key_;
    uint64_t counter_ { 0 };
    bool has_spare_ { false };
    double spare_ { 0.0 };
};

} // namespace buresgan
