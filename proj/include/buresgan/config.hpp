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
#include <buresgan/evalmetrics.hpp>
#include <buresgan/train.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace buresgan {

struct TrainConfig {
    std::string algorithm { "buresgan" };
    std::string dataset { "grid" };
    uint64_t seed { 1 };
    int iterations { 25000 };
    int batch_size { 256 };
    double lr { 1e-3 };
    double beta1 { 0.5 };
    double beta2 { 0.999 };
    double lambda { 1.0 };
    int ns_iters { 15 };
    int latent_dim { 256 };
    double epsilon { 1e-14 };
    int eval_samples { 3000 };
    int runs { 10 };
    int snapshot_every { 0 }; // 0 disables snapshots
    std::string capture_rule { "hq" };
};

inline void validate(const TrainConfig& cfg)
{
    algorithm_from_string(cfg.algorithm);
    mixture_by_name(cfg.dataset);
    capture_rule_from_string(cfg.capture_rule);
    if (cfg.iterations < 0) {
        throw ConfigError("iterations must be non-negative");
    }
    if (cfg.batch_size < 2) {
        throw ConfigError("batch_size must be at least 2");
    }
    if (cfg.lr <= 0.0) {
        throw ConfigError("lr must be positive");
    }
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0
        || cfg.beta2 >= 1.0) {
        throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    }
    if (cfg.lambda < 0.0) {
        throw ConfigError("lambda must be non-negative");
    }
    if (cfg.ns_iters < 0) {
        throw ConfigError("ns_iters must be non-negative");
    }
    if (cfg.latent_dim < 1) {
        throw ConfigError("latent_dim must be positive");
    }
    if (cfg.epsilon < 0.0) {
        throw ConfigError("epsilon must be non-negative");
    }
    if (cfg.eval_samples < 0) {
        throw ConfigError("eval_samples must be non-negative");
    }
    if (cfg.runs < 1) {
        throw ConfigError("runs must be at least 1");
    }
    if (cfg.snapshot_every < 0) {
        throw ConfigError("snapshot_every must be non-negative");
    }
}

namespace detail {

// shortest representation that parses back to the same double
inline std::string format_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

// Flat key=value text, one pair per line.  Doubles are written with 17
// significant digits so that serialize -> parse is the identity.
inline std::string serialize_config(const TrainConfig& cfg)
{
    std::ostringstream out;
    out << "algorithm=" << cfg.algorithm << '\n';
    out << "dataset=" << cfg.dataset << '\n';
    out << "seed=" << cfg.seed << '\n';
    out << "iterations=" << cfg.iterations << '\n';
    out << "batch_size=" << cfg.batch_size << '\n';
    out << "lr=" << detail::format_double(cfg.lr) << '\n';
    out << "beta1=" << detail::format_double(cfg.beta1) << '\n';
    out << "beta2=" << detail::format_double(cfg.beta2) << '\n';
    out << "lambda=" << detail::format_double(cfg.lambda) << '\n';
    out << "ns_iters=" << cfg.ns_iters << '\n';
    out << "latent_dim=" << cfg.latent_dim << '\n';
    out << "epsilon=" << detail::format_double(cfg.epsilon) << '\n';
    out << "eval_samples=" << cfg.eval_samples << '\n';
    out << "runs=" << cfg.runs << '\n';
    out << "snapshot_every=" << cfg.snapshot_every << '\n';
    out << "capture_rule=" << cfg.capture_rule << '\n';
    return out.str();
}

inline TrainConfig parse_config(const std::string& text)
{
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        // trim
        const size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            continue;
        }
        const size_t last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);

        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no)
                              + ": expected key=value, got '" + line + "'");
        }
        const auto trim = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t");
            if (a == std::string::npos) {
                return std::string();
            }
            const size_t b = s.find_last_not_of(" \t");
            return s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        const auto as_int = [&](const char* name) {
            try {
                size_t pos = 0;
                const int v = std::stoi(value, &pos);
                if (pos != value.size()) {
                    throw std::invalid_argument(value);
                }
                return v;
            } catch (const std::exception&) {
                throw ConfigError(std::string(name) + ": invalid integer '"
                                  + value + "'");
            }
        };
        const auto as_u64 = [&](const char* name) {
            try {
                size_t pos = 0;
                const uint64_t v = std::stoull(value, &pos);
                if (pos != value.size()) {
                    throw std::invalid_argument(value);
                }
                return v;
            } catch (const std::exception&) {
                throw ConfigError(std::string(name) + ": invalid integer '"
                                  + value + "'");
            }
        };
        const auto as_double = [&](const char* name) {
            try {
                size_t pos = 0;
                const double v = std::stod(value, &pos);
                if (pos != value.size()) {
                    throw std::invalid_argument(value);
                }
                return v;
            } catch (const std::exception&) {
                throw ConfigError(std::string(name) + ": invalid number '"
                                  + value + "'");
            }
        };

        if (key == "algorithm") {
            cfg.algorithm = value;
        } else if (key == "dataset") {
            cfg.dataset = value;
        } else if (key == "seed") {
            cfg.seed = as_u64("seed");
        } else if (key == "iterations") {
            cfg.iterations = as_int("iterations");
        } else if (key == "batch_size") {
            cfg.batch_size = as_int("batch_size");
        } else if (key == "lr") {
            cfg.lr = as_double("lr");
        } else if (key == "beta1") {
            cfg.beta1 = as_double("beta1");
        } else if (key == "beta2") {
            cfg.beta2 = as_double("beta2");
        } else if (key == "lambda") {
            cfg.lambda = as_double("lambda");
        } else if (key == "ns_iters") {
            cfg.ns_iters = as_int("ns_iters");
        } else if (key == "latent_dim") {
            cfg.latent_dim = as_int("latent_dim");
        } else if (key == "epsilon") {
            cfg.epsilon = as_double("epsilon");
        } else if (key == "eval_samples") {
            cfg.eval_samples = as_int("eval_samples");
        } else if (key == "runs") {
            cfg.runs = as_int("runs");
        } else if (key == "snapshot_every") {
            cfg.snapshot_every = as_int("snapshot_every");
        } else if (key == "capture_rule") {
            cfg.capture_rule = value;
        } else {
            throw ConfigError("line " + std::to_string(line_no)
                              + ": unknown key '" + key + "'");
        }
    }
    validate(cfg);
    return cfg;
}

inline TrainConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

inline void save_config(const TrainConfig& cfg, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write config file: " + path);
    }
    out << serialize_config(cfg);
}

inline StepSettings step_settings(const TrainConfig& cfg)
{
    StepSettings s;
    s.batch_size = cfg.batch_size;
    s.latent_dim = cfg.latent_dim;
    s.lambda = cfg.lambda;
    s.sqrt_iterations = cfg.ns_iters;
    s.covariance_epsilon = cfg.epsilon;
    s.adam.learning_rate = cfg.lr;
    s.adam.beta1 = cfg.beta1;
    s.adam.beta2 = cfg.beta2;
    return s;
}

} // namespace buresgan
