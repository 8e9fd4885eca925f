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

#include <stdexcept>
#include <string>

namespace buresgan {

struct InvalidValueError : std::runtime_error {
    explicit InvalidValueError(const std::string& msg)
      : std::runtime_error(msg)
    {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg)
    {}
};

struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& msg)
      : std::runtime_error(msg)
    {}
};

struct NotPsdError : std::runtime_error {
    explicit NotPsdError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BatchTooSmallError : std::runtime_error {
    explicit BatchTooSmallError(const std::string& msg)
      : std::runtime_error(msg)
    {}
};

struct EvaluationError : std::runtime_error {
    explicit EvaluationError(const std::string& msg) : std::runtime_error(msg)
    {}
};

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg)
    {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace buresgan
