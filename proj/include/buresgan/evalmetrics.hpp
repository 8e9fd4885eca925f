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
#include <buresgan/synthdata.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace buresgan {

// A mode counts as captured when at least one high-quality sample lands
// on it ("hq", the default), or when any sample is assigned to it at all
// ("any").
enum class CaptureRule { hq, any };

inline CaptureRule capture_rule_from_string(const std::string& s)
{
    if (s == "hq") {
        return CaptureRule::hq;
    }
    if (s == "any") {
        return CaptureRule::any;
    }
    throw InvalidValueError("unknown capture rule: " + s
                            + " (expected hq or any)");
}

struct EvalReport {
    int modes_captured { 0 };
    double high_quality_fraction { 0.0 };
    // high-quality samples attributed to their nearest mode; low-quality
    // samples are not attributed anywhere
    std::vector<int64_t> per_mode_counts;
    int n_samples { 0 };
    std::string algorithm;
    uint64_t seed { 0 };
    std::string diagnostics;
};

struct AggregateReport {
    double mean_modes { 0.0 };
    double std_modes { 0.0 };
    double mean_fraction { 0.0 };
    double std_fraction { 0.0 };
    int n_runs { 0 };
    bool single_run { false };
};

// Nearest-center assignment with ties broken toward the lowest index.
// A sample is high quality when it lies within three standard deviations
// of its nearest center.  Non-finite samples are counted as low quality
// and reported through the diagnostics field.
inline EvalReport evaluate(const Matrix& samples,
                           const MixtureSpec& spec,
                           const std::string& algorithm,
                           uint64_t seed,
                           CaptureRule rule = CaptureRule::hq)
{
    if (samples.cols() != spec.centers.cols() && samples.rows() > 0) {
        throw DimensionError("evaluate: sample dimension "
                             + std::to_string(samples.cols())
                             + " does not match mixture dimension "
                             + std::to_string(spec.centers.cols()));
    }
    const int k = spec.components();
    EvalReport report;
    report.per_mode_counts.assign(k, 0);
    report.n_samples = samples.rows();
    report.algorithm = algorithm;
    report.seed = seed;

    std::vector<int64_t> assigned(k, 0);
    int64_t high_quality = 0;
    int64_t non_finite = 0;
    const double radius = 3.0 * spec.stddev;

    for (int i = 0; i < samples.rows(); ++i) {
        bool finite = true;
        for (int j = 0; j < samples.cols(); ++j) {
            finite = finite && std::isfinite(samples(i, j));
        }
        if (!finite) {
            ++non_finite;
            continue;
        }
        int best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            double d2 = 0.0;
            for (int j = 0; j < samples.cols(); ++j) {
                const double diff = samples(i, j) - spec.centers(c, j);
                d2 += diff * diff;
            }
            if (d2 < best_dist) {
                best_dist = d2;
                best = c;
            }
        }
        ++assigned[best];
        if (std::sqrt(best_dist) <= radius) {
            ++high_quality;
            ++report.per_mode_counts[best];
        }
    }

    for (int c = 0; c < k; ++c) {
        const int64_t hits =
          rule == CaptureRule::hq ? report.per_mode_counts[c] : assigned[c];
        if (hits > 0) {
            ++report.modes_captured;
        }
    }
    report.high_quality_fraction =
      samples.rows() == 0
        ? 0.0
        : static_cast<double>(high_quality) / samples.rows();
    if (non_finite > 0) {
        report.diagnostics = std::to_string(non_finite)
                             + " non-finite samples counted as low quality";
    }
    return report;
}

// Mean and sample standard deviation (n - 1) across runs.  A single run
// aggregates to zero deviation and is flagged as such.
inline AggregateReport aggregate(const std::vector<EvalReport>& reports)
{
    if (reports.empty()) {
        throw InvalidValueError("aggregate: no reports");
    }
    AggregateReport agg;
    agg.n_runs = static_cast<int>(reports.size());
    agg.single_run = reports.size() == 1;
    double sum_m = 0.0;
    double sum_f = 0.0;
    for (const EvalReport& r : reports) {
        sum_m += r.modes_captured;
        sum_f += r.high_quality_fraction;
    }
    agg.mean_modes = sum_m / agg.n_runs;
    agg.mean_fraction = sum_f / agg.n_runs;
    if (!agg.single_run) {
        double ss_m = 0.0;
        double ss_f = 0.0;
        for (const EvalReport& r : reports) {
            ss_m += (r.modes_captured - agg.mean_modes)
                    * (r.modes_captured - agg.mean_modes);
            ss_f += (r.high_quality_fraction - agg.mean_fraction)
                    * (r.high_quality_fraction - agg.mean_fraction);
        }
        agg.std_modes = std::sqrt(ss_m / (agg.n_runs - 1));
        agg.std_fraction = std::sqrt(ss_f / (agg.n_runs - 1));
    }
    return agg;
}

inline nlohmann::json to_json(const EvalReport& report)
{
    nlohmann::json j;
    j["modes_captured"] = report.modes_captured;
    j["high_quality_fraction"] = report.high_quality_fraction;
    j["per_mode_counts"] = report.per_mode_counts;
    j["n_samples"] = report.n_samples;
    j["algorithm"] = report.algorithm;
    j["seed"] = report.seed;
    if (!report.diagnostics.empty()) {
        j["diagnostics"] = report.diagnostics;
    }
    return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j)
{
    EvalReport report;
    report.modes_captured = j.at("modes_captured").get<int>();
    report.high_quality_fraction =
      j.at("high_quality_fraction").get<double>();
    report.per_mode_counts =
      j.at("per_mode_counts").get<std::vector<int64_t>>();
    report.n_samples = j.at("n_samples").get<int>();
    report.algorithm = j.at("algorithm").get<std::string>();
    report.seed = j.at("seed").get<uint64_t>();
    if (j.contains("diagnostics")) {
        report.diagnostics = j.at("diagnostics").get<std::string>();
    }
    return report;
}

inline nlohmann::json to_json(const AggregateReport& agg)
{
    nlohmann::json j;
    j["mean_modes"] = agg.mean_modes;
    j["std_modes"] = agg.std_modes;
    j["mean_fraction"] = agg.mean_fraction;
    j["std_fraction"] = agg.std_fraction;
    j["n_runs"] = agg.n_runs;
    j["single_run"] = agg.single_run;
    return j;
}

} // namespace buresgan
