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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#if defined(__GLIBC__) || defined(__linux__)
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include <buresgan/checkpoint.hpp>
#include <buresgan/config.hpp>
#include <buresgan/runner.hpp>
#include <buresgan/verify.hpp>

namespace fs = std::filesystem;
using namespace buresgan;

namespace {

// Exit codes, kept distinct so scripts can tell failure classes apart.
constexpr int exit_ok = 0;
constexpr int exit_usage = 2;
constexpr int exit_diverged = 3;
constexpr int exit_verification = 4;
constexpr int exit_io = 5;

struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::ofstream open_for_write(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw CliError("cannot write " + path.string());
    }
    return out;
}

// Option holders.  Every flag is optional; a flag that was actually
// passed overrides the same key from --config, which overrides the
// built-in defaults.
struct ConfigFlags {
    std::string config_path;
    std::string algorithm;
    std::string dataset;
    std::uint64_t seed = 0;
    int iterations = 0;
    int batch_size = 0;
    double lr = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double lambda = 0.0;
    int ns_iters = 0;
    int latent_dim = 0;
    double epsilon = 0.0;
    int eval_samples = 0;
    int runs = 0;
    int snapshot_every = 0;
    std::string capture_rule;
};

void add_config_flags(CLI::App& cmd, ConfigFlags& f)
{
    cmd.add_option("--config", f.config_path,
                   "key=value config file; explicit flags win");
    cmd.add_option("--algorithm", f.algorithm,
                   "gan, buresgan, alt-buresgan or frobenius2gan");
    cmd.add_option("--dataset", f.dataset, "ring or grid");
    cmd.add_option("--seed", f.seed, "master seed");
    cmd.add_option("--iterations", f.iterations, "optimization rounds");
    cmd.add_option("--batch-size", f.batch_size, "samples per batch");
    cmd.add_option("--lr", f.lr, "Adam learning rate");
    cmd.add_option("--beta1", f.beta1, "Adam first-moment decay");
    cmd.add_option("--beta2", f.beta2, "Adam second-moment decay");
    cmd.add_option("--lambda", f.lambda, "penalty weight");
    cmd.add_option("--ns-iters", f.ns_iters,
                   "matrix square root iteration count");
    cmd.add_option("--latent-dim", f.latent_dim, "generator input width");
    cmd.add_option("--epsilon", f.epsilon, "covariance diagonal jitter");
    cmd.add_option("--eval-samples", f.eval_samples,
                   "samples per evaluation");
    cmd.add_option("--runs", f.runs, "independent runs in a sweep");
    cmd.add_option("--snapshot-every", f.snapshot_every,
                   "sample snapshot cadence (0 disables)");
    cmd.add_option("--capture-rule", f.capture_rule,
                   "mode capture rule: hq or any");
}

TrainConfig resolve_config(const CLI::App& cmd, const ConfigFlags& f)
{
    TrainConfig cfg;
    if (cmd.count("--config") > 0) {
        cfg = load_config(f.config_path);
    }
    if (cmd.count("--algorithm") > 0) {
        cfg.algorithm = f.algorithm;
    }
    if (cmd.count("--dataset") > 0) {
        cfg.dataset = f.dataset;
    }
    if (cmd.count("--seed") > 0) {
        cfg.seed = f.seed;
    }
    if (cmd.count("--iterations") > 0) {
        cfg.iterations = f.iterations;
    }
    if (cmd.count("--batch-size") > 0) {
        cfg.batch_size = f.batch_size;
    }
    if (cmd.count("--lr") > 0) {
        cfg.lr = f.lr;
    }
    if (cmd.count("--beta1") > 0) {
        cfg.beta1 = f.beta1;
    }
    if (cmd.count("--beta2") > 0) {
        cfg.beta2 = f.beta2;
    }
    if (cmd.count("--lambda") > 0) {
        cfg.lambda = f.lambda;
    }
    if (cmd.count("--ns-iters") > 0) {
        cfg.ns_iters = f.ns_iters;
    }
    if (cmd.count("--latent-dim") > 0) {
        cfg.latent_dim = f.latent_dim;
    }
    if (cmd.count("--epsilon") > 0) {
        cfg.epsilon = f.epsilon;
    }
    if (cmd.count("--eval-samples") > 0) {
        cfg.eval_samples = f.eval_samples;
    }
    if (cmd.count("--runs") > 0) {
        cfg.runs = f.runs;
    }
    if (cmd.count("--snapshot-every") > 0) {
        cfg.snapshot_every = f.snapshot_every;
    }
    if (cmd.count("--capture-rule") > 0) {
        cfg.capture_rule = f.capture_rule;
    }
    validate(cfg);
    return cfg;
}

std::string snapshot_name(std::uint64_t iteration)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "iter_%07llu.csv",
                  static_cast<unsigned long long>(iteration));
    return buf;
}

// Trains one run into `dir`, streaming the loss trace and snapshots as
// they happen so they survive a divergence abort.  Returns the final
// report on success; on divergence the last finished state is still
// checkpointed and std::nullopt comes back.
std::optional<EvalReport> execute_run(TrainState& state,
                                      const fs::path& dir,
                                      bool echo_progress)
{
    fs::create_directories(dir);
    const TrainConfig& cfg = state.config;
    if (cfg.snapshot_every > 0) {
        fs::create_directories(dir / "snapshots");
    }
    {
        std::ofstream cfg_out = open_for_write(dir / "config.cfg");
        cfg_out << serialize_config(cfg);
    }

    std::ofstream losses = open_for_write(dir / "losses.csv");
    losses << "iteration,v_g,penalty,v_d\n";

    bool diverged = false;
    std::string divergence_note;
    try {
        run_training(
          state,
          [&](std::uint64_t it, const StepLog& log) {
              char row[128];
              std::snprintf(row, sizeof row, "%llu,%.17g,%.17g,%.17g\n",
                            static_cast<unsigned long long>(it), log.v_g,
                            log.penalty, log.v_d);
              losses << row;
              if (echo_progress && it % 5000 == 0) {
                  std::fprintf(stderr,
                               "  iteration %llu: v_g=%.4f penalty=%.4f "
                               "v_d=%.4f\n",
                               static_cast<unsigned long long>(it), log.v_g,
                               log.penalty, log.v_d);
              }
          },
          [&](std::uint64_t it, const Matrix& samples) {
              std::ofstream snap =
                open_for_write(dir / "snapshots" / snapshot_name(it));
              snap << samples_csv(samples);
          });
    } catch (const ConvergenceError& e) {
        diverged = true;
        divergence_note = e.what();
    }
    losses.flush();

    save_checkpoint(state, (dir / "checkpoint.bin").string());

    if (diverged) {
        std::fprintf(stderr,
                     "run %u diverged after %llu iterations: %s\n"
                     "partial artifacts kept in %s\n",
                     state.run_index,
                     static_cast<unsigned long long>(state.iteration),
                     divergence_note.c_str(), dir.string().c_str());
        return std::nullopt;
    }

    const EvalReport report = evaluate_state(state);
    std::ofstream report_out = open_for_write(dir / "report.json");
    report_out << to_json(report).dump(2) << '\n';
    return report;
}

int cmd_train(const CLI::App& cmd,
              const ConfigFlags& flags,
              const std::string& out_dir,
              const std::string& resume_path,
              std::uint32_t run_index)
{
    TrainState state;
    if (!resume_path.empty()) {
        state = load_checkpoint(resume_path);
        if (cmd.count("--iterations") > 0) {
            state.config.iterations = flags.iterations;
            validate(state.config);
        }
    } else {
        state = init_train_state(resolve_config(cmd, flags), run_index);
    }

    const fs::path dir(out_dir);
    const std::optional<EvalReport> report =
      execute_run(state, dir, /*echo_progress=*/true);
    if (!report) {
        return exit_diverged;
    }
    std::printf("%s/%s run %u: %d modes captured, "
                "high quality fraction %.4f\n",
                state.config.algorithm.c_str(), state.config.dataset.c_str(),
                state.run_index, report->modes_captured,
                report->high_quality_fraction);
    std::printf("artifacts in %s\n", dir.string().c_str());
    return exit_ok;
}

// Mean(std) rows in the style used for the mixture benchmarks: modes
// captured, and the share of samples within three standard deviations
// of a mode as a percentage.
std::string summary_table(const TrainConfig& cfg, const AggregateReport& agg)
{
    char buf[256];
    std::string out =
      "algorithm      dataset  runs  modes_captured  pct_high_quality\n";
    std::snprintf(buf, sizeof buf, "%-13s  %-7s  %4d  %4.1f(%.1f)      %5.1f(%.1f)\n",
                  cfg.algorithm.c_str(), cfg.dataset.c_str(), agg.n_runs,
                  agg.mean_modes, agg.std_modes, 100.0 * agg.mean_fraction,
                  100.0 * agg.std_fraction);
    out += buf;
    return out;
}

int cmd_sweep(const CLI::App& cmd,
              const ConfigFlags& flags,
              const std::string& out_dir)
{
    const TrainConfig cfg = resolve_config(cmd, flags);
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    std::vector<EvalReport> reports;
    std::vector<std::uint32_t> aborted;
    for (int k = 0; k < cfg.runs; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "run_%03d", k);
        std::fprintf(stderr, "sweep run %d of %d\n", k + 1, cfg.runs);
        TrainState state =
          init_train_state(cfg, static_cast<std::uint32_t>(k));
        const std::optional<EvalReport> report =
          execute_run(state, dir / name, /*echo_progress=*/false);
        if (report) {
            reports.push_back(*report);
        } else {
            aborted.push_back(static_cast<std::uint32_t>(k));
        }
    }

    nlohmann::json summary;
    summary["algorithm"] = cfg.algorithm;
    summary["dataset"] = cfg.dataset;
    summary["aggregate"] = nullptr;
    summary["aborted_runs"] = aborted;

    if (reports.empty()) {
        std::ofstream out = open_for_write(dir / "summary.json");
        out << summary.dump(2) << '\n';
        std::fprintf(stderr, "all %d runs diverged\n", cfg.runs);
        return exit_diverged;
    }

    const AggregateReport agg = aggregate(reports);
    summary["aggregate"] = to_json(agg);
    {
        std::ofstream out = open_for_write(dir / "summary.json");
        out << summary.dump(2) << '\n';
    }
    const std::string table = summary_table(cfg, agg);
    {
        std::ofstream out = open_for_write(dir / "summary.txt");
        out << table;
    }
    std::fputs(table.c_str(), stdout);
    if (!aborted.empty()) {
        std::fprintf(stderr, "%zu of %d runs diverged and were left out\n",
                     aborted.size(), cfg.runs);
    }
    return exit_ok;
}

int cmd_evaluate(const CLI::App& cmd,
                 const std::string& checkpoint_path,
                 int eval_samples,
                 const std::string& capture_rule,
                 const std::string& out_file)
{
    TrainState state = load_checkpoint(checkpoint_path);
    if (cmd.count("--eval-samples") > 0) {
        state.config.eval_samples = eval_samples;
    }
    if (cmd.count("--capture-rule") > 0) {
        state.config.capture_rule = capture_rule;
    }
    validate(state.config);
    const EvalReport report = evaluate_state(state);
    const std::string text = to_json(report).dump(2) + "\n";
    if (out_file.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        std::ofstream out = open_for_write(out_file);
        out << text;
    }
    return exit_ok;
}

int cmd_verify(std::uint64_t seed, int ns_iters)
{
    const std::vector<PropertyResult> results =
      run_property_suite(seed, ns_iters);
    int failures = 0;
    std::printf("%-42s %8s  %12s  %9s  %s\n", "property", "cases",
                "max_error", "tolerance", "status");
    for (const PropertyResult& r : results) {
        std::printf("%-42s %8d  %12.3e  %9.1e  %s\n", r.name.c_str(),
                    r.cases, r.max_error, r.tolerance,
                    r.pass ? "pass" : "FAIL");
        failures += r.pass ? 0 : 1;
    }
    if (failures > 0) {
        std::fprintf(stderr, "%d of %zu properties failed\n", failures,
                     results.size());
        return exit_verification;
    }
    std::printf("all %zu properties passed\n", results.size());
    return exit_ok;
}

int cmd_export_samples(const std::string& checkpoint_path,
                       int n,
                       std::uint64_t seed,
                       const std::string& out_file)
{
    const TrainState state = load_checkpoint(checkpoint_path);
    Rng rng(seed);
    const Matrix samples = generate_samples(state.model, n, rng);
    const std::string text = samples_csv(samples);
    if (out_file.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        std::ofstream out = open_for_write(out_file);
        out << text;
    }
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 26);
    mallopt(M_TRIM_THRESHOLD, 1 << 26);
#endif

    CLI::App app { "Two-player feature-matching GAN trainer for 2-D "
                   "Gaussian mixtures" };
    app.require_subcommand(1);

    ConfigFlags train_flags;
    std::string train_out = "runs/train";
    std::string resume_path;
    std::uint32_t run_index = 0;
    CLI::App* train = app.add_subcommand("train", "train a single run");
    add_config_flags(*train, train_flags);
    train->add_option("--out", train_out, "artifact directory");
    train->add_option("--run-index", run_index,
                      "stream index of this run within its seed");
    train->add_option("--resume", resume_path,
                      "continue from a checkpoint (only --iterations and "
                      "--out may accompany this)");
    for (const char* opt :
         { "--config", "--algorithm", "--dataset", "--seed", "--batch-size",
           "--lr", "--beta1", "--beta2", "--lambda", "--ns-iters",
           "--latent-dim", "--epsilon", "--eval-samples", "--runs",
           "--snapshot-every", "--capture-rule", "--run-index" }) {
        train->get_option(opt)->excludes(train->get_option("--resume"));
    }

    ConfigFlags sweep_flags;
    std::string sweep_out = "runs/sweep";
    CLI::App* sweep =
      app.add_subcommand("sweep", "train several independent runs");
    add_config_flags(*sweep, sweep_flags);
    sweep->add_option("--out", sweep_out, "artifact directory");

    std::string eval_ckpt;
    std::string eval_out;
    int eval_samples = 0;
    std::string eval_rule;
    CLI::App* evaluate =
      app.add_subcommand("evaluate", "score a checkpointed generator");
    evaluate->add_option("--checkpoint", eval_ckpt, "checkpoint file")
      ->required();
    evaluate->add_option("--eval-samples", eval_samples,
                         "override the sample count");
    evaluate->add_option("--capture-rule", eval_rule,
                         "override the capture rule (hq or any)");
    evaluate->add_option("--out", eval_out,
                         "report file (stdout if omitted)");

    std::uint64_t verify_seed = 2024;
    int verify_ns_iters = default_sqrt_iterations;
    CLI::App* verify =
      app.add_subcommand("verify", "run the randomized property suite");
    verify->add_option("--seed", verify_seed, "suite seed");
    verify->add_option("--ns-iters", verify_ns_iters,
                       "matrix square root iteration count");

    std::string export_ckpt;
    std::string export_out;
    int export_n = 1000;
    std::uint64_t export_seed = 1;
    CLI::App* exporter =
      app.add_subcommand("export-samples", "write generator samples as CSV");
    exporter->add_option("--checkpoint", export_ckpt, "checkpoint file")
      ->required();
    exporter->add_option("--n", export_n, "number of samples");
    exporter->add_option("--seed", export_seed, "sampling seed");
    exporter->add_option("--out", export_out,
                         "CSV file (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (train->parsed()) {
            return cmd_train(*train, train_flags, train_out, resume_path,
                             run_index);
        }
        if (sweep->parsed()) {
            return cmd_sweep(*sweep, sweep_flags, sweep_out);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(*evaluate, eval_ckpt, eval_samples,
                                eval_rule, eval_out);
        }
        if (verify->parsed()) {
            return cmd_verify(verify_seed, verify_ns_iters);
        }
        if (exporter->parsed()) {
            return cmd_export_samples(export_ckpt, export_n, export_seed,
                                      export_out);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_usage;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "checkpoint error: %s\n", e.what());
        return exit_io;
    } catch (const ConvergenceError& e) {
        std::fprintf(stderr, "diverged: %s\n", e.what());
        return exit_diverged;
    } catch (const CliError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return exit_io;
    } catch (const InvalidValueError& e) {
        std::fprintf(stderr, "invalid value: %s\n", e.what());
        return exit_usage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return exit_usage;
}
