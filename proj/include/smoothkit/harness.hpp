#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smoothkit/diagnostics.hpp"
#include "smoothkit/trainers.hpp"

namespace smoothkit::harness {

struct SweepAxes {
    std::vector<double> p;
    std::vector<double> m;
};

struct ExperimentConfig {
    train::TrainRunConfig run;
    std::filesystem::path output_dir = "runs";
    std::string run_name = "experiment";
    std::optional<SweepAxes> sweep;
    std::vector<std::uint64_t> seeds;  // defaults to {run.seed}

    /// Throws ConfigError naming the field.
    void validate() const;
};

/// Parses a JSON experiment config. Defaults come from
/// TrainRunConfig::defaults_for(task); unknown keys and type mismatches are
/// rejected with a ConfigError naming the dotted field path.
[[nodiscard]] ExperimentConfig parse_config(std::string_view json_text);
/// Reads and parses a config file. Throws IoError / ConfigError.
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully expanded config (all defaults spelled out), parseable by parse_config.
[[nodiscard]] std::string config_to_json(const ExperimentConfig& cfg);

/// Command-line overrides; unset members leave the config untouched.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> epochs;
    std::optional<double> p;
    std::optional<double> m;
    std::optional<std::string> method;
    std::optional<std::string> granularity;
    std::optional<std::filesystem::path> out;
};

/// Precedence: explicit flags, then the SMOOTHKIT_SEED value `env_seed` (may be
/// null), then the config file. Re-validates.
void apply_overrides(ExperimentConfig& cfg, const Overrides& overrides, const char* env_seed);

struct RunRecord {
    std::uint64_t seed = 0;
    std::filesystem::path dir;
    bool ok = false;
    std::optional<std::uint64_t> divergence_step;
    std::string error;
    std::optional<double> final_teacher_accuracy;
    std::optional<double> final_student_accuracy;
};

/// Runs one seed and writes metrics.csv, summary.json and teacher_final.json
/// into `dir`. A DivergenceError is recorded (summary.json + record), not thrown.
RunRecord run_single(const train::TrainRunConfig& cfg, const std::filesystem::path& dir,
                     const std::string& run_name = "run");

/// One run per seed into <output_dir>/<run_name>/<seed>/.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

struct SweepCell {
    double p = 0.0;
    double m = 0.0;
    std::vector<RunRecord> runs;
    double mean_teacher_accuracy = 0.0;
    double std_teacher_accuracy = 0.0;
    double mean_student_accuracy = 0.0;
    double std_student_accuracy = 0.0;
    std::size_t diverged = 0;
};

/// Directory name of a sweep cell, e.g. "p0.5_m0.99".
[[nodiscard]] std::string cell_name(double p, double m);

/// STS runs over the Cartesian product p x m x seeds, executed on up to `jobs`
/// worker threads. Per-run outputs go to <output_dir>/<run_name>/<cell>/<seed>/;
/// the aggregate table to <output_dir>/<run_name>/sweep.csv. Results do not
/// depend on `jobs`.
std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, unsigned jobs);

[[nodiscard]] std::string sweep_to_csv(const std::vector<SweepCell>& cells);

/// smoothing_report over <run_dir>/metrics.csv, optionally against a baseline
/// run directory, as JSON.
[[nodiscard]] std::string report_run(const std::filesystem::path& run_dir,
                                     const std::optional<std::filesystem::path>& baseline_dir,
                                     const diag::ReportWindow& window);

}  // namespace smoothkit::harness
