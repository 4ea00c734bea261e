#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smoothkit/metrics.hpp"
#include "smoothkit/param_store.hpp"
#include "smoothkit/smoothing.hpp"
#include "smoothkit/tinynn.hpp"

namespace smoothkit::diag {

/// Teacher state at the end of an epoch plus its outputs on the fixed probe set.
struct EpochSnapshot {
    std::int64_t epoch = 0;
    ParamStore teacher_params;
    nn::Matrix probe_outputs;
};

struct SeriesPoint {
    std::int64_t epoch = 0;
    double value = 0.0;

    friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

/// Entry k is mse(snap[k].teacher_params, snap[k-1].teacher_params), tagged with
/// snap[k].epoch. Needs at least two snapshots (ConfigError); CongruenceError on
/// mismatched stores.
[[nodiscard]] std::vector<SeriesPoint> param_mse_series(std::span<const EpochSnapshot> snapshots);

/// Entry k is the mean squared difference of adjacent probe outputs. ShapeError
/// when probe output shapes differ.
[[nodiscard]] std::vector<SeriesPoint> signal_mse_series(std::span<const EpochSnapshot> snapshots);

/// Mean squared element-wise difference of two equally shaped matrices.
[[nodiscard]] double matrix_mse(const nn::Matrix& a, const nn::Matrix& b);

struct MonteCarloEstimate {
    ParamStore mean;
    ParamStore std_error;  // sample standard deviation / sqrt(trials), per scalar
};

/// Element-wise mean of `trials` smooth_step outcomes, trial k using a fresh
/// clone of `teacher` and draw index k. Throws ConfigError for trials == 0.
[[nodiscard]] MonteCarloEstimate monte_carlo_estimate(const ParamStore& teacher, const ParamStore& student,
                                                      const SmoothingConfig& cfg, std::size_t trials);
[[nodiscard]] ParamStore monte_carlo_mean_update(const ParamStore& teacher, const ParamStore& student,
                                                 const SmoothingConfig& cfg, std::size_t trials);

/// Least-squares slope of ln(value) against epoch over points with
/// from <= epoch <= to. Zero and non-finite values are skipped; nullopt when
/// fewer than two points remain.
[[nodiscard]] std::optional<double> log_slope(std::span<const SeriesPoint> series, std::int64_t from,
                                              std::int64_t to);

/// Mean of values with from <= epoch <= to; nullopt when none.
[[nodiscard]] std::optional<double> window_mean(std::span<const SeriesPoint> series, std::int64_t from,
                                                std::int64_t to);

/// Adjacent-epoch MSE series recorded in a metrics log.
[[nodiscard]] std::vector<SeriesPoint> param_series(const MetricsLog& log);
[[nodiscard]] std::vector<SeriesPoint> signal_series(const MetricsLog& log);

struct ReportWindow {
    std::int64_t mean_from = 1;
    std::int64_t mean_to = std::numeric_limits<std::int64_t>::max();
    std::int64_t slope_from = 1;
    std::int64_t slope_to = std::numeric_limits<std::int64_t>::max();
};

struct SmoothingSummary {
    std::size_t epochs = 0;
    std::optional<double> mean_param_mse;
    std::optional<double> mean_signal_mse;
    /// baseline mean / this run's mean; present only with a baseline.
    std::optional<double> param_mse_ratio;
    std::optional<double> signal_mse_ratio;
    /// Negative slope means adjacent teachers are converging.
    std::optional<double> param_log_slope;
    std::optional<double> signal_log_slope;
    std::optional<double> final_teacher_accuracy;
    std::optional<double> final_student_accuracy;
};

/// Throws ConfigError on an empty log.
[[nodiscard]] SmoothingSummary smoothing_report(const MetricsLog& log, const MetricsLog* baseline = nullptr,
                                                const ReportWindow& window = {});

/// JSON object; absent values are written as null.
[[nodiscard]] std::string summary_to_json(const SmoothingSummary& summary);

}  // namespace smoothkit::diag
