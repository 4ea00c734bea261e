#include "smoothkit/diagnostics.hpp"

#include <cmath>

#include <json.hpp>

#include "smoothkit/errors.hpp"

namespace smoothkit::diag {

std::vector<SeriesPoint> param_mse_series(std::span<const EpochSnapshot> snapshots) {
    if (snapshots.size() < 2) throw ConfigError("snapshots", "need at least two epoch snapshots");
    std::vector<SeriesPoint> out;
    out.reserve(snapshots.size() - 1);
    for (std::size_t k = 1; k < snapshots.size(); ++k) {
        out.push_back({snapshots[k].epoch, mse(snapshots[k].teacher_params, snapshots[k - 1].teacher_params)});
    }
    return out;
}

double matrix_mse(const nn::Matrix& a, const nn::Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("probe outputs differ in shape: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    if (a.size() == 0) return 0.0;
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

std::vector<SeriesPoint> signal_mse_series(std::span<const EpochSnapshot> snapshots) {
    if (snapshots.size() < 2) throw ConfigError("snapshots", "need at least two epoch snapshots");
    std::vector<SeriesPoint> out;
    out.reserve(snapshots.size() - 1);
    for (std::size_t k = 1; k < snapshots.size(); ++k) {
        out.push_back({snapshots[k].epoch, matrix_mse(snapshots[k].probe_outputs, snapshots[k - 1].probe_outputs)});
    }
    return out;
}

MonteCarloEstimate monte_carlo_estimate(const ParamStore& teacher, const ParamStore& student,
                                        const SmoothingConfig& cfg, std::size_t trials) {
    if (trials == 0) throw ConfigError("trials", "must be at least 1");
    require_congruent(teacher, student, "monte_carlo_mean_update");
    // Welford accumulation per scalar.
    ParamStore mean = clone(teacher);
    ParamStore m2 = clone(teacher);
    for (std::size_t u = 0; u < mean.unit_count(); ++u) {
        std::fill(mean.unit(u).data.begin(), mean.unit(u).data.end(), 0.0);
        std::fill(m2.unit(u).data.begin(), m2.unit(u).data.end(), 0.0);
    }
    for (std::size_t k = 0; k < trials; ++k) {
        ParamStore outcome = clone(teacher);
        smooth_step(cfg, outcome, student, StepIndex{k});
        const double n = static_cast<double>(k + 1);
        for (std::size_t u = 0; u < mean.unit_count(); ++u) {
            auto& mu = mean.unit(u).data;
            auto& sq = m2.unit(u).data;
            const auto& x = outcome.unit(u).data;
            for (std::size_t i = 0; i < mu.size(); ++i) {
                const double delta = x[i] - mu[i];
                mu[i] += delta / n;
                sq[i] += delta * (x[i] - mu[i]);
            }
        }
    }
    if (cfg.method == Method::None || cfg.method == Method::TMA) {
        // Deterministic outcome: report it exactly rather than a rounded average.
        ParamStore exact = clone(teacher);
        smooth_step(cfg, exact, student, StepIndex{0});
        mean = std::move(exact);
    }
    const double n = static_cast<double>(trials);
    for (std::size_t u = 0; u < m2.unit_count(); ++u) {
        for (double& v : m2.unit(u).data) {
            v = trials > 1 ? std::sqrt(v / (n - 1.0)) / std::sqrt(n) : 0.0;
        }
    }
    return {std::move(mean), std::move(m2)};
}

ParamStore monte_carlo_mean_update(const ParamStore& teacher, const ParamStore& student, const SmoothingConfig& cfg,
                                   std::size_t trials) {
    return monte_carlo_estimate(teacher, student, cfg, trials).mean;
}

std::optional<double> log_slope(std::span<const SeriesPoint> series, std::int64_t from, std::int64_t to) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (const auto& p : series) {
        if (p.epoch < from || p.epoch > to) continue;
        if (!(p.value > 0.0) || !std::isfinite(p.value)) continue;
        const double x = static_cast<double>(p.epoch);
        const double y = std::log(p.value);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) return std::nullopt;
    const double dn = static_cast<double>(n);
    const double denom = dn * sxx - sx * sx;
    if (denom == 0.0) return std::nullopt;
    return (dn * sxy - sx * sy) / denom;
}

std::optional<double> window_mean(std::span<const SeriesPoint> series, std::int64_t from, std::int64_t to) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& p : series) {
        if (p.epoch < from || p.epoch > to) continue;
        total += p.value;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

std::vector<SeriesPoint> param_series(const MetricsLog& log) {
    std::vector<SeriesPoint> out;
    for (const auto& r : log.rows) {
        if (r.teacher_param_mse) out.push_back({r.epoch, *r.teacher_param_mse});
    }
    return out;
}

std::vector<SeriesPoint> signal_series(const MetricsLog& log) {
    std::vector<SeriesPoint> out;
    for (const auto& r : log.rows) {
        if (r.teacher_signal_mse) out.push_back({r.epoch, *r.teacher_signal_mse});
    }
    return out;
}

namespace {

std::optional<double> ratio(std::optional<double> baseline, std::optional<double> run) {
    if (!baseline || !run) return std::nullopt;
    if (*baseline == *run) return 1.0;
    return *baseline / *run;
}

}  // namespace

SmoothingSummary smoothing_report(const MetricsLog& log, const MetricsLog* baseline, const ReportWindow& window) {
    if (log.empty()) throw ConfigError("log", "metrics log is empty");
    const auto params = param_series(log);
    const auto signals = signal_series(log);

    SmoothingSummary s;
    s.epochs = params.size();
    s.mean_param_mse = window_mean(params, window.mean_from, window.mean_to);
    s.mean_signal_mse = window_mean(signals, window.mean_from, window.mean_to);
    s.param_log_slope = log_slope(params, window.slope_from, window.slope_to);
    s.signal_log_slope = log_slope(signals, window.slope_from, window.slope_to);
    s.final_teacher_accuracy = log.final_teacher_accuracy();
    s.final_student_accuracy = log.final_student_accuracy();
    if (baseline) {
        if (baseline->empty()) throw ConfigError("baseline", "metrics log is empty");
        s.param_mse_ratio = ratio(window_mean(param_series(*baseline), window.mean_from, window.mean_to),
                                  s.mean_param_mse);
        s.signal_mse_ratio = ratio(window_mean(signal_series(*baseline), window.mean_from, window.mean_to),
                                   s.mean_signal_mse);
    }
    return s;
}

std::string summary_to_json(const SmoothingSummary& summary) {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) -> json {
        if (!v || !std::isfinite(*v)) return nullptr;
        return *v;
    };
    json j = {
        {"epochs", summary.epochs},
        {"mean_param_mse", opt(summary.mean_param_mse)},
        {"mean_signal_mse", opt(summary.mean_signal_mse)},
        {"param_mse_ratio", opt(summary.param_mse_ratio)},
        {"signal_mse_ratio", opt(summary.signal_mse_ratio)},
        {"param_log_slope", opt(summary.param_log_slope)},
        {"signal_log_slope", opt(summary.signal_log_slope)},
        {"final_teacher_accuracy", opt(summary.final_teacher_accuracy)},
        {"final_student_accuracy", opt(summary.final_student_accuracy)},
    };
    return j.dump(2) + "\n";
}

}  // namespace smoothkit::diag
