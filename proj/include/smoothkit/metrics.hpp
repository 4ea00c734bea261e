#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace smoothkit {

/// One training step. Step 0 is the initial evaluation row. Diagnostics
/// (MSE and evaluation accuracies) are present only on epoch-boundary rows.
struct MetricsRow {
    std::uint64_t step = 0;
    std::int64_t epoch = 0;
    std::optional<double> lr;
    std::optional<double> loss_total;
    std::optional<double> loss_supervised;
    std::optional<double> loss_unsupervised;
    std::optional<double> pseudo_label_rate;
    std::optional<double> teacher_param_mse;
    std::optional<double> teacher_signal_mse;
    std::optional<double> preserved_fraction;
    std::optional<double> eval_accuracy_student;
    std::optional<double> eval_accuracy_teacher;

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct MetricsLog {
    std::vector<MetricsRow> rows;

    [[nodiscard]] bool empty() const noexcept { return rows.empty(); }
    /// Rows carrying epoch diagnostics, in order.
    [[nodiscard]] std::vector<const MetricsRow*> epoch_rows() const;
    /// Final teacher/student evaluation accuracy (last row that has one).
    [[nodiscard]] std::optional<double> final_teacher_accuracy() const;
    [[nodiscard]] std::optional<double> final_student_accuracy() const;

    friend bool operator==(const MetricsLog&, const MetricsLog&) = default;
};

/// Column order of metrics.csv.
inline constexpr std::string_view kMetricsCsvHeader =
    "step,epoch,lr,loss_total,loss_supervised,loss_unsupervised,pseudo_label_rate,teacher_param_mse,"
    "teacher_signal_mse,preserved_fraction,eval_accuracy_student,eval_accuracy_teacher";

/// Shortest round-trip decimal form, locale independent ("nan"/"inf"/"-inf"
/// for non-finite values).
[[nodiscard]] std::string format_double(double value);

/// Header row plus one line per row, LF endings, empty cells for absent values.
[[nodiscard]] std::string metrics_to_csv(const MetricsLog& log);
/// Inverse of metrics_to_csv. Throws FormatError.
[[nodiscard]] MetricsLog metrics_from_csv(std::string_view text);

}  // namespace smoothkit
