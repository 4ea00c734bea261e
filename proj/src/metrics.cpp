#include "smoothkit/metrics.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

#include "smoothkit/errors.hpp"

namespace smoothkit {

namespace {

using Field = std::optional<double> MetricsRow::*;

constexpr std::array<Field, 10> kOptionalFields = {
    &MetricsRow::lr,
    &MetricsRow::loss_total,
    &MetricsRow::loss_supervised,
    &MetricsRow::loss_unsupervised,
    &MetricsRow::pseudo_label_rate,
    &MetricsRow::teacher_param_mse,
    &MetricsRow::teacher_signal_mse,
    &MetricsRow::preserved_fraction,
    &MetricsRow::eval_accuracy_student,
    &MetricsRow::eval_accuracy_teacher,
};

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

double parse_double(std::string_view cell, std::size_t line_no) {
    if (cell == "nan") return std::nan("");
    if (cell == "inf") return HUGE_VAL;
    if (cell == "-inf") return -HUGE_VAL;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw FormatError("metrics.csv line " + std::to_string(line_no) + ": bad number '" + std::string(cell) + "'");
    }
    return value;
}

template <typename Int>
Int parse_int(std::string_view cell, std::size_t line_no) {
    Int value{};
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw FormatError("metrics.csv line " + std::to_string(line_no) + ": bad integer '" + std::string(cell) + "'");
    }
    return value;
}

}  // namespace

std::vector<const MetricsRow*> MetricsLog::epoch_rows() const {
    std::vector<const MetricsRow*> out;
    for (const auto& r : rows) {
        if (r.eval_accuracy_teacher || r.teacher_param_mse) out.push_back(&r);
    }
    return out;
}

std::optional<double> MetricsLog::final_teacher_accuracy() const {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
        if (it->eval_accuracy_teacher) return it->eval_accuracy_teacher;
    }
    return std::nullopt;
}

std::optional<double> MetricsLog::final_student_accuracy() const {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
        if (it->eval_accuracy_student) return it->eval_accuracy_student;
    }
    return std::nullopt;
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return {buf.data(), ptr};
}

std::string metrics_to_csv(const MetricsLog& log) {
    std::string out(kMetricsCsvHeader);
    out += '\n';
    for (const auto& row : log.rows) {
        out += std::to_string(row.step);
        out += ',';
        out += std::to_string(row.epoch);
        for (auto field : kOptionalFields) {
            out += ',';
            if (const auto& v = row.*field) out += format_double(*v);
        }
        out += '\n';
    }
    return out;
}

MetricsLog metrics_from_csv(std::string_view text) {
    MetricsLog log;
    std::size_t line_no = 0;
    bool seen_header = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!seen_header) {
            if (line != kMetricsCsvHeader) throw FormatError("metrics.csv header does not match the expected schema");
            seen_header = true;
            continue;
        }
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != 2 + kOptionalFields.size()) {
            throw FormatError("metrics.csv line " + std::to_string(line_no) + ": expected " +
                              std::to_string(2 + kOptionalFields.size()) + " cells");
        }
        MetricsRow row;
        row.step = parse_int<std::uint64_t>(cells[0], line_no);
        row.epoch = parse_int<std::int64_t>(cells[1], line_no);
        for (std::size_t k = 0; k < kOptionalFields.size(); ++k) {
            if (!cells[k + 2].empty()) row.*kOptionalFields[k] = parse_double(cells[k + 2], line_no);
        }
        log.rows.push_back(row);
    }
    if (!seen_header) throw FormatError("metrics.csv is empty");
    return log;
}

}  // namespace smoothkit
