#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include <json.hpp>

#include "smoothkit/diagnostics.hpp"
#include "smoothkit/errors.hpp"
#include "smoothkit/metrics.hpp"
#include "smoothkit/rng.hpp"

using namespace smoothkit;
using namespace smoothkit::diag;
using nn::Matrix;

namespace {

ParamStore store_of(std::vector<double> values) {
    ParamStore s;
    const auto n = static_cast<std::int64_t>(values.size());
    s.add_unit({"w", {n}, UnitKind::Weight}, std::move(values));
    return s;
}

ParamStore shifted(const ParamStore& s, double delta) {
    auto out = s;
    for (std::size_t u = 0; u < out.unit_count(); ++u)
        for (auto& x : out.unit(u).data) x += delta;
    return out;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    KeyedRng rng(seed, 5);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

MetricsRow epoch_row(std::uint64_t step, std::int64_t epoch, double param, double signal, double acc) {
    MetricsRow r;
    r.step = step;
    r.epoch = epoch;
    r.teacher_param_mse = param;
    r.teacher_signal_mse = signal;
    r.eval_accuracy_student = acc;
    r.eval_accuracy_teacher = acc;
    return r;
}

MetricsLog geometric_log(double first, double ratio, int epochs) {
    MetricsLog log;
    MetricsRow initial;
    initial.eval_accuracy_teacher = 0.5;
    initial.eval_accuracy_student = 0.5;
    log.rows.push_back(initial);
    double v = first;
    for (int e = 1; e <= epochs; ++e, v *= ratio)
        log.rows.push_back(epoch_row(static_cast<std::uint64_t>(e), e, v, 2.0 * v, 0.5 + 0.01 * e));
    return log;
}

}  // namespace

TEST_CASE("param mse series: constant and offset teachers") {
    const auto base = store_of({1.0, -2.0, 3.5});
    std::vector<EpochSnapshot> constant{{0, base, {}}, {1, base, {}}, {2, base, {}}};
    const auto c = param_mse_series(constant);
    REQUIRE(c.size() == 2);
    CHECK(c[0] == SeriesPoint{1, 0.0});
    CHECK(c[1] == SeriesPoint{2, 0.0});

    std::vector<EpochSnapshot> drifting{{0, base, {}}, {1, shifted(base, 1.0)}, {2, shifted(base, 2.0)}};
    for (const auto& pt : param_mse_series(drifting)) CHECK(pt.value == doctest::Approx(1.0));
}

TEST_CASE("param mse series: errors") {
    const auto a = store_of({1.0, 2.0});
    std::vector<EpochSnapshot> one{{0, a, {}}};
    CHECK_THROWS_AS((void)param_mse_series(one), ConfigError);
    std::vector<EpochSnapshot> mismatched{{0, a, {}}, {1, store_of({1.0, 2.0, 3.0}), {}}};
    CHECK_THROWS_AS((void)param_mse_series(mismatched), CongruenceError);
}

TEST_CASE("signal mse series: linear teacher closed form") {
    // For a linear teacher f(x) = xW + b the adjacent-epoch signal MSE over a
    // probe X (P x d) is (1/k) [tr(dW^T M dW) + 2 mu dW db^T + |db|^2] with
    // M = X^T X / P and mu the mean probe row.
    const Eigen::Index d = 3, k = 4, P = 50;
    const Matrix X = random_matrix(P, d, 1);
    const auto m0 = nn::mlp_init({d, k}, 10);
    auto m1 = m0;
    m1.weight(0) += random_matrix(d, k, 2) * 0.1;
    m1.bias(0) += random_matrix(1, k, 3).row(0) * 0.2;

    std::vector<EpochSnapshot> snaps{{0, m0.params, nn::predict(m0, X)}, {1, m1.params, nn::predict(m1, X)}};
    const auto s = signal_mse_series(snaps);
    REQUIRE(s.size() == 1);

    const Matrix dW = m1.weight(0) - m0.weight(0);
    const Eigen::RowVectorXd db = m1.bias(0) - m0.bias(0);
    const Matrix M = X.transpose() * X / static_cast<double>(P);
    const Eigen::RowVectorXd mu = X.colwise().mean();
    const double oracle =
        ((dW.transpose() * M * dW).trace() + 2.0 * (mu * dW).dot(db) + db.squaredNorm()) / static_cast<double>(k);
    CHECK(s[0].epoch == 1);
    CHECK(s[0].value == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("signal mse series: shape mismatch") {
    const auto a = store_of({1.0});
    std::vector<EpochSnapshot> snaps{{0, a, Matrix::Zero(4, 2)}, {1, a, Matrix::Zero(5, 2)}};
    CHECK_THROWS_AS((void)signal_mse_series(snaps), ShapeError);
    CHECK_THROWS_AS((void)matrix_mse(Matrix::Zero(2, 2), Matrix::Zero(2, 3)), ShapeError);
    CHECK(matrix_mse(Matrix::Zero(2, 2), Matrix::Constant(2, 2, 3.0)) == 9.0);
}

TEST_CASE("monte carlo: TMA is deterministic") {
    const auto teacher = store_of({1.0, 2.0, -1.0});
    const auto student = store_of({0.0, 4.0, 1.0});
    const SmoothingConfig cfg{Method::TMA, 0.0, 0.9, Granularity::LayerWise, 1, true};
    const auto est = monte_carlo_estimate(teacher, student, cfg, 50);
    auto exact = teacher;
    apply_tma(exact, student, 0.9);
    CHECK(est.mean.flatten() == exact.flatten());
    for (double se : est.std_error.flatten()) CHECK(se == 0.0);
    CHECK_THROWS_AS((void)monte_carlo_estimate(teacher, student, cfg, 0), ConfigError);
}

TEST_CASE("monte carlo: STS mean matches the effective momentum") {
    std::vector<double> t(40), s(40);
    KeyedRng rng(2, 0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = rng.uniform(-1.0, 1.0);
        s[i] = rng.uniform(-1.0, 1.0);
    }
    const auto teacher = store_of(t), student = store_of(s);
    const SmoothingConfig cfg{Method::STS, 0.4, 0.7, Granularity::NeuronWise, 9, true};
    const auto est = monte_carlo_estimate(teacher, student, cfg, 4000);
    const double me = effective_momentum(0.4, 0.7);
    const auto mean = est.mean.flatten(), se = est.std_error.flatten();
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double expected = me * t[i] + (1.0 - me) * s[i];
        CHECK(std::abs(mean[i] - expected) <= 4.0 * se[i] + 1e-12);
    }
    CHECK(monte_carlo_mean_update(teacher, student, cfg, 4000).flatten() == mean);
}

TEST_CASE("monte carlo: SE standard error halves with four times the trials") {
    const auto teacher = store_of({0.0, 1.0, 2.0, 3.0});
    const auto student = store_of({1.0, -1.0, 0.5, 5.0});
    const SmoothingConfig cfg{Method::SE, 0.5, 0.0, Granularity::NeuronWise, 4, true};
    const auto small = monte_carlo_estimate(teacher, student, cfg, 2000).std_error.flatten();
    const auto large = monte_carlo_estimate(teacher, student, cfg, 8000).std_error.flatten();
    for (std::size_t i = 0; i < small.size(); ++i) {
        const double r = large[i] / small[i];
        CHECK(r == doctest::Approx(0.5).epsilon(0.1));
    }
}

TEST_CASE("log slope and window mean") {
    std::vector<SeriesPoint> series;
    for (int e = 1; e <= 10; ++e) series.push_back({e, 3.0 * std::pow(0.8, e)});
    REQUIRE(log_slope(series, 1, 10).has_value());
    CHECK(*log_slope(series, 1, 10) == doctest::Approx(std::log(0.8)).epsilon(1e-12));
    CHECK(*log_slope(series, 4, 6) == doctest::Approx(std::log(0.8)).epsilon(1e-12));
    CHECK_FALSE(log_slope(series, 4, 4).has_value());
    CHECK_FALSE(log_slope(series, 20, 30).has_value());

    series[4].value = 0.0;  // skipped
    series[5].value = std::numeric_limits<double>::quiet_NaN();
    CHECK(*log_slope(series, 1, 10) == doctest::Approx(std::log(0.8)).epsilon(1e-12));

    const std::vector<SeriesPoint> flat{{1, 2.0}, {2, 4.0}, {3, 6.0}};
    CHECK(*window_mean(flat, 1, 3) == 4.0);
    CHECK(*window_mean(flat, 2, 2) == 4.0);
    CHECK_FALSE(window_mean(flat, 5, 9).has_value());
}

TEST_CASE("smoothing report") {
    const auto log = geometric_log(1.0, 0.5, 8);
    const auto self = smoothing_report(log, &log);
    CHECK(self.epochs == 8);
    CHECK(*self.param_mse_ratio == 1.0);
    CHECK(*self.signal_mse_ratio == 1.0);
    CHECK(*self.param_log_slope == doctest::Approx(std::log(0.5)));
    CHECK(*self.final_teacher_accuracy == doctest::Approx(0.58));

    const auto quieter = geometric_log(0.01, 0.5, 8);
    const auto vs = smoothing_report(quieter, &log);
    CHECK(*vs.param_mse_ratio == doctest::Approx(100.0));

    const auto plain = smoothing_report(log);
    CHECK_FALSE(plain.param_mse_ratio.has_value());

    ReportWindow w;
    w.mean_from = 2;
    w.mean_to = 3;
    CHECK(*smoothing_report(log, nullptr, w).mean_param_mse == doctest::Approx(0.375));

    CHECK_THROWS_AS((void)smoothing_report(MetricsLog{}), ConfigError);
    const MetricsLog empty;
    CHECK_THROWS_AS((void)smoothing_report(log, &empty), ConfigError);
}

TEST_CASE("summary json keys") {
    const auto log = geometric_log(1.0, 0.5, 4);
    const auto j = nlohmann::json::parse(summary_to_json(smoothing_report(log)));
    for (const char* key : {"epochs", "mean_param_mse", "mean_signal_mse", "param_mse_ratio", "signal_mse_ratio",
                            "param_log_slope", "signal_log_slope", "final_teacher_accuracy",
                            "final_student_accuracy"})
        CHECK(j.contains(key));
    CHECK(j["param_mse_ratio"].is_null());
    CHECK(j["epochs"] == 4);
}

TEST_CASE("metrics csv round trip") {
    auto log = geometric_log(1.0, 0.5, 3);
    MetricsRow step;
    step.step = 10;
    step.epoch = 1;
    step.lr = 0.1;
    step.loss_total = 1.0 / 3.0;
    step.loss_supervised = 5e-324;
    step.loss_unsupervised = -0.0;
    step.pseudo_label_rate = 0.875;
    step.preserved_fraction = 0.5;
    log.rows.insert(log.rows.begin() + 1, step);
    for (std::size_t i = 0; i < log.rows.size(); ++i) log.rows[i].step = i;

    const auto csv = metrics_to_csv(log);
    CHECK(csv.rfind(std::string(kMetricsCsvHeader) + "\n", 0) == 0);
    const auto back = metrics_from_csv(csv);
    CHECK(back == log);
    CHECK(metrics_to_csv(back) == csv);
    CHECK(std::signbit(*back.rows[1].loss_unsupervised));
}

TEST_CASE("metrics csv: malformed input") {
    CHECK_THROWS_AS((void)metrics_from_csv(""), FormatError);
    CHECK_THROWS_AS((void)metrics_from_csv("step,epoch\n1,2\n"), FormatError);
    const std::string header(kMetricsCsvHeader);
    CHECK_THROWS_AS((void)metrics_from_csv(header + "\n1,2,3\n"), FormatError);
    CHECK_THROWS_AS((void)metrics_from_csv(header + "\nx,0,,,,,,,,,,\n"), FormatError);
    CHECK_THROWS_AS((void)metrics_from_csv(header + "\n0,0,abc,,,,,,,,,\n"), FormatError);
    CHECK_NOTHROW((void)metrics_from_csv(header + "\n0,0,,,,,,,,,,\n"));
}

TEST_CASE("format double") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}
