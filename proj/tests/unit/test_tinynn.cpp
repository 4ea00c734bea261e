#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "smoothkit/errors.hpp"
#include "smoothkit/rng.hpp"
#include "smoothkit/tinynn.hpp"
#include "support/gradcheck.hpp"

using namespace smoothkit;
using nn::Matrix;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    KeyedRng rng(seed, 3);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.5, 1.5);
    return m;
}

// Forward pass written with plain loops over the flat parameter buffers.
std::vector<std::vector<double>> naive_forward(const nn::MlpModel& model, const Matrix& x) {
    std::vector<std::vector<double>> h(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) h[i].push_back(x(i, j));
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
        const auto& w = model.params.unit(2 * k);
        const auto& b = model.params.unit(2 * k + 1);
        const auto din = static_cast<std::size_t>(w.shape[0]);
        const auto dout = static_cast<std::size_t>(w.shape[1]);
        for (auto& row : h) {
            std::vector<double> next(dout, 0.0);
            for (std::size_t o = 0; o < dout; ++o) {
                double acc = 0.0;
                for (std::size_t in = 0; in < din; ++in) acc += row[in] * w.data[in * dout + o];
                acc += b.data[o];
                next[o] = (k + 1 < model.layer_count()) ? std::max(acc, 0.0) : acc;
            }
            row = std::move(next);
        }
    }
    return h;
}

}  // namespace

TEST_CASE("mlp_init layout and determinism") {
    const auto m = nn::mlp_init({2, 4, 2}, 1);
    CHECK(m.params.unit_count() == 4);
    CHECK(m.params.scalar_count() == 22);
    CHECK(m.params.unit(0).name == "layer0.weight");
    CHECK(m.params.unit(0).shape == Shape{2, 4});
    CHECK(m.params.unit(1).name == "layer0.bias");
    CHECK(m.params.unit(3).shape == Shape{2});
    const auto again = nn::mlp_init({2, 4, 2}, 1);
    CHECK(bitwise_equal(m.params, again.params));
    CHECK_FALSE(bitwise_equal(m.params, nn::mlp_init({2, 4, 2}, 2).params));
    for (double x : m.params.unit(0).data) CHECK(std::abs(x) <= 1.0 / std::sqrt(2.0));
    for (double x : m.params.unit(2).data) CHECK(std::abs(x) <= 0.5);
    for (double x : m.params.unit(1).data) CHECK(x == 0.0);
}

TEST_CASE("mlp_init rejects degenerate dims") {
    CHECK_THROWS_AS((void)nn::mlp_init({2}, 0), ConstructionError);
    CHECK_THROWS_AS((void)nn::mlp_init({2, 0, 2}, 0), ConstructionError);
}

TEST_CASE("forward special cases") {
    auto zero = nn::mlp_init({3, 5, 2}, 4);
    for (std::size_t u = 0; u < zero.params.unit_count(); ++u)
        for (auto& x : zero.params.unit(u).data) x = 0.0;
    const auto x = random_matrix(4, 3, 1);
    CHECK(nn::predict(zero, x).isZero(0.0));

    auto ident = nn::mlp_init({3, 3}, 4);
    ident.weight(0) = Matrix::Identity(3, 3);
    CHECK(nn::predict(ident, x) == x);

    CHECK_THROWS_AS((void)nn::forward(ident, random_matrix(2, 4, 1)), ShapeError);
}

TEST_CASE("forward matches a naive loop oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = nn::mlp_init({3, 7, 5, 4}, seed);
        const auto x = random_matrix(6, 3, 100 + seed);
        const auto logits = nn::predict(m, x);
        const auto oracle = naive_forward(m, x);
        for (Eigen::Index i = 0; i < logits.rows(); ++i)
            for (Eigen::Index j = 0; j < logits.cols(); ++j) CHECK(std::abs(logits(i, j) - oracle[i][j]) <= 1e-12);
    }
}

TEST_CASE("loss examples") {
    Matrix logits = Matrix::Zero(1, 2);
    const std::vector<int> y{0};
    CHECK(nn::cross_entropy(logits, y).loss == doctest::Approx(std::numbers::ln2).epsilon(1e-15));

    const auto p = random_matrix(5, 4, 3);
    CHECK(nn::normalized_mse(p, p).loss == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(nn::normalized_mse(p, -p).loss == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("loss bounds (property)") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto a = random_matrix(8, 3, seed);
        const auto b = random_matrix(8, 3, seed + 1000);
        const double l = nn::normalized_mse(a, b).loss;
        CHECK(l >= 0.0);
        CHECK(l <= 4.0);
        std::vector<int> labels(8);
        for (std::size_t i = 0; i < 8; ++i) labels[i] = static_cast<int>((seed + i) % 3);
        CHECK(nn::cross_entropy(a, labels).loss >= 0.0);
    }
}

TEST_CASE("all-zero weights give zero loss and zero gradients") {
    auto model = nn::mlp_init({2, 4, 3}, 5);
    nn::Batch batch{random_matrix(4, 2, 5), {}, {0.0, 0.0, 0.0, 0.0}};
    const auto ce = nn::loss_and_grad(model, batch, nn::LossKind::CrossEntropy, std::vector<int>{0, 1, 2, 0});
    CHECK(ce.loss == 0.0);
    for (const auto& u : ce.grads.units())
        for (double g : u.data) CHECK(g == 0.0);
    const auto mse = nn::loss_and_grad(model, batch, nn::LossKind::NormalizedMse, random_matrix(4, 3, 9));
    CHECK(mse.loss == 0.0);
    for (const auto& u : mse.grads.units())
        for (double g : u.data) CHECK(g == 0.0);
}

TEST_CASE("weighted samples scale their contribution") {
    const auto logits = random_matrix(3, 4, 8);
    const std::vector<int> y{1, 3, 0};
    const std::vector<double> w{1.0, 0.0, 2.0};
    const auto weighted = nn::cross_entropy(logits, y, w);
    // Oracle: per-row CE from the softmax definition, weighted mean over B.
    double oracle = 0.0;
    for (int i = 0; i < 3; ++i) {
        double z = 0.0;
        for (int j = 0; j < 4; ++j) z += std::exp(logits(i, j));
        oracle += w[i] * (std::log(z) - logits(i, y[i]));
    }
    CHECK(weighted.loss == doctest::Approx(oracle / 3.0).epsilon(1e-13));
    CHECK(weighted.output_grad.row(1).isZero(0.0));
}

TEST_CASE("loss shape errors") {
    const auto model = nn::mlp_init({2, 3}, 1);
    nn::Batch batch{random_matrix(4, 2, 1), {}, {}};
    CHECK_THROWS_AS((void)nn::loss_and_grad(model, batch, nn::LossKind::CrossEntropy, std::vector<int>{0, 1}),
                    ShapeError);
    CHECK_THROWS_AS((void)nn::loss_and_grad(model, batch, nn::LossKind::CrossEntropy, std::vector<int>{0, 1, 2, 3}),
                    ShapeError);
    CHECK_THROWS_AS((void)nn::loss_and_grad(model, batch, nn::LossKind::NormalizedMse, random_matrix(4, 2, 1)),
                    ShapeError);
    CHECK_THROWS_AS((void)nn::loss_and_grad(model, batch, nn::LossKind::NormalizedMse, std::vector<int>{0, 1, 2, 0}),
                    ShapeError);
    batch.weights = {1.0};
    CHECK_THROWS_AS((void)nn::loss_and_grad(model, batch, nn::LossKind::CrossEntropy, std::vector<int>{0, 1, 2, 0}),
                    ShapeError);
}

TEST_CASE("gradients match central finite differences") {
    for (auto kind : {nn::LossKind::CrossEntropy, nn::LossKind::NormalizedMse}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto c = gradcheck::random_case(kind, seed);
            CHECK(gradcheck::max_relative_error(c) <= 1e-4);
        }
    }
}

TEST_CASE("input gradient matches finite differences") {
    auto model = nn::mlp_init({3, 6, 4}, 12);
    auto x = random_matrix(2, 3, 12);
    const auto target = random_matrix(2, 4, 13);
    const auto fwd = nn::forward(model, x);
    const auto lv = nn::normalized_mse(fwd.logits, target);
    const auto back = nn::backward(model, fwd.cache, lv.output_grad);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + h;
        const double up = nn::normalized_mse(nn::predict(model, x), target).loss;
        x.data()[i] = saved - h;
        const double down = nn::normalized_mse(nn::predict(model, x), target).loss;
        x.data()[i] = saved;
        CHECK(back.input_grad.data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("sgd_step examples") {
    ParamStore p;
    p.add_unit({"w", {3}, UnitKind::Weight}, {1.0, -2.0, 3.0});
    auto zero_grad = clone(p);
    for (auto& g : zero_grad.unit(0).data) g = 0.0;

    auto opt = nn::OptState::for_params(p, 0.1, 0.9, 0.0);
    auto fixed = clone(p);
    nn::sgd_step(fixed, zero_grad, opt);
    CHECK(bitwise_equal(fixed, p));

    ParamStore g;
    g.add_unit({"w", {3}, UnitKind::Weight}, {0.5, 0.25, -1.0});
    auto vanilla = clone(p);
    auto plain = nn::OptState::for_params(p, 0.1, 0.0, 0.0);
    nn::sgd_step(vanilla, g, plain);
    for (std::size_t i = 0; i < 3; ++i) CHECK(vanilla.unit(0).data[i] == p.unit(0).data[i] - 0.1 * g.unit(0).data[i]);

    // Hand-unrolled: v1 = g, v2 = 0.9 g + g = 1.9 g; second displacement = lr * 1.9 * g.
    auto mom = clone(p);
    auto mopt = nn::OptState::for_params(p, 0.1, 0.9, 0.0);
    nn::sgd_step(mom, g, mopt);
    const auto after_one = clone(mom);
    nn::sgd_step(mom, g, mopt);
    for (std::size_t i = 0; i < 3; ++i) {
        const double displacement = after_one.unit(0).data[i] - mom.unit(0).data[i];
        CHECK(displacement == doctest::Approx(0.1 * 1.9 * g.unit(0).data[i]).epsilon(1e-14));
    }
}

TEST_CASE("sgd_step weight decay and lr = 0") {
    ParamStore p;
    p.add_unit({"w", {2}, UnitKind::Weight}, {2.0, -4.0});
    auto zero_grad = clone(p);
    for (auto& g : zero_grad.unit(0).data) g = 0.0;
    auto decayed = clone(p);
    auto opt = nn::OptState::for_params(p, 0.5, 0.0, 0.1);
    nn::sgd_step(decayed, zero_grad, opt);
    CHECK(decayed.unit(0).data[0] == doctest::Approx(2.0 - 0.5 * 0.1 * 2.0));

    auto frozen = clone(p);
    auto noop = nn::OptState::for_params(p, 0.0, 0.9, 0.1);
    ParamStore g;
    g.add_unit({"w", {2}, UnitKind::Weight}, {1e10, -1e10});
    for (int i = 0; i < 5; ++i) nn::sgd_step(frozen, g, noop);
    CHECK(bitwise_equal(frozen, p));
}

TEST_CASE("sgd_step congruence") {
    ParamStore p, g;
    p.add_unit({"w", {2}, UnitKind::Weight}, {1.0, 2.0});
    g.add_unit({"w", {3}, UnitKind::Weight}, {1.0, 2.0, 3.0});
    auto opt = nn::OptState::for_params(p, 0.1, 0.0, 0.0);
    CHECK_THROWS_AS(nn::sgd_step(p, g, opt), CongruenceError);
}

TEST_CASE("training trajectories are deterministic") {
    auto run = [] {
        auto model = nn::mlp_init({2, 8, 3}, 21);
        auto opt = nn::OptState::for_params(model.params, 0.1, 0.9, 1e-4);
        for (std::uint64_t step = 0; step < 30; ++step) {
            nn::Batch b{random_matrix(5, 2, step), {}, {}};
            std::vector<int> y(5);
            for (std::size_t i = 0; i < 5; ++i) y[i] = static_cast<int>((step + i) % 3);
            const auto lg = nn::loss_and_grad(model, b, nn::LossKind::CrossEntropy, y);
            nn::sgd_step(model, lg.grads, opt);
        }
        return model.params;
    };
    CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("cosine_lr schedule") {
    CHECK(nn::cosine_lr(0.1, 0, 100, 10, 0.001) == doctest::Approx(0.0001).epsilon(1e-12));
    CHECK(nn::cosine_lr(0.1, 10, 100, 10, 0.001) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(nn::cosine_lr(0.1, 100, 100, 10, 0.001) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(std::abs(nn::cosine_lr(0.1, 100, 100, 10, 0.001)) <= 1e-17);
    CHECK(nn::cosine_lr(0.1, 55, 100, 10, 0.001) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(nn::cosine_lr(0.1, 5, 100, 10, 0.001) == doctest::Approx(0.1 * (0.001 + 0.999 * 0.5)).epsilon(1e-12));
    CHECK(nn::cosine_lr(0.2, 0, 50, 0, 0.001) == doctest::Approx(0.2));
    // Monotone non-increasing after warmup.
    double prev = nn::cosine_lr(1.0, 10, 100, 10, 0.0);
    for (std::int64_t s = 11; s <= 100; ++s) {
        const double lr = nn::cosine_lr(1.0, s, 100, 10, 0.0);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("cosine_lr rejects invalid ranges") {
    CHECK_THROWS_AS((void)nn::cosine_lr(0.1, -1, 100, 0, 0.001), ConfigError);
    CHECK_THROWS_AS((void)nn::cosine_lr(0.1, 101, 100, 0, 0.001), ConfigError);
    CHECK_THROWS_AS((void)nn::cosine_lr(0.1, 0, 100, 100, 0.001), ConfigError);
    CHECK_THROWS_AS((void)nn::cosine_lr(0.1, 0, 0, 0, 0.001), ConfigError);
    CHECK_THROWS_AS((void)nn::cosine_lr(0.1, 0, 100, 10, 1.5), ConfigError);
}

TEST_CASE("argmax_rows") {
    Matrix m(3, 3);
    m << 0, 1, 2, 5, 4, 3, 1, 9, 1;
    CHECK(nn::argmax_rows(m) == std::vector<int>{2, 0, 1});
}
