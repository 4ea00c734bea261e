#pragma once

// Central finite-difference check of loss_and_grad, shared by the unit and
// acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "smoothkit/rng.hpp"
#include "smoothkit/tinynn.hpp"

namespace gradcheck {

using smoothkit::KeyedRng;
namespace nn = smoothkit::nn;

struct Case {
    nn::MlpModel model;
    nn::Batch batch;
    nn::LossKind kind;
    nn::Target target;
};

// Random architecture (1-3 layers, widths 1-6), batch 1-6, optional weights.
inline Case random_case(nn::LossKind kind, std::uint64_t seed) {
    KeyedRng rng(seed, 0xC0FFEE);
    std::vector<std::int64_t> dims;
    const auto layers = 1 + rng.below(3);
    dims.push_back(static_cast<std::int64_t>(1 + rng.below(5)));
    for (std::uint64_t i = 0; i < layers; ++i) dims.push_back(static_cast<std::int64_t>(2 + rng.below(5)));
    Case c{nn::mlp_init(dims, seed), {}, kind, {}};
    // Non-zero biases so ReLU kinks are not aligned with the origin.
    for (std::size_t i = 0; i < c.model.params.unit_count(); ++i)
        for (auto& x : c.model.params.unit(i).data) x += rng.uniform(-0.3, 0.3);

    const auto batch = static_cast<Eigen::Index>(1 + rng.below(6));
    c.batch.inputs = nn::Matrix(batch, dims.front());
    for (Eigen::Index i = 0; i < c.batch.inputs.size(); ++i) c.batch.inputs.data()[i] = rng.uniform(-2.0, 2.0);
    if (rng.bernoulli(0.5)) {
        c.batch.weights.resize(static_cast<std::size_t>(batch));
        for (auto& w : c.batch.weights) w = rng.bernoulli(0.2) ? 0.0 : rng.uniform(0.1, 2.0);
    }
    if (kind == nn::LossKind::CrossEntropy) {
        std::vector<int> labels(static_cast<std::size_t>(batch));
        for (auto& y : labels) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(dims.back())));
        c.target = labels;
    } else {
        nn::Matrix t(batch, dims.back());
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
        c.target = t;
    }
    return c;
}

// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double max_relative_error(Case& c, double h = 1e-5, double floor = 1e-6) {
    const auto analytic = nn::loss_and_grad(c.model, c.batch, c.kind, c.target);
    double worst = 0.0;
    for (std::size_t u = 0; u < c.model.params.unit_count(); ++u) {
        auto& data = c.model.params.unit(u).data;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double up = nn::loss_and_grad(c.model, c.batch, c.kind, c.target).loss;
            data[i] = saved - h;
            const double down = nn::loss_and_grad(c.model, c.batch, c.kind, c.target).loss;
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic.grads.unit(u).data[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace gradcheck
