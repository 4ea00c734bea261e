#include "smoothkit/tinynn.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "smoothkit/errors.hpp"

namespace smoothkit::nn {

namespace {

std::string weight_name(std::size_t k) { return "layer" + std::to_string(k) + ".weight"; }
std::string bias_name(std::size_t k) { return "layer" + std::to_string(k) + ".bias"; }

std::size_t weight_index(std::size_t layer) { return 2 * layer; }
std::size_t bias_index(std::size_t layer) { return 2 * layer + 1; }

double sample_weight(std::span<const double> weights, Eigen::Index i) {
    return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
}

}  // namespace

Eigen::Map<const Matrix> MlpModel::weight(std::size_t layer) const {
    const auto& u = params.unit(weight_index(layer));
    return {u.data.data(), u.shape[0], u.shape[1]};
}

Eigen::Map<Matrix> MlpModel::weight(std::size_t layer) {
    auto& u = params.unit(weight_index(layer));
    return {u.data.data(), u.shape[0], u.shape[1]};
}

Eigen::Map<const Eigen::RowVectorXd> MlpModel::bias(std::size_t layer) const {
    const auto& u = params.unit(bias_index(layer));
    return {u.data.data(), static_cast<Eigen::Index>(u.data.size())};
}

Eigen::Map<Eigen::RowVectorXd> MlpModel::bias(std::size_t layer) {
    auto& u = params.unit(bias_index(layer));
    return {u.data.data(), static_cast<Eigen::Index>(u.data.size())};
}

MlpModel mlp_init(std::span<const std::int64_t> layer_dims, std::uint64_t seed) {
    if (layer_dims.size() < 2) throw ConstructionError("an MLP needs at least two layer dims");
    std::vector<UnitSpec> spec;
    for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
        spec.push_back({weight_name(k), {layer_dims[k], layer_dims[k + 1]}, UnitKind::Weight});
        spec.push_back({bias_name(k), {layer_dims[k + 1]}, UnitKind::Bias});
    }
    MlpModel model;
    model.layer_dims.assign(layer_dims.begin(), layer_dims.end());
    model.params = new_store(spec, InitRule::fan_in(), seed);
    return model;
}

MlpModel mlp_init(std::initializer_list<std::int64_t> layer_dims, std::uint64_t seed) {
    return mlp_init(std::span<const std::int64_t>(layer_dims.begin(), layer_dims.size()), seed);
}

ForwardResult forward(const MlpModel& model, const Matrix& inputs) {
    if (inputs.cols() != model.input_dim()) {
        throw ShapeError("input width " + std::to_string(inputs.cols()) + " != model input dim " +
                         std::to_string(model.input_dim()));
    }
    ForwardResult result;
    result.cache.activations.reserve(model.layer_count());
    Matrix h = inputs;
    for (std::size_t k = 0; k < model.layer_count(); ++k) {
        Matrix z = h * model.weight(k);
        z.rowwise() += model.bias(k);
        result.cache.activations.push_back(std::move(h));
        if (k + 1 < model.layer_count()) {
            h = z.cwiseMax(0.0);
        } else {
            result.logits = std::move(z);
        }
    }
    return result;
}

Matrix predict(const MlpModel& model, const Matrix& inputs) { return forward(model, inputs).logits; }

BackwardResult backward(const MlpModel& model, const ForwardCache& cache, const Matrix& output_grad) {
    const std::size_t layers = model.layer_count();
    if (cache.activations.size() != layers) throw ShapeError("forward cache does not match model depth");
    if (output_grad.cols() != model.output_dim() || output_grad.rows() != cache.activations.front().rows()) {
        throw ShapeError("output gradient shape does not match logits");
    }
    BackwardResult result;
    result.grads = clone(model.params);
    Matrix delta = output_grad;
    for (std::size_t k = layers; k-- > 0;) {
        const Matrix& input = cache.activations[k];
        auto& gw = result.grads.unit(weight_index(k));
        auto& gb = result.grads.unit(bias_index(k));
        Eigen::Map<Matrix>(gw.data.data(), gw.shape[0], gw.shape[1]).noalias() = input.transpose() * delta;
        Eigen::Map<Eigen::RowVectorXd>(gb.data.data(), static_cast<Eigen::Index>(gb.data.size())) =
            delta.colwise().sum();
        Matrix upstream = delta * model.weight(k).transpose();
        if (k > 0) {
            // input is ReLU(z_{k-1}); derivative is 1 where the activation is positive.
            upstream = upstream.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
        }
        delta = std::move(upstream);
    }
    result.input_grad = std::move(delta);
    return result;
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        double total = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            out(i, j) = std::exp(logits(i, j) - mx);
            total += out(i, j);
        }
        out.row(i) /= total;
    }
    return out;
}

LossValue cross_entropy(const Matrix& logits, std::span<const int> labels, std::span<const double> weights) {
    const auto batch = logits.rows();
    if (static_cast<Eigen::Index>(labels.size()) != batch) throw ShapeError("label count does not match batch size");
    if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != batch) {
        throw ShapeError("weight count does not match batch size");
    }
    LossValue out;
    out.output_grad = Matrix::Zero(batch, logits.cols());
    if (batch == 0) return out;
    const Matrix probs = softmax(logits);
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (Eigen::Index i = 0; i < batch; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= logits.cols()) throw ShapeError("label " + std::to_string(y) + " out of range");
        const double w = sample_weight(weights, i);
        if (w == 0.0) continue;
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        out.loss += w * (lse - logits(i, y)) * inv_b;
        out.output_grad.row(i) = probs.row(i) * (w * inv_b);
        out.output_grad(i, y) -= w * inv_b;
    }
    return out;
}

LossValue normalized_mse(const Matrix& prediction, const Matrix& target, std::span<const double> weights) {
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
        throw ShapeError("prediction and target shapes differ");
    }
    const auto batch = prediction.rows();
    if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != batch) {
        throw ShapeError("weight count does not match batch size");
    }
    constexpr double kMinNorm = 1e-12;
    LossValue out;
    out.output_grad = Matrix::Zero(batch, prediction.cols());
    if (batch == 0) return out;
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (Eigen::Index i = 0; i < batch; ++i) {
        const double w = sample_weight(weights, i);
        if (w == 0.0) continue;
        const double np = prediction.row(i).norm();
        const double nz = target.row(i).norm();
        const Eigen::RowVectorXd zhat =
            nz < kMinNorm ? Eigen::RowVectorXd::Zero(target.cols()) : Eigen::RowVectorXd(target.row(i) / nz);
        if (np < kMinNorm) {
            out.loss += w * zhat.squaredNorm() * inv_b;
            continue;
        }
        const Eigen::RowVectorXd phat = prediction.row(i) / np;
        const Eigen::RowVectorXd diff = phat - zhat;
        out.loss += w * diff.squaredNorm() * inv_b;
        // d/dp ||p/|p| - zhat||^2 = (2/|p|) (I - phat^T phat) diff
        const Eigen::RowVectorXd g = (2.0 / np) * (diff - phat * phat.dot(diff));
        out.output_grad.row(i) = g * (w * inv_b);
    }
    return out;
}

LossAndGrad loss_and_grad(const MlpModel& model, const Batch& batch, LossKind kind, const Target& target) {
    if (batch.inputs.rows() < 1) throw ShapeError("batch must contain at least one sample");
    auto fwd = forward(model, batch.inputs);
    LossValue lv;
    if (kind == LossKind::CrossEntropy) {
        const auto* labels = std::get_if<std::vector<int>>(&target);
        if (!labels) throw ShapeError("cross-entropy needs integer labels");
        lv = cross_entropy(fwd.logits, *labels, batch.weights);
    } else {
        const auto* vectors = std::get_if<Matrix>(&target);
        if (!vectors) throw ShapeError("normalized MSE needs target vectors");
        lv = normalized_mse(fwd.logits, *vectors, batch.weights);
    }
    auto back = backward(model, fwd.cache, lv.output_grad);
    return {lv.loss, std::move(back.grads)};
}

OptState OptState::for_params(const ParamStore& params, double lr, double momentum, double weight_decay) {
    OptState opt;
    opt.velocity = clone(params);
    for (std::size_t u = 0; u < opt.velocity.unit_count(); ++u) {
        auto& d = opt.velocity.unit(u).data;
        std::fill(d.begin(), d.end(), 0.0);
    }
    opt.lr = lr;
    opt.momentum = momentum;
    opt.weight_decay = weight_decay;
    return opt;
}

void sgd_step(ParamStore& params, const ParamStore& grads, OptState& opt) {
    require_congruent(params, grads, "sgd_step(grads)");
    require_congruent(params, opt.velocity, "sgd_step(velocity)");
    for (std::size_t u = 0; u < params.unit_count(); ++u) {
        auto& theta = params.unit(u).data;
        auto& v = opt.velocity.unit(u).data;
        const auto& g = grads.unit(u).data;
        for (std::size_t k = 0; k < theta.size(); ++k) {
            v[k] = opt.momentum * v[k] + g[k] + opt.weight_decay * theta[k];
            if (opt.lr != 0.0) theta[k] -= opt.lr * v[k];
        }
    }
}

double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps,
                 double warmup_factor) {
    if (total_steps <= 0) throw ConfigError("total_steps", "must be positive");
    if (step < 0 || step > total_steps) throw ConfigError("step", "must lie in [0, total_steps]");
    if (warmup_steps < 0 || warmup_steps >= total_steps) {
        throw ConfigError("warmup_steps", "must lie in [0, total_steps)");
    }
    if (!(warmup_factor >= 0.0 && warmup_factor <= 1.0)) throw ConfigError("warmup_factor", "must lie in [0, 1]");
    if (step < warmup_steps) {
        const double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
        return base_lr * (warmup_factor + (1.0 - warmup_factor) * frac);
    }
    const double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<int> argmax_rows(const Matrix& m) {
    std::vector<int> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Eigen::Index j = 0;
        m.row(i).maxCoeff(&j);
        out[static_cast<std::size_t>(i)] = static_cast<int>(j);
    }
    return out;
}

}  // namespace smoothkit::nn
