#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "smoothkit/param_store.hpp"

namespace smoothkit::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fully-connected network: affine layers with ReLU between them and an
/// affine-only output layer. Parameters live in a ParamStore as
/// "layer{k}.weight" [d_k, d_{k+1}] followed by "layer{k}.bias" [d_{k+1}].
struct MlpModel {
    std::vector<std::int64_t> layer_dims;
    ParamStore params;

    [[nodiscard]] std::size_t layer_count() const noexcept { return layer_dims.size() - 1; }
    [[nodiscard]] std::int64_t input_dim() const noexcept { return layer_dims.front(); }
    [[nodiscard]] std::int64_t output_dim() const noexcept { return layer_dims.back(); }

    [[nodiscard]] Eigen::Map<const Matrix> weight(std::size_t layer) const;
    [[nodiscard]] Eigen::Map<Matrix> weight(std::size_t layer);
    [[nodiscard]] Eigen::Map<const Eigen::RowVectorXd> bias(std::size_t layer) const;
    [[nodiscard]] Eigen::Map<Eigen::RowVectorXd> bias(std::size_t layer);
};

/// Weights ~ uniform(+-1/sqrt(d_in)), biases zero. Throws ConstructionError for
/// fewer than two dims or a non-positive dim.
[[nodiscard]] MlpModel mlp_init(std::span<const std::int64_t> layer_dims, std::uint64_t seed);
[[nodiscard]] MlpModel mlp_init(std::initializer_list<std::int64_t> layer_dims, std::uint64_t seed);

/// Layer inputs (post-activation); activations[0] is the network input.
struct ForwardCache {
    std::vector<Matrix> activations;
};

struct ForwardResult {
    Matrix logits;
    ForwardCache cache;
};

/// Throws ShapeError on an input width mismatch.
[[nodiscard]] ForwardResult forward(const MlpModel& model, const Matrix& inputs);
/// Forward pass without keeping the cache.
[[nodiscard]] Matrix predict(const MlpModel& model, const Matrix& inputs);

struct BackwardResult {
    ParamStore grads;
    Matrix input_grad;
};

/// Backpropagates dL/dlogits through the cached forward pass.
[[nodiscard]] BackwardResult backward(const MlpModel& model, const ForwardCache& cache, const Matrix& output_grad);

enum class LossKind { CrossEntropy, NormalizedMse };

struct LossValue {
    double loss = 0.0;
    Matrix output_grad;
};

/// Row-wise softmax.
[[nodiscard]] Matrix softmax(const Matrix& logits);

/// Softmax cross-entropy, (1/B) * sum_i w_i * CE_i. Empty `weights` means all ones.
[[nodiscard]] LossValue cross_entropy(const Matrix& logits, std::span<const int> labels,
                                      std::span<const double> weights = {});

/// (1/B) * sum_i w_i * || p_i/|p_i| - z_i/|z_i| ||^2. Rows whose norm is below
/// 1e-12 are normalized to zero and receive no gradient.
[[nodiscard]] LossValue normalized_mse(const Matrix& prediction, const Matrix& target,
                                       std::span<const double> weights = {});

struct Batch {
    Matrix inputs;
    std::vector<int> labels;      // optional
    std::vector<double> weights;  // optional, per-sample
};

using Target = std::variant<std::vector<int>, Matrix>;

struct LossAndGrad {
    double loss = 0.0;
    ParamStore grads;
};

/// CrossEntropy expects integer labels, NormalizedMse a target matrix shaped
/// like the logits. Throws ShapeError on mismatch.
[[nodiscard]] LossAndGrad loss_and_grad(const MlpModel& model, const Batch& batch, LossKind kind,
                                        const Target& target);

struct OptState {
    ParamStore velocity;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;

    [[nodiscard]] static OptState for_params(const ParamStore& params, double lr, double momentum,
                                             double weight_decay);
};

/// v <- momentum * v + grad + weight_decay * theta;  theta <- theta - lr * v.
void sgd_step(ParamStore& params, const ParamStore& grads, OptState& opt);
inline void sgd_step(MlpModel& model, const ParamStore& grads, OptState& opt) { sgd_step(model.params, grads, opt); }

/// Linear warmup from warmup_factor * base_lr to base_lr over warmup_steps,
/// then half-cosine decay to zero at total_steps. Throws ConfigError.
[[nodiscard]] double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps,
                               std::int64_t warmup_steps, double warmup_factor);

/// argmax per row.
[[nodiscard]] std::vector<int> argmax_rows(const Matrix& m);

}  // namespace smoothkit::nn
