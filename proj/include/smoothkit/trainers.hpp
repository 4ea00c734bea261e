#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "smoothkit/datasets.hpp"
#include "smoothkit/diagnostics.hpp"
#include "smoothkit/metrics.hpp"
#include "smoothkit/smoothing.hpp"
#include "smoothkit/tinynn.hpp"

namespace smoothkit::train {

enum class Task { FixMatchLite, ByolLite };
enum class PseudoLabelSource { Teacher, Student };

[[nodiscard]] std::string_view to_string(Task task) noexcept;
[[nodiscard]] Task parse_task(std::string_view name);
[[nodiscard]] std::string_view to_string(PseudoLabelSource source) noexcept;
[[nodiscard]] PseudoLabelSource parse_pseudo_label_source(std::string_view name);

struct DatasetConfig {
    DatasetKind kind = DatasetKind::TwoMoons;
    std::size_t n = 1000;
    double noise = 0.1;
    std::size_t labeled_per_class = 4;
    double eval_fraction = 0.2;
    std::size_t classes = 2;   // blobs only
    double radius = 2.0;       // blobs only
};

struct TrainRunConfig {
    Task task = Task::FixMatchLite;
    SmoothingConfig smoothing;
    DatasetConfig dataset;
    std::int64_t epochs = 100;
    std::int64_t batch_labeled = 8;
    std::int64_t ratio = 7;
    std::int64_t batch_unlabeled = 56;
    double confidence_threshold = 0.95;
    double lambda_u = 1.0;
    double base_lr = 0.1;
    double sgd_momentum = 0.9;
    double weight_decay = 5e-4;
    std::int64_t warmup_epochs = 0;
    /// Length of the cosine schedule in epochs; 0 means `epochs`. A longer
    /// schedule trains only its first `epochs` epochs.
    std::int64_t lr_schedule_epochs = 0;
    double warmup_factor = 0.001;
    std::int64_t probe_size = 256;
    std::uint64_t seed = 0;
    PseudoLabelSource pseudo_labels_from = PseudoLabelSource::Teacher;
    std::vector<std::int64_t> hidden_dims = {32, 32};
    std::int64_t embedding_dim = 8;  // BYOL-lite encoder output width
    AugmentPolicy weak = AugmentPolicy::weak(0.05);
    AugmentPolicy strong = AugmentPolicy::strong(0.15, 0.0);
    AugmentPolicy byol_view = AugmentPolicy::weak(0.1);
    std::int64_t linear_probe_steps = 200;
    double linear_probe_lr = 0.5;

    /// Documented defaults per task (see README).
    [[nodiscard]] static TrainRunConfig defaults_for(Task task);
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

// ---- FixMatch-lite ---------------------------------------------------------

struct PseudoLabels {
    std::vector<int> labels;
    std::vector<double> weights;  // 1 where max softmax >= threshold, else 0
    double rate = 0.0;            // confident fraction
};

[[nodiscard]] PseudoLabels make_pseudo_labels(const nn::Matrix& logits, double threshold);

struct FixMatchOptions {
    double confidence_threshold = 0.95;
    double lambda_u = 1.0;
    AugmentPolicy weak = AugmentPolicy::weak(0.05);
    AugmentPolicy strong = AugmentPolicy::strong(0.15, 0.0);
    PseudoLabelSource pseudo_labels_from = PseudoLabelSource::Teacher;
    std::uint64_t aug_seed = 0;
};

struct FixMatchStepResult {
    double loss_total = 0.0;
    double loss_supervised = 0.0;
    double loss_unsupervised = 0.0;  // already scaled by lambda_u
    double pseudo_label_rate = 0.0;
    std::optional<MaskSample> mask;
};

/// One FixMatch-lite update: supervised CE on the weakly augmented labeled
/// batch, hard pseudo-labels from the weakly augmented unlabeled batch, CE of the
/// student on strongly augmented unlabeled points weighted by the confidence
/// mask, one SGD step on the student (opt.lr is used as is), then one
/// smooth_step of the teacher.
FixMatchStepResult fixmatch_step(nn::MlpModel& student, nn::MlpModel& teacher, nn::OptState& opt,
                                 const nn::Batch& labeled, const nn::Batch& unlabeled, const FixMatchOptions& options,
                                 const SmoothingConfig& smoothing, StepIndex step);

// ---- BYOL-lite -------------------------------------------------------------

struct ByolOnline {
    nn::MlpModel encoder;
    nn::MlpModel predictor;  // never smoothed into the target
};

struct ByolOptState {
    nn::OptState encoder;
    nn::OptState predictor;

    void set_lr(double lr) noexcept {
        encoder.lr = lr;
        predictor.lr = lr;
    }
};

struct ByolOptions {
    AugmentPolicy view = AugmentPolicy::weak(0.1);
    std::uint64_t aug_seed = 0;
};

struct ByolStepResult {
    double loss = 0.0;  // mean of the two symmetric terms, in [0, 4]
    std::optional<MaskSample> mask;
};

/// Symmetric normalized-MSE regression of predictor(encoder(v1)) onto target(v2)
/// and of predictor(encoder(v2)) onto target(v1). The target only enters through
/// its forward outputs; it changes solely through the smooth_step that follows
/// the SGD update of the online network.
ByolStepResult byol_step(ByolOnline& online, nn::MlpModel& target, ByolOptState& opt, const nn::Batch& batch,
                         const ByolOptions& options, const SmoothingConfig& smoothing, StepIndex step);

/// Trains a fresh softmax-regression classifier (full-batch SGD with momentum)
/// on standardized encoder features of the labeled points and returns its
/// accuracy on the remaining points. The encoder is only read.
[[nodiscard]] double linear_probe(const nn::MlpModel& encoder, const SyntheticDataset& dataset, std::uint64_t seed,
                                  std::int64_t steps = 200, double lr = 0.5);

// ---- full runs -------------------------------------------------------------

struct TrainOutcome {
    MetricsLog log;
    ParamStore final_teacher;
    std::vector<diag::EpochSnapshot> snapshots;  // epoch 0 .. epochs
    std::int64_t steps_per_epoch = 0;
};

/// Full deterministic run. Throws DivergenceError carrying the step index when
/// a loss or the student parameters become non-finite.
[[nodiscard]] TrainOutcome run_training(const TrainRunConfig& cfg);

/// Classification accuracy of argmax(model(x)) against labels.
[[nodiscard]] double accuracy(const nn::MlpModel& model, const nn::Matrix& inputs, std::span<const int> labels);

}  // namespace smoothkit::train
