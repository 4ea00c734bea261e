#include "smoothkit/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "smoothkit/errors.hpp"
#include "smoothkit/rng.hpp"

namespace smoothkit::train {

namespace {

void add_into(ParamStore& acc, const ParamStore& g) {
    for (std::size_t u = 0; u < acc.unit_count(); ++u) {
        auto& a = acc.unit(u).data;
        const auto& b = g.unit(u).data;
        for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
    }
}

double preserved_fraction(const SmoothingConfig& cfg, const std::optional<MaskSample>& mask) {
    switch (cfg.method) {
        case Method::None: return 1.0;
        case Method::TMA: return 0.0;
        default: return mask ? mask->preserved_fraction() : 0.0;
    }
}

std::vector<std::int64_t> layer_dims(std::int64_t in, const std::vector<std::int64_t>& hidden, std::int64_t out) {
    std::vector<std::int64_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}

void require(bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(field, what);
}

}  // namespace

std::string_view to_string(Task task) noexcept {
    return task == Task::FixMatchLite ? "fixmatch_lite" : "byol_lite";
}

Task parse_task(std::string_view name) {
    if (name == "fixmatch_lite") return Task::FixMatchLite;
    if (name == "byol_lite") return Task::ByolLite;
    throw ConfigError("task", "expected fixmatch_lite|byol_lite, got '" + std::string(name) + "'");
}

std::string_view to_string(PseudoLabelSource source) noexcept {
    return source == PseudoLabelSource::Teacher ? "teacher" : "student";
}

PseudoLabelSource parse_pseudo_label_source(std::string_view name) {
    if (name == "teacher") return PseudoLabelSource::Teacher;
    if (name == "student") return PseudoLabelSource::Student;
    throw ConfigError("pseudo_labels_from", "expected teacher|student, got '" + std::string(name) + "'");
}

TrainRunConfig TrainRunConfig::defaults_for(Task task) {
    TrainRunConfig cfg;
    cfg.task = task;
    cfg.smoothing.method = Method::STS;
    cfg.smoothing.granularity = Granularity::LayerWise;
    if (task == Task::FixMatchLite) {
        cfg.smoothing.p = 0.5;
        cfg.smoothing.m = 0.99;
        cfg.epochs = 100;
        cfg.base_lr = 0.1;
        return cfg;
    }
    cfg.smoothing.p = 0.7;
    cfg.smoothing.m = 0.99;
    cfg.dataset.labeled_per_class = 400;
    cfg.epochs = 20;
    cfg.batch_labeled = 4;
    cfg.ratio = 8;
    cfg.batch_unlabeled = 32;
    cfg.base_lr = 0.1;
    cfg.weight_decay = 1e-4;
    cfg.warmup_epochs = 1;
    return cfg;
}

void TrainRunConfig::validate() const {
    smoothing.validate();
    require(epochs >= 0, "epochs", "must be non-negative");
    require(batch_labeled >= 1, "batch_labeled", "must be positive");
    require(ratio >= 1, "ratio", "must be at least 1");
    require(batch_unlabeled == ratio * batch_labeled, "batch_unlabeled", "must equal ratio * batch_labeled");
    require(confidence_threshold > 0.0 && confidence_threshold <= 1.0, "confidence_threshold", "must lie in (0, 1]");
    require(lambda_u >= 0.0, "lambda_u", "must be non-negative");
    require(base_lr > 0.0 && std::isfinite(base_lr), "base_lr", "must be positive");
    require(sgd_momentum >= 0.0 && sgd_momentum < 1.0, "sgd_momentum", "must lie in [0, 1)");
    require(weight_decay >= 0.0, "weight_decay", "must be non-negative");
    require(lr_schedule_epochs == 0 || lr_schedule_epochs >= epochs, "lr_schedule_epochs",
            "must be 0 or at least epochs");
    const auto schedule = lr_schedule_epochs == 0 ? epochs : lr_schedule_epochs;
    require(warmup_epochs >= 0 && (schedule == 0 || warmup_epochs < schedule), "warmup_epochs",
            "must lie in [0, schedule length)");
    require(warmup_factor >= 0.0 && warmup_factor <= 1.0, "warmup_factor", "must lie in [0, 1]");
    require(probe_size >= 1, "probe_size", "must be positive");
    require(embedding_dim >= 1, "embedding_dim", "must be positive");
    for (auto h : hidden_dims) require(h >= 1, "hidden_dims", "entries must be positive");
    require(linear_probe_steps >= 1, "linear_probe_steps", "must be positive");
    require(linear_probe_lr > 0.0, "linear_probe_lr", "must be positive");
    require(dataset.eval_fraction > 0.0 && dataset.eval_fraction < 1.0, "dataset.eval_fraction", "must lie in (0, 1)");
    weak.validate("augment.weak");
    strong.validate("augment.strong");
    byol_view.validate("augment.byol_view");
    require(weak.kind == AugmentPolicy::Kind::Weak, "augment.weak", "must be a weak policy");
    require(strong.jitter_sigma >= weak.jitter_sigma, "augment.strong.sigma", "must be >= the weak sigma");
}

PseudoLabels make_pseudo_labels(const nn::Matrix& logits, double threshold) {
    const nn::Matrix probs = nn::softmax(logits);
    PseudoLabels out;
    out.labels.resize(static_cast<std::size_t>(probs.rows()));
    out.weights.resize(static_cast<std::size_t>(probs.rows()));
    std::size_t confident = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index j = 0;
        const double top = probs.row(i).maxCoeff(&j);
        const auto k = static_cast<std::size_t>(i);
        out.labels[k] = static_cast<int>(j);
        out.weights[k] = top >= threshold ? 1.0 : 0.0;
        confident += top >= threshold ? 1 : 0;
    }
    out.rate = probs.rows() == 0 ? 0.0 : static_cast<double>(confident) / static_cast<double>(probs.rows());
    return out;
}

FixMatchStepResult fixmatch_step(nn::MlpModel& student, nn::MlpModel& teacher, nn::OptState& opt,
                                 const nn::Batch& labeled, const nn::Batch& unlabeled, const FixMatchOptions& options,
                                 const SmoothingConfig& smoothing, StepIndex step) {
    require_congruent(student.params, teacher.params, "fixmatch_step");
    const auto t = step.t;
    const nn::Matrix xl = augment(labeled.inputs, options.weak, derive_seed(options.aug_seed, "labeled.weak"), t);
    auto sup_fwd = nn::forward(student, xl);
    auto sup = nn::cross_entropy(sup_fwd.logits, labeled.labels, labeled.weights);
    ParamStore grads = nn::backward(student, sup_fwd.cache, sup.output_grad).grads;

    FixMatchStepResult result;
    result.loss_supervised = sup.loss;

    const nn::Matrix xu_weak = augment(unlabeled.inputs, options.weak, derive_seed(options.aug_seed, "unlabeled.weak"), t);
    const nn::MlpModel& labeler = options.pseudo_labels_from == PseudoLabelSource::Teacher ? teacher : student;
    const auto pseudo = make_pseudo_labels(nn::predict(labeler, xu_weak), options.confidence_threshold);
    result.pseudo_label_rate = pseudo.rate;

    if (options.lambda_u > 0.0 && pseudo.rate > 0.0) {
        const nn::Matrix xu_strong =
            augment(unlabeled.inputs, options.strong, derive_seed(options.aug_seed, "unlabeled.strong"), t);
        auto unsup_fwd = nn::forward(student, xu_strong);
        auto unsup = nn::cross_entropy(unsup_fwd.logits, pseudo.labels, pseudo.weights);
        unsup.output_grad *= options.lambda_u;
        add_into(grads, nn::backward(student, unsup_fwd.cache, unsup.output_grad).grads);
        result.loss_unsupervised = options.lambda_u * unsup.loss;
    }
    result.loss_total = result.loss_supervised + result.loss_unsupervised;

    nn::sgd_step(student, grads, opt);
    result.mask = smooth_step(smoothing, teacher.params, student.params, step);
    return result;
}

ByolStepResult byol_step(ByolOnline& online, nn::MlpModel& target, ByolOptState& opt, const nn::Batch& batch,
                         const ByolOptions& options, const SmoothingConfig& smoothing, StepIndex step) {
    require_congruent(online.encoder.params, target.params, "byol_step");
    const auto t = step.t;
    const nn::Matrix v1 = augment(batch.inputs, options.view, derive_seed(options.aug_seed, "byol.view1"), t);
    const nn::Matrix v2 = augment(batch.inputs, options.view, derive_seed(options.aug_seed, "byol.view2"), t);
    // Stop-gradient: target outputs are constants for the online update.
    const nn::Matrix z1 = nn::predict(target, v1);
    const nn::Matrix z2 = nn::predict(target, v2);

    ParamStore enc_grads;
    ParamStore pred_grads;
    double loss = 0.0;
    const auto regress = [&](const nn::Matrix& view, const nn::Matrix& goal) {
        auto enc_fwd = nn::forward(online.encoder, view);
        auto pred_fwd = nn::forward(online.predictor, enc_fwd.logits);
        auto lv = nn::normalized_mse(pred_fwd.logits, goal, batch.weights);
        loss += 0.5 * lv.loss;
        lv.output_grad *= 0.5;
        auto pred_back = nn::backward(online.predictor, pred_fwd.cache, lv.output_grad);
        auto enc_back = nn::backward(online.encoder, enc_fwd.cache, pred_back.input_grad);
        if (enc_grads.empty()) {
            enc_grads = std::move(enc_back.grads);
            pred_grads = std::move(pred_back.grads);
        } else {
            add_into(enc_grads, enc_back.grads);
            add_into(pred_grads, pred_back.grads);
        }
    };
    regress(v1, z2);
    regress(v2, z1);

    nn::sgd_step(online.encoder, enc_grads, opt.encoder);
    nn::sgd_step(online.predictor, pred_grads, opt.predictor);

    ByolStepResult result;
    result.loss = loss;
    result.mask = smooth_step(smoothing, target.params, online.encoder.params, step);
    return result;
}

double accuracy(const nn::MlpModel& model, const nn::Matrix& inputs, std::span<const int> labels) {
    if (labels.empty()) return 0.0;
    const auto pred = nn::argmax_rows(nn::predict(model, inputs));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double linear_probe(const nn::MlpModel& encoder, const SyntheticDataset& dataset, std::uint64_t seed,
                    std::int64_t steps, double lr) {
    std::vector<bool> is_labeled(dataset.size(), false);
    for (auto i : dataset.labeled_indices) is_labeled[i] = true;
    std::vector<std::size_t> held_out;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (!is_labeled[i]) held_out.push_back(i);
    }
    if (dataset.labeled_indices.empty()) throw ConfigError("linear_probe", "no labeled points to train on");
    if (held_out.empty()) throw ConfigError("linear_probe", "no held-out points to evaluate on");

    nn::Matrix train_x = nn::predict(encoder, gather_rows(dataset.points, dataset.labeled_indices));
    nn::Matrix eval_x = nn::predict(encoder, gather_rows(dataset.points, held_out));
    const auto train_y = gather(dataset.labels, dataset.labeled_indices);
    const auto eval_y = gather(dataset.labels, held_out);

    const Eigen::RowVectorXd mean = train_x.colwise().mean();
    Eigen::RowVectorXd scale =
        ((train_x.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index j = 0; j < scale.size(); ++j) scale(j) = scale(j) > 1e-12 ? 1.0 / scale(j) : 0.0;
    const auto standardize = [&](nn::Matrix& x) {
        x.rowwise() -= mean;
        x = x.array().rowwise() * scale.array();
    };
    standardize(train_x);
    standardize(eval_x);

    nn::MlpModel head = nn::mlp_init({train_x.cols(), dataset.class_count}, derive_seed(seed, "linear_probe"));
    auto opt = nn::OptState::for_params(head.params, lr, 0.9, 0.0);
    nn::Batch batch{train_x, train_y, {}};
    for (std::int64_t s = 0; s < steps; ++s) {
        auto lg = nn::loss_and_grad(head, batch, nn::LossKind::CrossEntropy, train_y);
        nn::sgd_step(head, lg.grads, opt);
    }
    return accuracy(head, eval_x, eval_y);
}

// ---- run_training ----------------------------------------------------------

namespace {

struct RunContext {
    const TrainRunConfig& cfg;
    SyntheticDataset dataset;
    DataSplit split;
    nn::Matrix eval_x;
    std::vector<int> eval_y;
    nn::Matrix probe_x;
    std::int64_t steps_per_epoch = 0;
    std::int64_t total_steps = 0;
    std::int64_t warmup_steps = 0;
    SmoothingConfig smoothing;

    explicit RunContext(const TrainRunConfig& c) : cfg(c) {
        const auto data_seed = derive_seed(cfg.seed, "dataset");
        if (cfg.dataset.kind == DatasetKind::TwoMoons) {
            dataset = make_two_moons(cfg.dataset.n, cfg.dataset.noise, cfg.dataset.labeled_per_class, data_seed);
        } else {
            dataset = make_blobs(cfg.dataset.n, cfg.dataset.classes, cfg.dataset.radius, cfg.dataset.noise,
                                 cfg.dataset.labeled_per_class, data_seed);
        }
        split = split_dataset(dataset, cfg.dataset.eval_fraction, data_seed);
        eval_x = gather_rows(dataset.points, split.eval);
        eval_y = gather(dataset.labels, split.eval);

        KeyedRng probe_rng(derive_seed(cfg.seed, "probe"), 0);
        std::vector<std::size_t> probe_idx(static_cast<std::size_t>(cfg.probe_size));
        for (auto& i : probe_idx) i = split.train[probe_rng.below(split.train.size())];
        probe_x = gather_rows(dataset.points, probe_idx);

        steps_per_epoch = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(split.train.size()) / cfg.batch_unlabeled);
        total_steps = (cfg.lr_schedule_epochs == 0 ? cfg.epochs : cfg.lr_schedule_epochs) * steps_per_epoch;
        warmup_steps = cfg.warmup_epochs * steps_per_epoch;

        smoothing = cfg.smoothing;
        smoothing.seed = mix64(derive_seed(cfg.seed, "mask") ^ cfg.smoothing.seed);
    }

    double lr_at(std::uint64_t step) const {
        if (total_steps == 0) return cfg.base_lr;
        return nn::cosine_lr(cfg.base_lr, static_cast<std::int64_t>(step) - 1, total_steps, warmup_steps,
                             cfg.warmup_factor);
    }

    std::vector<std::size_t> epoch_order(std::int64_t epoch) const {
        std::vector<std::size_t> order = split.train;
        KeyedRng rng(derive_seed(cfg.seed, "epoch.order"), static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        return order;
    }

    nn::Batch unlabeled_batch(const std::vector<std::size_t>& order, std::int64_t b) const {
        const auto first = order.begin() + b * cfg.batch_unlabeled;
        std::vector<std::size_t> idx(first, first + cfg.batch_unlabeled);
        return {gather_rows(dataset.points, idx), {}, {}};
    }
};

void check_finite(double loss, const ParamStore& params, std::uint64_t step) {
    if (!std::isfinite(loss)) throw DivergenceError(step, "loss is " + format_double(loss));
    if (!params.all_finite()) throw DivergenceError(step, "student parameters are non-finite");
}

void close_epoch(MetricsRow& row, std::vector<diag::EpochSnapshot>& snaps, std::int64_t epoch,
                 const ParamStore& teacher, nn::Matrix probe_outputs, double acc_student, double acc_teacher) {
    snaps.push_back({epoch, teacher, std::move(probe_outputs)});
    if (snaps.size() >= 2) {
        const auto& prev = snaps[snaps.size() - 2];
        const auto& cur = snaps.back();
        row.teacher_param_mse = mse(cur.teacher_params, prev.teacher_params);
        row.teacher_signal_mse = diag::matrix_mse(cur.probe_outputs, prev.probe_outputs);
    }
    row.eval_accuracy_student = acc_student;
    row.eval_accuracy_teacher = acc_teacher;
}

TrainOutcome run_fixmatch(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto dims = layer_dims(2, cfg.hidden_dims, ctx.dataset.class_count);
    nn::MlpModel student = nn::mlp_init(dims, derive_seed(cfg.seed, "student"));
    nn::MlpModel teacher{student.layer_dims, clone(student.params)};
    auto opt = nn::OptState::for_params(student.params, cfg.base_lr, cfg.sgd_momentum, cfg.weight_decay);

    FixMatchOptions options;
    options.confidence_threshold = cfg.confidence_threshold;
    options.lambda_u = cfg.lambda_u;
    options.weak = cfg.weak;
    options.strong = cfg.strong;
    options.pseudo_labels_from = cfg.pseudo_labels_from;
    options.aug_seed = derive_seed(cfg.seed, "augment");

    const auto& labeled_pool = ctx.dataset.labeled_indices;
    TrainOutcome out;
    out.steps_per_epoch = ctx.steps_per_epoch;

    MetricsRow initial;
    initial.lr = ctx.lr_at(1);
    close_epoch(initial, out.snapshots, 0, teacher.params, nn::predict(teacher, ctx.probe_x),
                accuracy(student, ctx.eval_x, ctx.eval_y), accuracy(teacher, ctx.eval_x, ctx.eval_y));
    out.log.rows.push_back(initial);

    std::uint64_t step = 0;
    for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = ctx.epoch_order(epoch);
        for (std::int64_t b = 0; b < ctx.steps_per_epoch; ++b) {
            ++step;
            opt.lr = ctx.lr_at(step);
            const nn::Batch unlabeled = ctx.unlabeled_batch(order, b);

            KeyedRng pick(derive_seed(cfg.seed, "labeled.batch"), step);
            std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch_labeled));
            for (auto& i : idx) i = labeled_pool[pick.below(labeled_pool.size())];
            const nn::Batch labeled{gather_rows(ctx.dataset.points, idx), gather(ctx.dataset.labels, idx), {}};

            const auto res = fixmatch_step(student, teacher, opt, labeled, unlabeled, options, ctx.smoothing,
                                           StepIndex{step});
            check_finite(res.loss_total, student.params, step);

            MetricsRow row;
            row.step = step;
            row.epoch = epoch;
            row.lr = opt.lr;
            row.loss_total = res.loss_total;
            row.loss_supervised = res.loss_supervised;
            row.loss_unsupervised = res.loss_unsupervised;
            row.pseudo_label_rate = res.pseudo_label_rate;
            row.preserved_fraction = preserved_fraction(ctx.smoothing, res.mask);
            if (b + 1 == ctx.steps_per_epoch) {
                close_epoch(row, out.snapshots, epoch, teacher.params, nn::predict(teacher, ctx.probe_x),
                            accuracy(student, ctx.eval_x, ctx.eval_y), accuracy(teacher, ctx.eval_x, ctx.eval_y));
            }
            out.log.rows.push_back(row);
        }
    }
    out.final_teacher = std::move(teacher.params);
    return out;
}

TrainOutcome run_byol(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    ByolOnline online;
    online.encoder = nn::mlp_init(layer_dims(2, cfg.hidden_dims, cfg.embedding_dim), derive_seed(cfg.seed, "encoder"));
    online.predictor = nn::mlp_init({cfg.embedding_dim, cfg.embedding_dim, cfg.embedding_dim},
                                    derive_seed(cfg.seed, "predictor"));
    nn::MlpModel target{online.encoder.layer_dims, clone(online.encoder.params)};
    ByolOptState opt{nn::OptState::for_params(online.encoder.params, cfg.base_lr, cfg.sgd_momentum, cfg.weight_decay),
                     nn::OptState::for_params(online.predictor.params, cfg.base_lr, cfg.sgd_momentum,
                                              cfg.weight_decay)};
    const ByolOptions options{cfg.byol_view, derive_seed(cfg.seed, "augment")};
    const auto probe_seed = derive_seed(cfg.seed, "probe.classifier");
    const auto probe = [&](const nn::MlpModel& enc) {
        return linear_probe(enc, ctx.dataset, probe_seed, cfg.linear_probe_steps, cfg.linear_probe_lr);
    };

    TrainOutcome out;
    out.steps_per_epoch = ctx.steps_per_epoch;
    MetricsRow initial;
    initial.lr = ctx.lr_at(1);
    close_epoch(initial, out.snapshots, 0, target.params, nn::predict(target, ctx.probe_x), probe(online.encoder),
                probe(target));
    out.log.rows.push_back(initial);

    std::uint64_t step = 0;
    for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = ctx.epoch_order(epoch);
        for (std::int64_t b = 0; b < ctx.steps_per_epoch; ++b) {
            ++step;
            opt.set_lr(ctx.lr_at(step));
            const auto res =
                byol_step(online, target, opt, ctx.unlabeled_batch(order, b), options, ctx.smoothing, StepIndex{step});
            check_finite(res.loss, online.encoder.params, step);

            MetricsRow row;
            row.step = step;
            row.epoch = epoch;
            row.lr = opt.encoder.lr;
            row.loss_total = res.loss;
            row.loss_unsupervised = res.loss;
            row.preserved_fraction = preserved_fraction(ctx.smoothing, res.mask);
            if (b + 1 == ctx.steps_per_epoch) {
                close_epoch(row, out.snapshots, epoch, target.params, nn::predict(target, ctx.probe_x),
                            probe(online.encoder), probe(target));
            }
            out.log.rows.push_back(row);
        }
    }
    out.final_teacher = std::move(target.params);
    return out;
}

}  // namespace

TrainOutcome run_training(const TrainRunConfig& cfg) {
    cfg.validate();
    const RunContext ctx(cfg);
    return cfg.task == Task::FixMatchLite ? run_fixmatch(ctx) : run_byol(ctx);
}

}  // namespace smoothkit::train
