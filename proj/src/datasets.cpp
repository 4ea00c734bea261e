#include "smoothkit/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "smoothkit/errors.hpp"
#include "smoothkit/rng.hpp"

namespace smoothkit::train {

namespace {

// Fisher-Yates driven by the keyed generator, so the order does not depend on
// the standard library's shuffle implementation.
template <typename T>
void keyed_shuffle(std::vector<T>& v, KeyedRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

std::vector<std::size_t> pick_labeled(const std::vector<int>& labels, int classes, std::size_t per_class,
                                      std::uint64_t seed) {
    std::vector<std::size_t> chosen;
    KeyedRng rng(derive_seed(seed, "labeled"), 0);
    for (int c = 0; c < classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == c) members.push_back(i);
        }
        if (per_class > members.size()) {
            throw ConfigError("dataset.labeled_per_class", "exceeds the " + std::to_string(members.size()) +
                                                               " points of class " + std::to_string(c));
        }
        keyed_shuffle(members, rng);
        chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(per_class));
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

}  // namespace

std::string_view to_string(DatasetKind kind) noexcept {
    return kind == DatasetKind::TwoMoons ? "two_moons" : "blobs";
}

DatasetKind parse_dataset_kind(std::string_view name) {
    if (name == "two_moons") return DatasetKind::TwoMoons;
    if (name == "blobs") return DatasetKind::GaussianBlobs;
    throw ConfigError("dataset.kind", "expected two_moons|blobs, got '" + std::string(name) + "'");
}

SyntheticDataset make_two_moons(std::size_t n, double noise_sigma, std::size_t n_labeled_per_class,
                                std::uint64_t seed) {
    if (n == 0 || n % 2 != 0) throw ConfigError("dataset.n", "must be a positive even number");
    if (2 * n_labeled_per_class > n) throw ConfigError("dataset.labeled_per_class", "more labels than points");
    if (noise_sigma < 0.0) throw ConfigError("dataset.noise", "must be non-negative");

    SyntheticDataset ds;
    ds.kind = DatasetKind::TwoMoons;
    ds.seed = seed;
    ds.class_count = 2;
    ds.points.resize(static_cast<Eigen::Index>(n), 2);
    ds.labels.resize(n);
    const std::size_t half = n / 2;
    const double denom = half > 1 ? static_cast<double>(half - 1) : 1.0;
    KeyedRng noise(derive_seed(seed, "moons.noise"), 0);
    for (std::size_t i = 0; i < n; ++i) {
        const bool inner = i >= half;
        const double t = std::numbers::pi * static_cast<double>(inner ? i - half : i) / denom;
        double x = inner ? 1.0 - std::cos(t) : std::cos(t);
        double y = inner ? 0.5 - std::sin(t) : std::sin(t);
        if (noise_sigma > 0.0) {
            x += noise_sigma * noise.normal();
            y += noise_sigma * noise.normal();
        }
        ds.points(static_cast<Eigen::Index>(i), 0) = x;
        ds.points(static_cast<Eigen::Index>(i), 1) = y;
        ds.labels[i] = inner ? 1 : 0;
    }
    ds.labeled_indices = pick_labeled(ds.labels, 2, n_labeled_per_class, seed);
    return ds;
}

SyntheticDataset make_blobs(std::size_t n, std::size_t classes, double radius, double sigma,
                            std::size_t n_labeled_per_class, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("dataset.classes", "need at least two classes");
    if (n == 0 || n % classes != 0) throw ConfigError("dataset.n", "must be a positive multiple of the class count");
    if (n_labeled_per_class * classes > n) throw ConfigError("dataset.labeled_per_class", "more labels than points");

    SyntheticDataset ds;
    ds.kind = DatasetKind::GaussianBlobs;
    ds.seed = seed;
    ds.class_count = static_cast<int>(classes);
    ds.points.resize(static_cast<Eigen::Index>(n), 2);
    ds.labels.resize(n);
    KeyedRng noise(derive_seed(seed, "blobs.noise"), 0);
    const std::size_t per_class = n / classes;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i / per_class;
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
        ds.points(static_cast<Eigen::Index>(i), 0) = radius * std::cos(angle) + sigma * noise.normal();
        ds.points(static_cast<Eigen::Index>(i), 1) = radius * std::sin(angle) + sigma * noise.normal();
        ds.labels[i] = static_cast<int>(c);
    }
    ds.labeled_indices = pick_labeled(ds.labels, ds.class_count, n_labeled_per_class, seed);
    return ds;
}

Matrix gather_rows(const Matrix& points, std::span<const std::size_t> indices) {
    Matrix out(static_cast<Eigen::Index>(indices.size()), points.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(indices[i]));
    }
    return out;
}

std::vector<int> gather(std::span<const int> values, std::span<const std::size_t> indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(values[i]);
    return out;
}

DataSplit split_dataset(const SyntheticDataset& ds, double eval_fraction, std::uint64_t seed) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
        throw ConfigError("dataset.eval_fraction", "must lie in (0, 1)");
    }
    std::vector<bool> labeled(ds.size(), false);
    for (auto i : ds.labeled_indices) labeled[i] = true;

    KeyedRng rng(derive_seed(seed, "split"), 0);
    std::vector<bool> is_eval(ds.size(), false);
    for (int c = 0; c < ds.class_count; ++c) {
        std::vector<std::size_t> members;
        std::size_t class_size = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.labels[i] != c) continue;
            ++class_size;
            if (!labeled[i]) members.push_back(i);
        }
        const auto want = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(class_size)));
        keyed_shuffle(members, rng);
        for (std::size_t k = 0; k < std::min(want, members.size()); ++k) is_eval[members[k]] = true;
    }
    DataSplit split;
    for (std::size_t i = 0; i < ds.size(); ++i) (is_eval[i] ? split.eval : split.train).push_back(i);
    if (split.eval.empty() || split.train.empty()) throw ConfigError("dataset.eval_fraction", "produces an empty split");
    return split;
}

void AugmentPolicy::validate(std::string_view field) const {
    const std::string f(field);
    if (!(jitter_sigma >= 0.0)) throw ConfigError(f + ".sigma", "must be non-negative");
    if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw ConfigError(f + ".drop_prob", "must lie in [0, 1]");
    if (kind == Kind::Weak && drop_prob != 0.0) throw ConfigError(f + ".drop_prob", "weak policies never drop");
}

Matrix augment(const Matrix& points, const AugmentPolicy& policy, std::uint64_t seed, std::uint64_t draw_index) {
    Matrix out = points;
    if (policy.jitter_sigma == 0.0 && policy.drop_prob == 0.0) return out;
    KeyedRng rng(derive_seed(seed, "augment"), draw_index);
    const bool strong = policy.kind == AugmentPolicy::Kind::Strong;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            if (policy.jitter_sigma > 0.0) out(i, j) += policy.jitter_sigma * rng.normal();
            if (strong && policy.drop_prob > 0.0 && rng.bernoulli(policy.drop_prob)) out(i, j) = 0.0;
        }
    }
    return out;
}

}  // namespace smoothkit::train
