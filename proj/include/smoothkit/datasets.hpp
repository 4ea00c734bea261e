#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "smoothkit/tinynn.hpp"

namespace smoothkit::train {

using nn::Matrix;

enum class DatasetKind { TwoMoons, GaussianBlobs };

[[nodiscard]] std::string_view to_string(DatasetKind kind) noexcept;
[[nodiscard]] DatasetKind parse_dataset_kind(std::string_view name);

struct SyntheticDataset {
    Matrix points;  // [N, 2]
    std::vector<int> labels;
    std::vector<std::size_t> labeled_indices;  // sorted
    std::uint64_t seed = 0;
    DatasetKind kind = DatasetKind::TwoMoons;
    int class_count = 2;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
};

/// Two interleaved half-circles: class 0 on the unit circle centred at (0, 0)
/// (upper half), class 1 on the unit circle centred at (1, 0.5) (lower half),
/// plus isotropic Gaussian noise. Points are in generation order (class 0
/// first); n_labeled_per_class indices per class are drawn without replacement.
/// Throws ConfigError for odd n or oversubscribed labels.
[[nodiscard]] SyntheticDataset make_two_moons(std::size_t n, double noise_sigma, std::size_t n_labeled_per_class,
                                              std::uint64_t seed);

/// `classes` isotropic Gaussian blobs with centres evenly spaced on a circle of
/// radius `radius`; n / classes points per class.
[[nodiscard]] SyntheticDataset make_blobs(std::size_t n, std::size_t classes, double radius, double sigma,
                                          std::size_t n_labeled_per_class, std::uint64_t seed);

/// Rows of `points` selected by `indices`.
[[nodiscard]] Matrix gather_rows(const Matrix& points, std::span<const std::size_t> indices);
[[nodiscard]] std::vector<int> gather(std::span<const int> values, std::span<const std::size_t> indices);

/// Training pool / held-out evaluation split. Evaluation points are drawn
/// (stratified by class) from the unlabeled points only.
struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};

[[nodiscard]] DataSplit split_dataset(const SyntheticDataset& ds, double eval_fraction, std::uint64_t seed);

struct AugmentPolicy {
    enum class Kind { Weak, Strong };

    Kind kind = Kind::Weak;
    double jitter_sigma = 0.0;
    double drop_prob = 0.0;  // Strong only

    static AugmentPolicy weak(double sigma) { return {Kind::Weak, sigma, 0.0}; }
    static AugmentPolicy strong(double sigma, double drop) { return {Kind::Strong, sigma, drop}; }

    /// Throws ConfigError on negative sigma, drop outside [0,1], or a Weak
    /// policy with non-zero drop.
    void validate(std::string_view field) const;
};

/// x' = x + N(0, sigma^2) per coordinate; Strong additionally zeroes each
/// coordinate independently with probability drop_prob. Deterministic per
/// (seed, draw_index).
[[nodiscard]] Matrix augment(const Matrix& points, const AugmentPolicy& policy, std::uint64_t seed,
                             std::uint64_t draw_index);

}  // namespace smoothkit::train
