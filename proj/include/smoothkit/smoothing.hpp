#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smoothkit/param_store.hpp"

namespace smoothkit {

/// Teacher update rule.
///   None: teacher never changes.
///   TMA:  theta_T <- m * theta_T + (1 - m) * theta_S on every scalar.
///   SE:   each slot is kept with probability p, otherwise overwritten by the student slot.
///   STS:  each slot is kept with probability p, otherwise moved by a TMA step with momentum m.
enum class Method { None, TMA, SE, STS };

[[nodiscard]] std::string_view to_string(Method method) noexcept;
[[nodiscard]] Method parse_method(std::string_view name);

struct SmoothingConfig {
    Method method = Method::None;
    double p = 0.5;  // preserving probability
    double m = 0.99;
    Granularity granularity = Granularity::LayerWise;
    std::uint64_t seed = 0;
    bool include_buffers = true;

    /// Throws ConfigError("smoothing.p" / "smoothing.m") on out-of-range values.
    void validate() const;
};

/// One Bernoulli(p) draw per slot; flag 1 keeps the teacher slot, 0 updates it.
struct MaskSample {
    std::vector<std::uint8_t> flags;
    std::uint64_t seed_used = 0;
    std::uint64_t draw_index = 0;

    [[nodiscard]] std::size_t size() const noexcept { return flags.size(); }
    [[nodiscard]] std::size_t preserved_count() const noexcept;
    [[nodiscard]] double preserved_fraction() const noexcept;
    /// Flags packed little-endian into bytes (slot k -> bit k % 8 of byte k / 8),
    /// rendered as lowercase hex.
    [[nodiscard]] std::string to_hex() const;

    friend bool operator==(const MaskSample&, const MaskSample&) = default;
};

struct StepIndex {
    std::uint64_t t = 0;
};

/// Deterministic in (seed, draw_index); distinct draw indices are independent
/// streams. Throws ConfigError if p is outside [0, 1] or slot_count is 0.
[[nodiscard]] MaskSample sample_mask(std::size_t slot_count, double p, std::uint64_t seed,
                                     std::uint64_t draw_index);

/// The per-scalar blend used by every rule. Endpoints are exact: m == 0 yields
/// the student value and m == 1 the teacher value, bit for bit.
[[nodiscard]] inline double blend(double teacher, double student, double m) noexcept {
    if (m == 0.0) return student;
    if (m == 1.0) return teacher;
    return m * teacher + (1.0 - m) * student;
}

void apply_tma(ParamStore& teacher, const ParamStore& student, double m);
void apply_se(ParamStore& teacher, const ParamStore& student, const MaskSample& mask,
              std::span<const SlotRef> slots);
void apply_sts(ParamStore& teacher, const ParamStore& student, const MaskSample& mask,
               std::span<const SlotRef> slots, double m);

/// One teacher update. SE/STS draw a fresh mask with draw_index = step.t and
/// return it; None and TMA return nullopt. With include_buffers == false,
/// buffer units are neither masked nor averaged.
std::optional<MaskSample> smooth_step(const SmoothingConfig& cfg, ParamStore& teacher,
                                      const ParamStore& student, StepIndex step);

/// Momentum of the TMA step equal in expectation to one STS step: p + (1 - p) m.
[[nodiscard]] double effective_momentum(double p, double m);

}  // namespace smoothkit
