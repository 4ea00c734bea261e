#include "smoothkit/smoothing.hpp"

#include <algorithm>
#include <cmath>

#include "smoothkit/errors.hpp"
#include "smoothkit/rng.hpp"

namespace smoothkit {

namespace {

void check_probability(double value, const char* field) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw ConfigError(field, "must lie in [0, 1], got " + std::to_string(value));
    }
}

void check_mask(const MaskSample& mask, std::span<const SlotRef> slots, const ParamStore& store) {
    if (mask.size() != slots.size()) {
        throw MaskError("mask has " + std::to_string(mask.size()) + " flags for " + std::to_string(slots.size()) +
                        " slots");
    }
    for (const auto& slot : slots) {
        if (slot.unit_index >= store.unit_count() ||
            (slot.count > 0 && slot.offset + (slot.count - 1) * slot.stride >= store.unit(slot.unit_index).size())) {
            throw MaskError("slot reference out of range for store");
        }
    }
}

// Shared by SE and STS: flag 0 slots are blended with momentum m.
void apply_masked(ParamStore& teacher, const ParamStore& student, const MaskSample& mask,
                  std::span<const SlotRef> slots, double m) {
    require_congruent(teacher, student, "smoothing");
    check_mask(mask, slots, teacher);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (mask.flags[i]) continue;
        const auto& slot = slots[i];
        auto& t = teacher.unit(slot.unit_index).data;
        const auto& s = student.unit(slot.unit_index).data;
        slot.for_each_index([&](std::size_t k) { t[k] = blend(t[k], s[k], m); });
    }
}

}  // namespace

std::string_view to_string(Method method) noexcept {
    switch (method) {
        case Method::None: return "none";
        case Method::TMA: return "tma";
        case Method::SE: return "se";
        case Method::STS: return "sts";
    }
    return "none";
}

Method parse_method(std::string_view name) {
    if (name == "none") return Method::None;
    if (name == "tma") return Method::TMA;
    if (name == "se") return Method::SE;
    if (name == "sts") return Method::STS;
    throw ConfigError("smoothing.method", "expected one of none|tma|se|sts, got '" + std::string(name) + "'");
}

void SmoothingConfig::validate() const {
    check_probability(p, "smoothing.p");
    check_probability(m, "smoothing.m");
}

std::size_t MaskSample::preserved_count() const noexcept {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

double MaskSample::preserved_fraction() const noexcept {
    return flags.empty() ? 0.0 : static_cast<double>(preserved_count()) / static_cast<double>(flags.size());
}

std::string MaskSample::to_hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve((flags.size() + 7) / 8 * 2);
    for (std::size_t byte = 0; byte * 8 < flags.size(); ++byte) {
        unsigned value = 0;
        for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < flags.size(); ++bit) {
            if (flags[byte * 8 + bit]) value |= 1U << bit;
        }
        out.push_back(digits[value >> 4]);
        out.push_back(digits[value & 0xF]);
    }
    return out;
}

MaskSample sample_mask(std::size_t slot_count, double p, std::uint64_t seed, std::uint64_t draw_index) {
    check_probability(p, "smoothing.p");
    if (slot_count == 0) throw ConfigError("slot_count", "must be at least 1");
    MaskSample mask;
    mask.seed_used = seed;
    mask.draw_index = draw_index;
    mask.flags.resize(slot_count);
    KeyedRng rng(seed, draw_index);
    for (auto& f : mask.flags) f = rng.bernoulli(p) ? 1 : 0;
    return mask;
}

void apply_tma(ParamStore& teacher, const ParamStore& student, double m) {
    check_probability(m, "smoothing.m");
    require_congruent(teacher, student, "apply_tma");
    for (std::size_t u = 0; u < teacher.unit_count(); ++u) {
        auto& t = teacher.unit(u).data;
        const auto& s = student.unit(u).data;
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = blend(t[k], s[k], m);
    }
}

void apply_se(ParamStore& teacher, const ParamStore& student, const MaskSample& mask,
              std::span<const SlotRef> slots) {
    apply_masked(teacher, student, mask, slots, 0.0);
}

void apply_sts(ParamStore& teacher, const ParamStore& student, const MaskSample& mask,
               std::span<const SlotRef> slots, double m) {
    check_probability(m, "smoothing.m");
    apply_masked(teacher, student, mask, slots, m);
}

std::optional<MaskSample> smooth_step(const SmoothingConfig& cfg, ParamStore& teacher, const ParamStore& student,
                                      StepIndex step) {
    cfg.validate();
    require_congruent(teacher, student, "smooth_step");
    const auto skip = [&](std::size_t unit_index) {
        return !cfg.include_buffers && teacher.unit(unit_index).kind == UnitKind::Buffer;
    };

    switch (cfg.method) {
        case Method::None:
            return std::nullopt;
        case Method::TMA:
            for (std::size_t u = 0; u < teacher.unit_count(); ++u) {
                if (skip(u)) continue;
                auto& t = teacher.unit(u).data;
                const auto& s = student.unit(u).data;
                for (std::size_t k = 0; k < t.size(); ++k) t[k] = blend(t[k], s[k], cfg.m);
            }
            return std::nullopt;
        case Method::SE:
        case Method::STS: {
            auto slots = enumerate_slots(teacher, cfg.granularity);
            std::erase_if(slots, [&](const SlotRef& s) { return skip(s.unit_index); });
            if (slots.empty()) return MaskSample{{}, cfg.seed, step.t};
            auto mask = sample_mask(slots.size(), cfg.p, cfg.seed, step.t);
            if (cfg.method == Method::SE) {
                apply_se(teacher, student, mask, slots);
            } else {
                apply_sts(teacher, student, mask, slots, cfg.m);
            }
            return mask;
        }
    }
    return std::nullopt;
}

double effective_momentum(double p, double m) {
    check_probability(p, "p");
    check_probability(m, "m");
    return p + (1.0 - p) * m;
}

}  // namespace smoothkit
