#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smoothkit {

using Shape = std::vector<std::int64_t>;

enum class UnitKind { Weight, Bias, Buffer };

[[nodiscard]] std::string_view to_string(UnitKind kind) noexcept;
/// Throws FormatError on an unknown name.
[[nodiscard]] UnitKind parse_unit_kind(std::string_view name);

struct UnitSpec {
    std::string name;
    Shape shape;
    UnitKind kind = UnitKind::Weight;
};

/// One named, shaped parameter array (row-major flat storage).
struct Unit {
    std::string name;
    Shape shape;
    UnitKind kind = UnitKind::Weight;
    std::vector<double> data;

    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }

    friend bool operator==(const Unit&, const Unit&) = default;
};

/// Initialization rule applied to weight units. Bias and buffer units always
/// start at zero.
struct InitRule {
    enum class Kind { Zeros, Uniform, FanIn };

    Kind kind = Kind::Zeros;
    double bound = 0.0;  // Uniform only

    static InitRule zeros() { return {Kind::Zeros, 0.0}; }
    static InitRule uniform(double bound) { return {Kind::Uniform, bound}; }
    /// uniform(+-1/sqrt(d_in)) with d_in the first dimension of the unit.
    static InitRule fan_in() { return {Kind::FanIn, 0.0}; }
};

/// Ordered collection of named parameter units. Holds either a teacher or a
/// student; all cross-store operations require the two stores to be congruent
/// (identical name/shape/kind sequences).
class ParamStore {
public:
    ParamStore() = default;

    /// Appends a unit. Throws ConstructionError on duplicate name, empty shape,
    /// non-positive dimension, or data length not matching the shape.
    void add_unit(UnitSpec spec, std::vector<double> data);
    /// Appends a zero-filled unit.
    void add_unit(UnitSpec spec);

    [[nodiscard]] const std::vector<Unit>& units() const noexcept { return units_; }
    [[nodiscard]] Unit& unit(std::size_t index) { return units_.at(index); }
    [[nodiscard]] const Unit& unit(std::size_t index) const { return units_.at(index); }
    [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const noexcept;
    /// Throws std::out_of_range if absent.
    [[nodiscard]] Unit& at(std::string_view name);
    [[nodiscard]] const Unit& at(std::string_view name) const;

    [[nodiscard]] std::size_t unit_count() const noexcept { return units_.size(); }
    [[nodiscard]] std::size_t scalar_count() const noexcept;
    [[nodiscard]] bool empty() const noexcept { return units_.empty(); }

    [[nodiscard]] bool congruent_with(const ParamStore& other) const noexcept;
    [[nodiscard]] std::vector<double> flatten() const;
    [[nodiscard]] bool all_finite() const noexcept;

    friend bool operator==(const ParamStore&, const ParamStore&) = default;

private:
    std::vector<Unit> units_;
};

/// Throws CongruenceError mentioning `context` when the stores differ in layout.
void require_congruent(const ParamStore& a, const ParamStore& b, std::string_view context);

/// True when both stores are congruent and every scalar has the same bit pattern.
[[nodiscard]] bool bitwise_equal(const ParamStore& a, const ParamStore& b) noexcept;

[[nodiscard]] ParamStore new_store(std::span<const UnitSpec> spec, const InitRule& init,
                                   std::uint64_t seed);

/// Independent deep copy; the teacher starts as clone(student).
[[nodiscard]] inline ParamStore clone(const ParamStore& store) { return store; }

enum class Granularity { LayerWise, ChannelWise, NeuronWise };

[[nodiscard]] std::string_view to_string(Granularity g) noexcept;
/// Accepts "lw"/"cw"/"nw" and the long names; throws ConfigError otherwise.
[[nodiscard]] Granularity parse_granularity(std::string_view name);

/// A replaceable fragment: `count` scalars of unit `unit_index` at flat
/// positions offset, offset + stride, ..., offset + (count - 1) * stride.
struct SlotRef {
    std::size_t unit_index = 0;
    std::size_t offset = 0;
    std::size_t count = 0;
    std::size_t stride = 1;

    template <typename F>
    void for_each_index(F&& f) const {
        for (std::size_t k = 0, idx = offset; k < count; ++k, idx += stride) f(idx);
    }

    friend bool operator==(const SlotRef&, const SlotRef&) = default;
};

/// Partition of every scalar in the store into slots at the given granularity.
/// Order: unit order, then index order. Channel-wise slices units of rank >= 2
/// along the last (C_out) dimension; rank-1 units fall back to one slot per
/// element.
[[nodiscard]] std::vector<SlotRef> enumerate_slots(const ParamStore& store, Granularity g);

/// Mean of squared element-wise differences over all scalars. Zero for empty
/// stores. Throws CongruenceError.
[[nodiscard]] double mse(const ParamStore& a, const ParamStore& b);

/// JSON snapshot: {"version":1,"units":[{"name","shape","kind","data"}]}.
/// Finite values are written in shortest round-trip form; non-finite values as
/// the strings "nan", "inf", "-inf".
[[nodiscard]] std::string snapshot_to_json(const ParamStore& store);
/// Throws FormatError on any malformed content.
[[nodiscard]] ParamStore snapshot_from_json(std::string_view text);

/// Atomic write (temp file + rename). Throws IoError.
void save_snapshot(const ParamStore& store, const std::filesystem::path& path);
/// Throws IoError if unreadable, FormatError if malformed.
[[nodiscard]] ParamStore load_snapshot(const std::filesystem::path& path);

/// Writes `contents` to `path` via a temporary sibling and rename. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
[[nodiscard]] std::string read_file(const std::filesystem::path& path);

}  // namespace smoothkit
