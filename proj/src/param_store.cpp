#include "smoothkit/param_store.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "smoothkit/errors.hpp"
#include "smoothkit/rng.hpp"

namespace smoothkit {

namespace {

std::size_t shape_product(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

}  // namespace

std::string_view to_string(UnitKind kind) noexcept {
    switch (kind) {
        case UnitKind::Weight: return "weight";
        case UnitKind::Bias: return "bias";
        case UnitKind::Buffer: return "buffer";
    }
    return "weight";
}

UnitKind parse_unit_kind(std::string_view name) {
    if (name == "weight") return UnitKind::Weight;
    if (name == "bias") return UnitKind::Bias;
    if (name == "buffer") return UnitKind::Buffer;
    throw FormatError("unknown unit kind '" + std::string(name) + "'");
}

void ParamStore::add_unit(UnitSpec spec, std::vector<double> data) {
    if (spec.shape.empty()) throw ConstructionError("unit '" + spec.name + "' has an empty shape");
    for (auto d : spec.shape) {
        if (d <= 0) {
            throw ConstructionError("unit '" + spec.name + "' has non-positive dimension in shape " +
                                    shape_string(spec.shape));
        }
    }
    if (find(spec.name)) throw ConstructionError("duplicate unit name '" + spec.name + "'");
    if (data.size() != shape_product(spec.shape)) {
        throw ConstructionError("unit '" + spec.name + "' data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_string(spec.shape));
    }
    units_.push_back(Unit{std::move(spec.name), std::move(spec.shape), spec.kind, std::move(data)});
}

void ParamStore::add_unit(UnitSpec spec) {
    for (auto d : spec.shape) {
        if (d <= 0) {
            throw ConstructionError("unit '" + spec.name + "' has non-positive dimension in shape " +
                                    shape_string(spec.shape));
        }
    }
    const std::size_t n = spec.shape.empty() ? 0 : shape_product(spec.shape);
    add_unit(std::move(spec), std::vector<double>(n, 0.0));
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < units_.size(); ++i) {
        if (units_[i].name == name) return i;
    }
    return std::nullopt;
}

Unit& ParamStore::at(std::string_view name) {
    auto idx = find(name);
    if (!idx) throw std::out_of_range("no unit named '" + std::string(name) + "'");
    return units_[*idx];
}

const Unit& ParamStore::at(std::string_view name) const {
    auto idx = find(name);
    if (!idx) throw std::out_of_range("no unit named '" + std::string(name) + "'");
    return units_[*idx];
}

std::size_t ParamStore::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& u : units_) n += u.data.size();
    return n;
}

bool ParamStore::congruent_with(const ParamStore& other) const noexcept {
    if (units_.size() != other.units_.size()) return false;
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const auto& a = units_[i];
        const auto& b = other.units_[i];
        if (a.name != b.name || a.shape != b.shape || a.kind != b.kind) return false;
    }
    return true;
}

std::vector<double> ParamStore::flatten() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& u : units_) out.insert(out.end(), u.data.begin(), u.data.end());
    return out;
}

bool ParamStore::all_finite() const noexcept {
    for (const auto& u : units_) {
        for (double v : u.data) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

void require_congruent(const ParamStore& a, const ParamStore& b, std::string_view context) {
    if (!a.congruent_with(b)) {
        throw CongruenceError(std::string(context) + ": stores are not congruent");
    }
}

bool bitwise_equal(const ParamStore& a, const ParamStore& b) noexcept {
    if (!a.congruent_with(b)) return false;
    for (std::size_t i = 0; i < a.unit_count(); ++i) {
        const auto& x = a.units()[i].data;
        const auto& y = b.units()[i].data;
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (std::bit_cast<std::uint64_t>(x[k]) != std::bit_cast<std::uint64_t>(y[k])) return false;
        }
    }
    return true;
}

ParamStore new_store(std::span<const UnitSpec> spec, const InitRule& init, std::uint64_t seed) {
    ParamStore store;
    for (const auto& s : spec) store.add_unit(s);
    for (std::size_t i = 0; i < store.unit_count(); ++i) {
        auto& unit = store.unit(i);
        if (unit.kind != UnitKind::Weight || init.kind == InitRule::Kind::Zeros) continue;
        const double bound = init.kind == InitRule::Kind::Uniform
                                 ? init.bound
                                 : 1.0 / std::sqrt(static_cast<double>(unit.shape.front()));
        KeyedRng rng(derive_seed(seed, "init"), i);
        for (double& v : unit.data) v = rng.uniform(-bound, bound);
    }
    return store;
}

std::string_view to_string(Granularity g) noexcept {
    switch (g) {
        case Granularity::LayerWise: return "lw";
        case Granularity::ChannelWise: return "cw";
        case Granularity::NeuronWise: return "nw";
    }
    return "lw";
}

Granularity parse_granularity(std::string_view name) {
    if (name == "lw" || name == "layer" || name == "layerwise") return Granularity::LayerWise;
    if (name == "cw" || name == "channel" || name == "channelwise") return Granularity::ChannelWise;
    if (name == "nw" || name == "neuron" || name == "neuronwise") return Granularity::NeuronWise;
    throw ConfigError("smoothing.granularity", "expected one of lw|cw|nw, got '" + std::string(name) + "'");
}

std::vector<SlotRef> enumerate_slots(const ParamStore& store, Granularity g) {
    std::vector<SlotRef> slots;
    for (std::size_t u = 0; u < store.unit_count(); ++u) {
        const auto& unit = store.units()[u];
        const std::size_t n = unit.size();
        switch (g) {
            case Granularity::LayerWise:
                slots.push_back({u, 0, n, 1});
                break;
            case Granularity::NeuronWise:
                for (std::size_t i = 0; i < n; ++i) slots.push_back({u, i, 1, 1});
                break;
            case Granularity::ChannelWise:
                if (unit.shape.size() < 2) {
                    for (std::size_t i = 0; i < n; ++i) slots.push_back({u, i, 1, 1});
                } else {
                    const auto c_out = static_cast<std::size_t>(unit.shape.back());
                    for (std::size_t j = 0; j < c_out; ++j) slots.push_back({u, j, n / c_out, c_out});
                }
                break;
        }
    }
    return slots;
}

double mse(const ParamStore& a, const ParamStore& b) {
    require_congruent(a, b, "mse");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.unit_count(); ++i) {
        const auto& x = a.units()[i].data;
        const auto& y = b.units()[i].data;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double d = x[k] - y[k];
            sum += d * d;
        }
        n += x.size();
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// ---- snapshot I/O ----------------------------------------------------------

std::string snapshot_to_json(const ParamStore& store) {
    using nlohmann::json;
    json units = json::array();
    for (const auto& u : store.units()) {
        json data = json::array();
        for (double v : u.data) {
            if (std::isnan(v)) {
                data.push_back("nan");
            } else if (std::isinf(v)) {
                data.push_back(v > 0 ? "inf" : "-inf");
            } else {
                data.push_back(v);
            }
        }
        units.push_back({{"name", u.name}, {"shape", u.shape}, {"kind", to_string(u.kind)}, {"data", std::move(data)}});
    }
    json doc = {{"version", 1}, {"units", std::move(units)}};
    return doc.dump() + "\n";
}

ParamStore snapshot_from_json(std::string_view text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("snapshot is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw FormatError("snapshot root must be an object");
    if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"].get<int>() != 1) {
        throw FormatError("snapshot version must be 1");
    }
    if (!doc.contains("units") || !doc["units"].is_array()) throw FormatError("snapshot 'units' must be an array");

    ParamStore store;
    for (const auto& ju : doc["units"]) {
        if (!ju.is_object()) throw FormatError("unit entry must be an object");
        for (const char* key : {"name", "shape", "kind", "data"}) {
            if (!ju.contains(key)) throw FormatError(std::string("unit entry missing '") + key + "'");
        }
        if (!ju["name"].is_string()) throw FormatError("unit name must be a string");
        if (!ju["shape"].is_array() || !ju["data"].is_array() || !ju["kind"].is_string()) {
            throw FormatError("unit '" + ju["name"].get<std::string>() + "' has malformed fields");
        }
        UnitSpec spec;
        spec.name = ju["name"].get<std::string>();
        for (const auto& d : ju["shape"]) {
            if (!d.is_number_integer()) throw FormatError("unit '" + spec.name + "' shape entries must be integers");
            spec.shape.push_back(d.get<std::int64_t>());
        }
        spec.kind = parse_unit_kind(ju["kind"].get<std::string>());

        std::vector<double> data;
        data.reserve(ju["data"].size());
        for (const auto& v : ju["data"]) {
            if (v.is_number()) {
                data.push_back(v.get<double>());
            } else if (v.is_string()) {
                const auto s = v.get<std::string>();
                if (s == "nan") data.push_back(std::nan(""));
                else if (s == "inf") data.push_back(HUGE_VAL);
                else if (s == "-inf") data.push_back(-HUGE_VAL);
                else throw FormatError("unit '" + spec.name + "' has non-numeric value '" + s + "'");
            } else {
                throw FormatError("unit '" + spec.name + "' has non-numeric value");
            }
        }
        try {
            store.add_unit(std::move(spec), std::move(data));
        } catch (const ConstructionError& e) {
            throw FormatError(std::string("snapshot does not match its header: ") + e.what());
        }
    }
    return store;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_snapshot(const ParamStore& store, const std::filesystem::path& path) {
    write_file_atomic(path, snapshot_to_json(store));
}

ParamStore load_snapshot(const std::filesystem::path& path) {
    return snapshot_from_json(read_file(path));
}

}  // namespace smoothkit
