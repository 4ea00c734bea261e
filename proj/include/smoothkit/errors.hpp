#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace smoothkit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid store / model construction request (duplicate names, bad dims).
class ConstructionError : public Error {
public:
    using Error::Error;
};

/// Two stores that must share name/shape/kind sequences do not.
class CongruenceError : public Error {
public:
    using Error::Error;
};

/// Malformed snapshot or metrics file.
class FormatError : public Error {
public:
    using Error::Error;
};

class MaskError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Configuration value out of range or of the wrong type. `field()` holds the
/// dotted config path of the offending entry, e.g. "smoothing.p".
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& detail)
        : Error(field + ": " + detail), field_(std::move(field)) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A training loss became non-finite.
class DivergenceError : public Error {
public:
    DivergenceError(std::uint64_t step, const std::string& detail)
        : Error("diverged at step " + std::to_string(step) + ": " + detail), step_(step) {}

    [[nodiscard]] std::uint64_t step() const noexcept { return step_; }

private:
    std::uint64_t step_;
};

}  // namespace smoothkit
