#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace jocor {

/// Invalid widths, rates, class counts or experiment settings.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operand dimensions do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf reached a loss, gradient or parameter.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Labels out of range, empty batches, empty selections.
class DataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed IDX container. Carries the byte offset where parsing stopped.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

}  // namespace jocor
